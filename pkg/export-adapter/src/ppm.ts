/** Minimal binary PPM (P6) reader and writer; the only image format the adapter needs. */

export type Image = {
  width: number;
  height: number;
  /** RGB triplets, row-major, 0..255 */
  pixels: Uint8Array;
};

export function decodePpm(data: Buffer): Image {
  let offset = 0;

  function token(): string {
    // skip whitespace and # comments
    for (;;) {
      while (offset < data.length && isSpace(data[offset])) offset++;
      if (offset < data.length && data[offset] === 0x23) {
        while (offset < data.length && data[offset] !== 0x0a) offset++;
        continue;
      }
      break;
    }
    const start = offset;
    while (offset < data.length && !isSpace(data[offset])) offset++;
    if (start === offset) throw new Error("ppm: truncated header");
    return data.subarray(start, offset).toString("ascii");
  }

  if (token() !== "P6") throw new Error("ppm: not a binary P6 file");
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0 && height > 0)) throw new Error("ppm: bad dimensions");
  if (maxval !== 255) throw new Error(`ppm: unsupported maxval ${maxval}`);
  offset++; // single whitespace byte after maxval
  const size = width * height * 3;
  if (data.length - offset < size) throw new Error("ppm: truncated pixel data");
  return { width, height, pixels: new Uint8Array(data.subarray(offset, offset + size)) };
}

export function encodePpm(image: Image): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  return Buffer.concat([header, Buffer.from(image.pixels)]);
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
