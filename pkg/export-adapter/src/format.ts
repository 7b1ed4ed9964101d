/** The engine's binary embedding file layout, implemented bit-exactly.
 *
 * Little-endian, no padding:
 *   "TVEM" | version u32 | kind u32 | count u32 | seq_len u32 | dim u32
 *   per record: id_len u16 | id utf-8 | valid_len u16 | seq_len*dim float32
 */

export const MAGIC = "TVEM";
export const VERSION = 1;
export const KIND_VIDEO = 0;
export const KIND_TEXT = 1;

export type EmbeddingRecord = {
  id: string;
  validLen: number;
  /** seqLen * dim values, row-major */
  values: Float32Array;
};

export type EmbeddingFile = {
  kind: number;
  seqLen: number;
  dim: number;
  records: EmbeddingRecord[];
};

export function encodeEmbeddingFile(file: EmbeddingFile): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(24);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(file.kind, 8);
  header.writeUInt32LE(file.records.length, 12);
  header.writeUInt32LE(file.seqLen, 16);
  header.writeUInt32LE(file.dim, 20);
  chunks.push(header);

  const expected = file.seqLen * file.dim;
  for (const record of file.records) {
    if (record.values.length !== expected) {
      throw new Error(
        `record ${record.id}: ${record.values.length} values, expected ${expected}`,
      );
    }
    if (record.validLen < 0 || record.validLen > file.seqLen) {
      throw new Error(`record ${record.id}: valid_len ${record.validLen} out of range`);
    }
    const idBytes = Buffer.from(record.id, "utf-8");
    const head = Buffer.alloc(2 + idBytes.length + 2);
    head.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(head, 2);
    head.writeUInt16LE(record.validLen, 2 + idBytes.length);
    chunks.push(head);
    const payload = Buffer.alloc(expected * 4);
    for (let i = 0; i < expected; i++) payload.writeFloatLE(record.values[i], i * 4);
    chunks.push(payload);
  }
  return Buffer.concat(chunks);
}

/** Reader used by the adapter's own tests; the engine is the authority. */
export function decodeEmbeddingFile(data: Buffer): EmbeddingFile {
  if (data.length < 24 || data.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("not an embedding file");
  }
  const version = data.readUInt32LE(4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const kind = data.readUInt32LE(8);
  const count = data.readUInt32LE(12);
  const seqLen = data.readUInt32LE(16);
  const dim = data.readUInt32LE(20);
  let offset = 24;
  const records: EmbeddingRecord[] = [];
  for (let i = 0; i < count; i++) {
    const idLen = data.readUInt16LE(offset);
    offset += 2;
    const id = data.toString("utf-8", offset, offset + idLen);
    offset += idLen;
    const validLen = data.readUInt16LE(offset);
    offset += 2;
    const values = new Float32Array(seqLen * dim);
    for (let j = 0; j < values.length; j++) values[j] = data.readFloatLE(offset + j * 4);
    offset += values.length * 4;
    records.push({ id, validLen, values });
  }
  if (offset !== data.length) throw new Error("trailing bytes");
  return { kind, seqLen, dim, records };
}

export type ManifestEntry = {
  textId: string;
  videoId: string;
  split: "train" | "val" | "test";
};

export function encodeManifest(entries: ManifestEntry[]): string {
  return entries.map((e) => `${e.textId}\t${e.videoId}\t${e.split}`).join("\n") + "\n";
}
