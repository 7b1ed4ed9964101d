/** Fixture renderer: tiny videos of a colored shape drifting over a plain
 * background, written as PPM frames plus a caption file. Deterministic.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { SplitMix } from "./prng.js";
import { encodePpm, type Image } from "./ppm.js";

const COLORS: Record<string, [number, number, number]> = {
  red: [220, 40, 40],
  green: [40, 200, 60],
  blue: [50, 80, 220],
  yellow: [230, 220, 50],
  magenta: [210, 60, 200],
};
const SHAPES = ["square", "disc"] as const;
const BACKGROUNDS: Record<string, [number, number, number]> = {
  dark: [28, 28, 32],
  light: [215, 215, 210],
};

export type FixtureSpec = {
  outDir: string;
  pairs?: number;
  frames?: number;
  size?: number;
  seed?: number;
};

export type Fixture = {
  framesRoot: string;
  captionsPath: string;
  videoIds: string[];
};

export function renderFixtures(spec: FixtureSpec): Fixture {
  const pairs = spec.pairs ?? 20;
  const frames = spec.frames ?? 12;
  const size = spec.size ?? 48;
  const rng = new SplitMix(spec.seed ?? 1);

  const combos: Array<{ color: string; shape: (typeof SHAPES)[number]; background: string }> = [];
  for (const color of Object.keys(COLORS)) {
    for (const shape of SHAPES) {
      for (const background of Object.keys(BACKGROUNDS)) {
        combos.push({ color, shape, background });
      }
    }
  }
  if (pairs > combos.length) {
    throw new Error(`at most ${combos.length} distinct fixture videos available`);
  }

  const framesRoot = join(spec.outDir, "frames");
  mkdirSync(framesRoot, { recursive: true });
  const captionLines: string[] = [];
  const videoIds: string[] = [];

  for (let p = 0; p < pairs; p++) {
    const { color, shape, background } = combos[p];
    const videoId = `clip${String(p).padStart(3, "0")}`;
    const dir = join(framesRoot, videoId);
    mkdirSync(dir, { recursive: true });
    const direction = rng.nextInt(2) === 0 ? 1 : -1;
    const radius = size / 6;
    for (let f = 0; f < frames; f++) {
      const t = frames === 1 ? 0.5 : f / (frames - 1);
      const cx = size / 2 + direction * (t - 0.5) * size * 0.5;
      const cy = size / 2 + Math.sin(t * Math.PI) * size * 0.1;
      const image = renderFrame(size, COLORS[color], BACKGROUNDS[background], shape, cx, cy, radius);
      writeFileSync(join(dir, `${String(f).padStart(3, "0")}.ppm`), encodePpm(image));
    }
    const verb = direction > 0 ? "drifts right" : "drifts left";
    captionLines.push(`${videoId}\ta ${color} ${shape} ${verb} across a ${background} background`);
    videoIds.push(videoId);
  }

  const captionsPath = join(spec.outDir, "captions.tsv");
  writeFileSync(captionsPath, captionLines.join("\n") + "\n");
  return { framesRoot, captionsPath, videoIds };
}

export function renderFrame(
  size: number,
  color: [number, number, number],
  background: [number, number, number],
  shape: "square" | "disc",
  cx: number,
  cy: number,
  radius: number,
): Image {
  const pixels = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const inside =
        shape === "square"
          ? Math.abs(x - cx) <= radius && Math.abs(y - cy) <= radius
          : (x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2;
      const [r, g, b] = inside ? color : background;
      const o = (y * size + x) * 3;
      pixels[o] = r;
      pixels[o + 1] = g;
      pixels[o + 2] = b;
    }
  }
  return { width: size, height: size, pixels };
}
