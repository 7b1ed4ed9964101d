/** Pinned deterministic image-text backbone.
 *
 * No pretrained weights are downloadable in the build environment, so the
 * adapter ships a tiny self-contained backbone: handcrafted visual features
 * (color fractions, foreground shape statistics, background brightness, a
 * coarse layout grid) and caption words are projected onto one shared set of
 * seeded concept anchors, which is what keeps the two modalities aligned.
 * Everything is a pure function of BACKBONE_SEED; the weight fingerprint is
 * recorded in every exported id for provenance.
 */

import { SplitMix, fingerprintFloats } from "./prng.js";
import type { Image } from "./ppm.js";

export const EMBED_DIM = 512;
export const BACKBONE_SEED = 0x54564531; // "TVE1"

const COLOR_PROTOTYPES: Record<string, [number, number, number]> = {
  red: [220, 40, 40],
  green: [40, 200, 60],
  blue: [50, 80, 220],
  yellow: [230, 220, 50],
  magenta: [210, 60, 200],
  cyan: [60, 210, 210],
};

const SHAPE_WORDS = ["square", "disc"];
const SCENE_WORDS = ["dark", "light"];
const FILLER_ANCHORED = ["background", "moves", "across", "drifts"];

export const VOCABULARY = [
  ...Object.keys(COLOR_PROTOTYPES),
  ...SHAPE_WORDS,
  ...SCENE_WORDS,
  ...FILLER_ANCHORED,
];

const GRID = 4;
const SATURATION_THRESHOLD = 60;

function normalize(v: Float64Array): Float64Array {
  let norm = 0;
  for (const x of v) norm += x * x;
  norm = Math.sqrt(norm);
  if (norm > 1e-12) for (let i = 0; i < v.length; i++) v[i] /= norm;
  return v;
}

function addScaled(target: Float64Array, source: Float64Array, scale: number): void {
  for (let i = 0; i < target.length; i++) target[i] += scale * source[i];
}

export class Backbone {
  readonly anchors = new Map<string, Float64Array>();
  readonly sepAnchor: Float64Array;
  readonly gridWeights: Float64Array[]; // GRID*GRID*3 rows of EMBED_DIM
  readonly fingerprint: string;

  constructor(seed: number = BACKBONE_SEED) {
    const rng = new SplitMix(seed);
    const all: number[] = [];
    for (const word of VOCABULARY) {
      const anchor = new Float64Array(EMBED_DIM);
      for (let i = 0; i < EMBED_DIM; i++) anchor[i] = rng.nextGaussian();
      normalize(anchor);
      this.anchors.set(word, anchor);
      all.push(...anchor);
    }
    this.sepAnchor = new Float64Array(EMBED_DIM);
    for (let i = 0; i < EMBED_DIM; i++) this.sepAnchor[i] = rng.nextGaussian();
    normalize(this.sepAnchor);
    this.gridWeights = [];
    for (let r = 0; r < GRID * GRID * 3; r++) {
      const row = new Float64Array(EMBED_DIM);
      for (let i = 0; i < EMBED_DIM; i++) row[i] = rng.nextGaussian() / Math.sqrt(EMBED_DIM);
      this.gridWeights.push(row);
    }
    this.fingerprint = fingerprintFloats(all);
  }

  /** Deterministic direction for out-of-vocabulary words. */
  wordEmbedding(word: string): Float64Array {
    const known = this.anchors.get(word);
    if (known) return known;
    let h = 0;
    for (const ch of word) h = (Math.imul(h, 31) + ch.charCodeAt(0)) >>> 0;
    const rng = new SplitMix(BigInt(BACKBONE_SEED) * 1000003n + BigInt(h));
    const v = new Float64Array(EMBED_DIM);
    for (let i = 0; i < EMBED_DIM; i++) v[i] = rng.nextGaussian();
    return normalize(v);
  }

  embedImage(image: Image): Float64Array {
    const { width, height, pixels } = image;
    const colorCounts = new Map<string, number>(Object.keys(COLOR_PROTOTYPES).map((c) => [c, 0]));
    let foreground = 0;
    let backgroundBrightness = 0;
    let backgroundCount = 0;
    let minX = width, maxX = -1, minY = height, maxY = -1;

    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const o = (y * width + x) * 3;
        const r = pixels[o], g = pixels[o + 1], b = pixels[o + 2];
        const saturation = Math.max(r, g, b) - Math.min(r, g, b);
        if (saturation > SATURATION_THRESHOLD) {
          foreground++;
          let best = "", bestDist = Infinity;
          for (const [name, [pr, pg, pb]] of Object.entries(COLOR_PROTOTYPES)) {
            const d = (r - pr) ** 2 + (g - pg) ** 2 + (b - pb) ** 2;
            if (d < bestDist) {
              bestDist = d;
              best = name;
            }
          }
          colorCounts.set(best, (colorCounts.get(best) ?? 0) + 1);
          if (x < minX) minX = x;
          if (x > maxX) maxX = x;
          if (y < minY) minY = y;
          if (y > maxY) maxY = y;
        } else {
          backgroundBrightness += (r + g + b) / 3;
          backgroundCount++;
        }
      }
    }

    const out = new Float64Array(EMBED_DIM);
    if (foreground > 0) {
      for (const [name, count] of colorCounts) {
        if (count > 0) addScaled(out, this.anchors.get(name)!, count / foreground);
      }
      const boxArea = (maxX - minX + 1) * (maxY - minY + 1);
      const fill = foreground / boxArea;
      // a filled square covers its bounding box; a disc covers ~pi/4 of it
      const squareness = Math.min(Math.max((fill - 0.7) / 0.25, 0), 1);
      addScaled(out, this.anchors.get("square")!, 0.8 * squareness);
      addScaled(out, this.anchors.get("disc")!, 0.8 * (1 - squareness));
    }
    if (backgroundCount > 0) {
      const bright = backgroundBrightness / backgroundCount / 255;
      addScaled(out, this.anchors.get("light")!, 0.5 * bright);
      addScaled(out, this.anchors.get("dark")!, 0.5 * (1 - bright));
    }
    // coarse layout grid keeps frames of a moving object distinct
    const grid = this.gridFeatures(image);
    for (let f = 0; f < grid.length; f++) addScaled(out, this.gridWeights[f], 0.3 * grid[f]);
    return normalize(out);
  }

  private gridFeatures(image: Image): Float64Array {
    const { width, height, pixels } = image;
    const features = new Float64Array(GRID * GRID * 3);
    const counts = new Float64Array(GRID * GRID);
    for (let y = 0; y < height; y++) {
      const gy = Math.min(GRID - 1, Math.floor((y * GRID) / height));
      for (let x = 0; x < width; x++) {
        const gx = Math.min(GRID - 1, Math.floor((x * GRID) / width));
        const cell = gy * GRID + gx;
        const o = (y * width + x) * 3;
        features[cell * 3] += pixels[o];
        features[cell * 3 + 1] += pixels[o + 1];
        features[cell * 3 + 2] += pixels[o + 2];
        counts[cell]++;
      }
    }
    for (let cell = 0; cell < counts.length; cell++) {
      for (let ch = 0; ch < 3; ch++) features[cell * 3 + ch] /= counts[cell] * 255;
    }
    return features;
  }

  /** Token-level caption embedding: [CLS], one row per word, [SEP]. */
  embedCaption(caption: string): { cls: Float64Array; wordRows: Float64Array[] } {
    const words = tokenize(caption);
    if (words.length === 0) throw new Error("empty caption");
    const cls = new Float64Array(EMBED_DIM);
    const wordRows: Float64Array[] = [];
    for (const word of words) {
      const emb = this.wordEmbedding(word);
      wordRows.push(emb);
      addScaled(cls, emb, this.anchors.has(word) ? 1.0 : 0.2);
    }
    return { cls: normalize(cls), wordRows };
  }
}

export function tokenize(caption: string): string[] {
  return caption
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((w) => w.length > 0);
}
