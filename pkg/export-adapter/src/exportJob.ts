/** Export pipeline: frame-image directories + a caption file in, engine-format
 * embedding files + manifest out.
 *
 * Video records use uniform temporal sampling down to the frame budget and
 * pad by repeating the last frame when fewer are available (valid_len keeps
 * the true count). Text records are [CLS], one row per word, [SEP], truncated
 * to the token budget; row 0 is the global representation. The backbone
 * fingerprint is appended to every id for provenance.
 */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";

import { Backbone, EMBED_DIM } from "./backbone.js";
import {
  KIND_TEXT,
  KIND_VIDEO,
  type EmbeddingFile,
  type EmbeddingRecord,
  type ManifestEntry,
} from "./format.js";
import { decodePpm } from "./ppm.js";

export type ExportJob = {
  framesRoot: string;
  captionsPath: string;
  frames?: number; // default 12
  tokens?: number; // default 32
  dim?: number; // default 512 (the backbone's output width)
  onUnreadable?: "abort" | "skip";
  log?: (line: string) => void;
};

export type CaptionEntry = { videoId: string; caption: string };

export function readCaptions(path: string): CaptionEntry[] {
  const out: CaptionEntry[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (const [index, line] of lines.entries()) {
    if (!line.trim()) continue;
    const tab = line.indexOf("\t");
    if (tab < 0) throw new Error(`captions line ${index + 1}: expected 'id<TAB>caption'`);
    out.push({ videoId: line.slice(0, tab), caption: line.slice(tab + 1) });
  }
  return out;
}

function settings(job: ExportJob) {
  const frames = job.frames ?? 12;
  const tokens = job.tokens ?? 32;
  const dim = job.dim ?? EMBED_DIM;
  if (dim !== EMBED_DIM) {
    throw new Error(`backbone produces ${EMBED_DIM}-d embeddings, requested ${dim}`);
  }
  return { frames, tokens, dim };
}

function uniformIndices(available: number, wanted: number): number[] {
  if (available <= wanted) return [...Array(available).keys()];
  const out: number[] = [];
  for (let i = 0; i < wanted; i++) {
    out.push(Math.round((i * (available - 1)) / (wanted - 1)));
  }
  return out;
}

export function exportVideoFrames(job: ExportJob, backbone: Backbone): EmbeddingFile {
  const { frames, dim } = settings(job);
  const log = job.log ?? (() => {});
  const records: EmbeddingRecord[] = [];
  const videoDirs = readdirSync(job.framesRoot, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  for (const videoId of videoDirs) {
    const dir = join(job.framesRoot, videoId);
    const frameFiles = readdirSync(dir).filter((f) => f.endsWith(".ppm")).sort();
    const embeddings: Float64Array[] = [];
    for (const file of frameFiles) {
      try {
        embeddings.push(backbone.embedImage(decodePpm(readFileSync(join(dir, file)))));
      } catch (err) {
        if ((job.onUnreadable ?? "abort") === "abort") {
          throw new Error(`unreadable frame ${join(dir, file)}: ${(err as Error).message}`);
        }
        log(`skipping unreadable frame ${join(dir, file)}`);
      }
    }
    if (embeddings.length === 0) throw new Error(`video ${videoId}: no readable frames`);
    const picked = uniformIndices(embeddings.length, frames).map((i) => embeddings[i]);
    const validLen = picked.length;
    while (picked.length < frames) picked.push(picked[picked.length - 1]); // repeat last frame
    const values = new Float32Array(frames * dim);
    picked.forEach((row, i) => values.set(Float32Array.from(row), i * dim));
    records.push({ id: `${videoId}#${backbone.fingerprint}`, validLen, values });
  }
  return { kind: KIND_VIDEO, seqLen: frames, dim, records };
}

export function exportTextTokens(job: ExportJob, backbone: Backbone): EmbeddingFile {
  const { tokens, dim } = settings(job);
  const records: EmbeddingRecord[] = [];
  for (const { videoId, caption } of readCaptions(job.captionsPath)) {
    if (!caption.trim()) throw new Error(`empty caption for ${videoId}`);
    const { cls, wordRows } = backbone.embedCaption(caption);
    const kept = wordRows.slice(0, tokens - 2); // room for [CLS] and [SEP]
    const rows = [cls, ...kept, backbone.sepAnchor];
    const validLen = rows.length;
    const values = new Float32Array(tokens * dim);
    rows.forEach((row, i) => values.set(Float32Array.from(row), i * dim));
    records.push({ id: `cap-${videoId}#${backbone.fingerprint}`, validLen, values });
  }
  return { kind: KIND_TEXT, seqLen: tokens, dim, records };
}

export function buildManifest(
  videos: EmbeddingFile,
  texts: EmbeddingFile,
  split: ManifestEntry["split"] = "test",
): ManifestEntry[] {
  const videoIds = new Set(videos.records.map((r) => r.id));
  const entries: ManifestEntry[] = [];
  for (const record of texts.records) {
    const videoId = record.id.replace(/^cap-/, "");
    if (!videoIds.has(videoId)) throw new Error(`caption ${record.id} has no video`);
    entries.push({ textId: record.id, videoId, split });
  }
  return entries;
}
