#!/usr/bin/env node
/** tve-export: render fixtures and export embedding files for the engine.
 *
 *   tve-export fixtures --out DIR [--pairs 20] [--frames 12] [--size 48] [--seed 1]
 *   tve-export export --frames-root DIR --captions FILE --out DIR
 *                     [--frames 12] [--tokens 32]
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Backbone } from "./backbone.js";
import { encodeEmbeddingFile, encodeManifest } from "./format.js";
import { buildManifest, exportTextTokens, exportVideoFrames } from "./exportJob.js";
import { renderFixtures } from "./render.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const next = argv[i + 1];
    if (next === undefined || next.startsWith("--")) {
      out.set(arg.slice(2), "true");
    } else {
      out.set(arg.slice(2), next);
      i++;
    }
  }
  return out;
}

function need(args: Map<string, string>, key: string): string {
  const value = args.get(key);
  if (!value) throw new Error(`missing required option --${key}`);
  return value;
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === "fixtures") {
    const args = parseArgs(rest);
    const fixture = renderFixtures({
      outDir: need(args, "out"),
      pairs: Number(args.get("pairs") ?? 20),
      frames: Number(args.get("frames") ?? 12),
      size: Number(args.get("size") ?? 48),
      seed: Number(args.get("seed") ?? 1),
    });
    console.log(`wrote ${fixture.framesRoot}`);
    console.log(`wrote ${fixture.captionsPath}`);
    return 0;
  }
  if (command === "export") {
    const args = parseArgs(rest);
    const outDir = need(args, "out");
    mkdirSync(outDir, { recursive: true });
    const job = {
      framesRoot: need(args, "frames-root"),
      captionsPath: need(args, "captions"),
      frames: Number(args.get("frames") ?? 12),
      tokens: Number(args.get("tokens") ?? 32),
      onUnreadable: (args.get("on-unreadable") ?? "abort") as "abort" | "skip",
      log: (line: string) => console.error(line),
    };
    const backbone = new Backbone();
    const videos = exportVideoFrames(job, backbone);
    const texts = exportTextTokens(job, backbone);
    const manifest = buildManifest(videos, texts);
    writeFileSync(join(outDir, "videos.tvem"), encodeEmbeddingFile(videos));
    writeFileSync(join(outDir, "texts.tvem"), encodeEmbeddingFile(texts));
    writeFileSync(join(outDir, "manifest.tsv"), encodeManifest(manifest));
    console.log(`wrote ${join(outDir, "videos.tvem")} (${videos.records.length} videos)`);
    console.log(`wrote ${join(outDir, "texts.tvem")} (${texts.records.length} captions)`);
    console.log(`wrote ${join(outDir, "manifest.tsv")} [backbone ${backbone.fingerprint}]`);
    return 0;
  }
  console.error("usage: tve-export <fixtures|export> [options]");
  return 2;
}

try {
  process.exit(main(process.argv.slice(2)));
} catch (err) {
  console.error(`error: ${(err as Error).message}`);
  process.exit(1);
}
