import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { HashEncoder } from "../src/encoders.js";
import { exportEmbeddings } from "../src/export.js";
import { contentHash } from "../src/hash.js";
import { validateManifest, ManifestError, type ExportManifest } from "../src/manifest.js";
import { readShard } from "../src/shard.js";

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "exporter-e2e-"));
}

function writeCorpus(dir: string, n = 10): string {
  const path = join(dir, "corpus.tsv");
  const lines = Array.from({ length: n }, (_, i) => `source sentence ${i}\ttarget sentence ${i}`);
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

function manifestFor(dir: string, corpus: string, overrides: Partial<ExportManifest> = {}): ExportManifest {
  return {
    modelName: "hash:test-encoder",
    declaredDim: 16,
    pooling: "mean",
    normalize: true,
    corpusPath: corpus,
    format: "tsv",
    outDir: join(dir, "out"),
    batchSize: 4,
    ...overrides,
  };
}

describe("manifest validation", () => {
  it("rejects normalize=false", () => {
    const dir = tmp();
    const manifest = manifestFor(dir, writeCorpus(dir), { normalize: false as unknown as true });
    expect(() => validateManifest(manifest)).toThrow(ManifestError);
  });

  it("rejects nonsense dims and pooling", () => {
    const dir = tmp();
    const corpus = writeCorpus(dir);
    expect(() => validateManifest(manifestFor(dir, corpus, { declaredDim: 0 }))).toThrow(ManifestError);
    expect(() =>
      validateManifest(manifestFor(dir, corpus, { pooling: "max" as unknown as "mean" })),
    ).toThrow(ManifestError);
  });
});

describe("HashEncoder", () => {
  it("emits unit-norm vectors of the requested dim", async () => {
    const enc = new HashEncoder("hash:m", 32);
    const [vec] = await enc.encode(["some sentence"]);
    expect(vec.length).toBe(32);
    let norm = 0;
    for (const v of vec) norm += v * v;
    expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-5);
  });

  it("is deterministic and text-sensitive", async () => {
    const enc = new HashEncoder("hash:m", 16);
    const [a1] = await enc.encode(["alpha"]);
    const [a2] = await enc.encode(["alpha"]);
    const [b] = await enc.encode(["beta"]);
    expect(Array.from(a1)).toEqual(Array.from(a2));
    expect(Array.from(a1)).not.toEqual(Array.from(b));
  });
});

describe("exportEmbeddings", () => {
  it("writes one record per pair per side, keyed by content hash", async () => {
    const dir = tmp();
    const summary = await exportEmbeddings(manifestFor(dir, writeCorpus(dir, 10)));
    expect(summary.pairs).toBe(10);
    expect(summary.recordsWritten).toBe(20);
    expect(summary.shardFiles).toHaveLength(2);
    const src = readShard(summary.shardFiles[0]);
    expect(src.records).toHaveLength(10);
    expect(src.records[3].keyHash.equals(contentHash("source sentence 3", "src"))).toBe(true);
    const summaryDoc = JSON.parse(readFileSync(join(dir, "out", "export-summary.json"), "utf-8"));
    expect(summaryDoc.summary.recordsWritten).toBe(20);
  });

  it("reports mean diagonal similarity when both sides export", async () => {
    const dir = tmp();
    const summary = await exportEmbeddings(manifestFor(dir, writeCorpus(dir, 6)));
    expect(summary.meanDiagonalSimilarity).not.toBeNull();
    expect(Math.abs(summary.meanDiagonalSimilarity!)).toBeLessThan(0.6); // unrelated hash vectors
  });

  it("deduplicates repeated sentences within a side", async () => {
    const dir = tmp();
    const corpus = join(dir, "dup.tsv");
    writeFileSync(corpus, "same\tx\nsame\ty\n");
    const summary = await exportEmbeddings(manifestFor(dir, corpus));
    const src = readShard(summary.shardFiles[0]);
    expect(src.records).toHaveLength(1);
    const trg = readShard(summary.shardFiles[1]);
    expect(trg.records).toHaveLength(2);
  });

  it("is byte-identical across repeated exports", async () => {
    const dir = tmp();
    const corpus = writeCorpus(dir, 8);
    const first = await exportEmbeddings(manifestFor(dir, corpus, { outDir: join(dir, "o1") }));
    const second = await exportEmbeddings(manifestFor(dir, corpus, { outDir: join(dir, "o2") }));
    for (let i = 0; i < first.shardFiles.length; i++) {
      expect(readFileSync(first.shardFiles[i]).equals(readFileSync(second.shardFiles[i]))).toBe(true);
    }
  });

  it("moses corpora export like tsv ones", async () => {
    const dir = tmp();
    writeFileSync(join(dir, "s.txt"), "eins\nzwei\n");
    writeFileSync(join(dir, "t.txt"), "one\ntwo\n");
    const summary = await exportEmbeddings(
      manifestFor(dir, join(dir, "s.txt"), {
        format: "moses",
        trgCorpusPath: join(dir, "t.txt"),
      }),
    );
    expect(summary.pairs).toBe(2);
    expect(summary.recordsWritten).toBe(4);
  });
});
