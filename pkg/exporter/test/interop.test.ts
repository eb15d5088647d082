import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { exportEmbeddings } from "../src/export.js";
import type { ExportManifest } from "../src/manifest.js";

/**
 * Cross-component checks: everything here talks to the selection engine
 * through its public surfaces only (the shard format and the CLI).
 */

const PYTHON = process.env.LEARNSEL_PYTHON ?? "python3";

function engineAvailable(): boolean {
  try {
    execFileSync(PYTHON, ["-c", "import learnsel"], { stdio: "pipe" });
    return true;
  } catch {
    return false;
  }
}

const HAVE_ENGINE = engineAvailable();

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "interop-"));
}

function writeCorpus(dir: string, n = 10): string {
  const path = join(dir, "corpus.tsv");
  const lines = Array.from({ length: n }, (_, i) => `source sentence ${i}\ttarget sentence ${i}`);
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

function runEngine(args: string[]): { stdout: string; code: number } {
  try {
    const stdout = execFileSync(PYTHON, ["-m", "learnsel", ...args], { encoding: "utf-8" });
    return { stdout, code: 0 };
  } catch (err: any) {
    return { stdout: String(err.stdout ?? ""), code: err.status ?? 1 };
  }
}

function manifestFor(model: string, dim: number, corpus: string, outDir: string): ExportManifest {
  return {
    modelName: model,
    declaredDim: dim,
    pooling: "mean",
    normalize: true,
    corpusPath: corpus,
    format: "tsv",
    outDir,
    batchSize: 4,
  };
}

describe.skipIf(!HAVE_ENGINE)("engine interop", () => {
  it("exported shards pass the engine's cache verify with zero failures", async () => {
    const dir = tmp();
    const corpus = writeCorpus(dir);
    await exportEmbeddings(manifestFor("hash:interop-ref", 16, corpus, join(dir, "shards")));
    const { stdout, code } = runEngine(["cache", "verify", "--cache-dir", join(dir, "shards")]);
    expect(code).toBe(0);
    const report = JSON.parse(stdout);
    expect(report.checksum_failures).toBe(0);
    expect(report.unreadable_shards).toBe(0);
    expect(report.records).toBe(20);
    expect(report.ok).toBe(true);
  });

  it("a 10-pair export scores end-to-end through select", async () => {
    const dir = tmp();
    const corpus = writeCorpus(dir, 10);
    // learner and reference at different dims, per the heterogeneous
    // reference-model support.
    await exportEmbeddings(manifestFor("hash:interop-learner", 24, corpus, join(dir, "shards")));
    await exportEmbeddings(manifestFor("hash:interop-ref", 16, corpus, join(dir, "shards")));

    const out = join(dir, "out");
    const ini = join(dir, "run.ini");
    writeFileSync(
      ini,
      [
        "[selection]",
        "super_batch_size = 8",
        "filter_ratio = 0.5",
        "n_chunks = 2",
        "seed = 3",
        "strategy = joint",
        "",
        "[models]",
        "learner_id = hash:interop-learner",
        "learner_dim = 24",
        "learner_provider = shards",
        `learner_shard_dir = ${join(dir, "shards")}`,
        "reference_id = hash:interop-ref",
        "reference_dim = 16",
        "reference_provider = shards",
        `reference_shard_dir = ${join(dir, "shards")}`,
        "",
        "[cache]",
        "enabled = true",
        `dir = ${join(dir, "cache")}`,
        "",
        "[io]",
        `corpus = ${corpus}`,
        "format = tsv",
        `out_dir = ${out}`,
        "",
      ].join("\n"),
    );
    const { code } = runEngine(["select", "--config", ini]);
    expect(code).toBe(0);
    expect(existsSync(join(out, "selections.jsonl"))).toBe(true);
    const lines = readFileSync(join(out, "selections.jsonl"), "utf-8").trim().split("\n");
    expect(lines).toHaveLength(2); // batch of 8, then a 2-pair passthrough tail
    const first = JSON.parse(lines[0]);
    expect(first.selected_ids).toHaveLength(4);
    expect(first.diag_scores).toHaveLength(4);
    const tail = JSON.parse(lines[1]);
    expect(tail.selected_ids).toEqual([8, 9]);
    expect(tail.chunk_of).toEqual([-1, -1]);
    const report = JSON.parse(readFileSync(join(out, "report.json"), "utf-8"));
    expect(report.samples_trained).toBe(6);
    // the engine's own cache filled from our shards and must verify too
    const verify = runEngine(["cache", "verify", "--cache-dir", join(dir, "cache")]);
    expect(verify.code).toBe(0);
  });
});

describe("engine availability", () => {
  it("engine is importable in this environment", () => {
    expect(HAVE_ENGINE).toBe(true);
  });
});
