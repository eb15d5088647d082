import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { readMosesCorpus, readTsvCorpus, type ParallelPair } from "./corpus.js";
import { DimMismatchError, loadEncoder, type Encoder } from "./encoders.js";
import { contentHash, type Side } from "./hash.js";
import { validateManifest, type ExportManifest } from "./manifest.js";
import { ShardWriter } from "./shard.js";

export interface ExportSummary {
  model: string;
  dim: number;
  sides: Side[];
  pairs: number;
  recordsWritten: number;
  meanDiagonalSimilarity: number | null;
  shardFiles: string[];
}

function safeModelDir(modelId: string): string {
  const safe = modelId.replace(/[^A-Za-z0-9._-]/g, "_");
  return safe.length ? safe : "model";
}

function dot(a: Float32Array, b: Float32Array): number {
  let acc = 0;
  for (let i = 0; i < a.length; i++) acc += a[i] * b[i];
  return acc;
}

async function encodeAll(encoder: Encoder, texts: string[], batchSize: number): Promise<Float32Array[]> {
  const out: Float32Array[] = [];
  for (let start = 0; start < texts.length; start += batchSize) {
    const rows = await encoder.encode(texts.slice(start, start + batchSize));
    out.push(...rows);
  }
  return out;
}

/**
 * Encode a parallel corpus and write one shard per exported side into
 * outDir/<model>/<side>-00000.embc, records keyed by the side-tagged
 * content hash. Returns the summary that also lands in
 * outDir/export-summary.json.
 */
export async function exportEmbeddings(
  manifest: ExportManifest,
  sides: Side[] = ["src", "trg"],
): Promise<ExportSummary> {
  validateManifest(manifest);
  const pairs: ParallelPair[] =
    manifest.format === "moses"
      ? readMosesCorpus(manifest.corpusPath, manifest.trgCorpusPath!)
      : readTsvCorpus(manifest.corpusPath);

  const encoder = await loadEncoder(manifest.modelName, manifest.declaredDim, manifest.pooling);
  if (encoder.dim !== manifest.declaredDim) {
    throw new DimMismatchError(
      `encoder '${encoder.name}' emits dim ${encoder.dim}, manifest declares ${manifest.declaredDim}`,
    );
  }

  const modelDir = join(manifest.outDir, safeModelDir(manifest.modelName));
  mkdirSync(modelDir, { recursive: true });

  const bySide: Partial<Record<Side, Float32Array[]>> = {};
  const shardFiles: string[] = [];
  let written = 0;
  for (const side of sides) {
    const texts = pairs.map((p) => (side === "src" ? p.srcText : p.trgText));
    const vectors = await encodeAll(encoder, texts, manifest.batchSize);
    bySide[side] = vectors;
    const writer = new ShardWriter(manifest.modelName, manifest.declaredDim);
    const seen = new Set<string>();
    for (let i = 0; i < pairs.length; i++) {
      const key = contentHash(texts[i], side);
      const hex = key.toString("hex");
      if (seen.has(hex)) continue; // duplicate sentences share one record
      seen.add(hex);
      writer.add(key, vectors[i]);
    }
    const path = join(modelDir, `${side}-00000.embc`);
    writer.writeTo(path);
    shardFiles.push(path);
    written += writer.recordCount;
  }

  let meanDiag: number | null = null;
  if (bySide.src && bySide.trg) {
    let acc = 0;
    for (let i = 0; i < pairs.length; i++) acc += dot(bySide.src[i], bySide.trg[i]);
    meanDiag = pairs.length ? acc / pairs.length : 0;
  }

  const summary: ExportSummary = {
    model: manifest.modelName,
    dim: manifest.declaredDim,
    sides,
    pairs: pairs.length,
    recordsWritten: written,
    meanDiagonalSimilarity: meanDiag,
    shardFiles,
  };
  mkdirSync(manifest.outDir, { recursive: true });
  writeFileSync(
    join(manifest.outDir, "export-summary.json"),
    JSON.stringify({ manifest, summary }, null, 2) + "\n",
  );
  return summary;
}
