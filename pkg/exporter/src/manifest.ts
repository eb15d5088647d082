import type { Pooling } from "./encoders.js";

export interface ExportManifest {
  modelName: string;
  declaredDim: number;
  pooling: Pooling;
  /** Vectors are always stored unit-norm; false is rejected outright. */
  normalize: boolean;
  corpusPath: string;
  trgCorpusPath?: string;
  format: "tsv" | "moses";
  outDir: string;
  batchSize: number;
}

export class ManifestError extends Error {}

export function validateManifest(manifest: ExportManifest): ExportManifest {
  if (!manifest.modelName) throw new ManifestError("modelName is required");
  if (!Number.isInteger(manifest.declaredDim) || manifest.declaredDim < 1) {
    throw new ManifestError(`declaredDim must be a positive integer, got ${manifest.declaredDim}`);
  }
  if (!["mean", "cls", "model-default"].includes(manifest.pooling)) {
    throw new ManifestError(`unknown pooling '${manifest.pooling}'`);
  }
  if (manifest.normalize !== true) {
    throw new ManifestError("normalize must be true: the shard format stores unit-norm vectors only");
  }
  if (!manifest.corpusPath) throw new ManifestError("corpusPath is required");
  if (manifest.format === "moses" && !manifest.trgCorpusPath) {
    throw new ManifestError("moses format needs trgCorpusPath");
  }
  if (!manifest.outDir) throw new ManifestError("outDir is required");
  if (!Number.isInteger(manifest.batchSize) || manifest.batchSize < 1) {
    throw new ManifestError(`batchSize must be a positive integer, got ${manifest.batchSize}`);
  }
  return manifest;
}
