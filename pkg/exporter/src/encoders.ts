import { createHash } from "node:crypto";

export type Pooling = "mean" | "cls" | "model-default";

export class ModelLoadError extends Error {}
export class DimMismatchError extends Error {}

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  /** One unit-norm float32 vector per input text. */
  encode(texts: string[]): Promise<Float32Array[]>;
}

function normalizeToFloat32(values: number[]): Float32Array {
  let sumSq = 0;
  for (const v of values) sumSq += v * v;
  const norm = Math.sqrt(sumSq);
  if (norm < 1e-12) throw new Error("zero vector cannot be normalized");
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] / norm;
  return out;
}

/**
 * Deterministic stand-in encoder: a sentence's vector is derived from
 * SHA-256 run in counter mode over (encoder name, text), mapped to
 * [-1, 1) and normalized. No model weights, no randomness, identical
 * bytes on every platform; intended for tests, pipeline dry-runs, and
 * environments without model access.
 */
export class HashEncoder implements Encoder {
  readonly name: string;

  constructor(modelName: string, readonly dim: number) {
    this.name = modelName;
  }

  private derive(text: string): Float32Array {
    const seed = createHash("sha256").update(this.name, "utf-8").update(text, "utf-8").digest();
    const values: number[] = [];
    let counter = 0;
    while (values.length < this.dim) {
      const block = createHash("sha256").update(seed).update(String(counter), "ascii").digest();
      for (let off = 0; off + 4 <= block.length && values.length < this.dim; off += 4) {
        values.push(block.readUInt32LE(off) / 0x80000000 - 1.0);
      }
      counter += 1;
    }
    return normalizeToFloat32(values);
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) => this.derive(t));
  }
}

/**
 * Adapter over transformers.js feature extraction, when the package and
 * model weights are available locally. Pooling "model-default" maps to
 * mean pooling, the common convention for sentence encoders that do not
 * bundle their own pooling head.
 */
export class TransformersEncoder implements Encoder {
  private constructor(
    readonly name: string,
    readonly dim: number,
    private readonly pipe: (texts: string[], opts: object) => Promise<{ tolist(): number[][] }>,
    private readonly pooling: Pooling,
  ) {}

  static async load(modelName: string, pooling: Pooling = "model-default"): Promise<TransformersEncoder> {
    let transformers: any;
    try {
      transformers = await import("@huggingface/transformers" as string);
    } catch {
      try {
        transformers = await import("@xenova/transformers" as string);
      } catch (err) {
        throw new ModelLoadError(
          "no transformers.js runtime available; install @huggingface/transformers or use the hash encoder",
        );
      }
    }
    let pipe: any;
    try {
      pipe = await transformers.pipeline("feature-extraction", modelName);
    } catch (err) {
      throw new ModelLoadError(`cannot load model '${modelName}': ${err}`);
    }
    const probe = await pipe(["probe"], { pooling: pooling === "cls" ? "cls" : "mean", normalize: true });
    const dim = probe.tolist()[0].length;
    return new TransformersEncoder(modelName, dim, pipe, pooling);
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    const result = await this.pipe(texts, {
      pooling: this.pooling === "cls" ? "cls" : "mean",
      normalize: true,
    });
    return result.tolist().map((row) => normalizeToFloat32(row));
  }
}

export async function loadEncoder(modelName: string, dim: number, pooling: Pooling): Promise<Encoder> {
  if (modelName.startsWith("hash:")) {
    return new HashEncoder(modelName, dim);
  }
  const encoder = await TransformersEncoder.load(modelName, pooling);
  if (dim > 0 && encoder.dim !== dim) {
    throw new DimMismatchError(`model '${modelName}' emits dim ${encoder.dim}, manifest declares ${dim}`);
  }
  return encoder;
}
