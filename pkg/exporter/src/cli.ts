#!/usr/bin/env node
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import type { Pooling } from "./encoders.js";
import { exportEmbeddings } from "./export.js";
import type { Side } from "./hash.js";
import type { ExportManifest } from "./manifest.js";

const USAGE = `embed-exporter: encode a parallel corpus into engine-loadable shards

  export --model NAME --corpus PATH [--trg-corpus PATH --format moses]
         --side src|trg|both --out DIR [--dim N] [--pool mean|cls|default]
         [--batch N]

Model names starting with "hash:" select the built-in deterministic
encoder (requires --dim); anything else is loaded via transformers.js.
`;

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== "export") {
    process.stderr.write(USAGE);
    return 2;
  }
  const { values } = parseArgs({
    args: argv.slice(1),
    options: {
      model: { type: "string" },
      corpus: { type: "string" },
      "trg-corpus": { type: "string" },
      format: { type: "string", default: "tsv" },
      side: { type: "string", default: "both" },
      out: { type: "string" },
      dim: { type: "string", default: "0" },
      pool: { type: "string", default: "default" },
      batch: { type: "string", default: "32" },
    },
  });
  if (!values.model || !values.corpus || !values.out) {
    process.stderr.write(USAGE);
    return 2;
  }
  const poolFlag = values.pool === "default" ? "model-default" : values.pool;
  const sides: Side[] = values.side === "both" ? ["src", "trg"] : [values.side as Side];
  const manifest: ExportManifest = {
    modelName: values.model,
    declaredDim: Number(values.dim),
    pooling: poolFlag as Pooling,
    normalize: true,
    corpusPath: values.corpus,
    trgCorpusPath: values["trg-corpus"],
    format: values.format as "tsv" | "moses",
    outDir: values.out,
    batchSize: Number(values.batch),
  };
  try {
    const summary = await exportEmbeddings(manifest, sides);
    process.stdout.write(JSON.stringify(summary, null, 2) + "\n");
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
