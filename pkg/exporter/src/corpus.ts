import { readFileSync } from "node:fs";

export interface ParallelPair {
  id: number;
  srcText: string;
  trgText: string;
}

export interface CorpusStats {
  read: number;
  skipped: number;
}

function readLines(path: string): string[] {
  const text = readFileSync(path, "utf-8");
  const lines = text.split("\n");
  if (lines.length && lines[lines.length - 1] === "") lines.pop();
  return lines;
}

/** One source<TAB>target pair per line; malformed lines are skipped. */
export function readTsvCorpus(path: string, stats?: CorpusStats): ParallelPair[] {
  const pairs: ParallelPair[] = [];
  let skipped = 0;
  for (const line of readLines(path)) {
    const parts = line.split("\t");
    if (parts.length !== 2 || !parts[0] || !parts[1]) {
      skipped += 1;
      continue;
    }
    pairs.push({ id: pairs.length, srcText: parts[0], trgText: parts[1] });
  }
  if (stats) {
    stats.read = pairs.length;
    stats.skipped = skipped;
  }
  return pairs;
}

/** Two aligned files with equal line counts. */
export function readMosesCorpus(srcPath: string, trgPath: string, stats?: CorpusStats): ParallelPair[] {
  const src = readLines(srcPath);
  const trg = readLines(trgPath);
  if (src.length !== trg.length) {
    throw new Error(`aligned files disagree: ${srcPath} has ${src.length} lines, ${trgPath} has ${trg.length}`);
  }
  const pairs: ParallelPair[] = [];
  let skipped = 0;
  for (let i = 0; i < src.length; i++) {
    if (!src[i] || !trg[i]) {
      skipped += 1;
      continue;
    }
    pairs.push({ id: pairs.length, srcText: src[i], trgText: trg[i] });
  }
  if (stats) {
    stats.read = pairs.length;
    stats.skipped = skipped;
  }
  return pairs;
}
