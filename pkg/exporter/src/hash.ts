import { createHash } from "node:crypto";

export type Side = "src" | "trg";

const SIDE_TAG: Record<Side, Buffer> = {
  src: Buffer.from([0x73]), // 's'
  trg: Buffer.from([0x74]), // 't'
};

/**
 * 32-byte content hash of one sentence: SHA-256 over a single side-tag
 * byte followed by the UTF-8 text. Must match the engine's hashing
 * exactly, since these bytes are the cache keys.
 */
export function contentHash(text: string, side: Side): Buffer {
  return createHash("sha256").update(SIDE_TAG[side]).update(Buffer.from(text, "utf-8")).digest();
}
