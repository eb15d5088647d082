import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";

import { crc32 } from "./crc32.js";

export const MAGIC = Buffer.from("EMBC", "ascii");
export const VERSION = 1;
export const KEY_BYTES = 32;

/**
 * Append-style writer for one embedding shard file:
 *
 *   "EMBC" | version u16 LE | model-id length u16 LE | model-id utf-8 |
 *   dim u32 LE | records...
 *
 * each record being [32-byte key hash | dim * f32 LE | crc32 LE of the
 * preceding bytes]. Everything little-endian regardless of host.
 */
export class ShardWriter {
  private chunks: Buffer[] = [];
  readonly recordSize: number;
  private records = 0;

  constructor(readonly modelId: string, readonly dim: number) {
    if (dim < 1) throw new Error(`dim must be >= 1, got ${dim}`);
    const idBytes = Buffer.from(modelId, "utf-8");
    if (idBytes.length > 0xffff) throw new Error("model id too long");
    const header = Buffer.alloc(8 + idBytes.length + 4);
    MAGIC.copy(header, 0);
    header.writeUInt16LE(VERSION, 4);
    header.writeUInt16LE(idBytes.length, 6);
    idBytes.copy(header, 8);
    header.writeUInt32LE(dim, 8 + idBytes.length);
    this.chunks.push(header);
    this.recordSize = KEY_BYTES + 4 * dim + 4;
  }

  add(keyHash: Buffer, vector: Float32Array): void {
    if (keyHash.length !== KEY_BYTES) throw new Error(`key hash must be ${KEY_BYTES} bytes`);
    if (vector.length !== this.dim) {
      throw new Error(`vector dim ${vector.length} does not match shard dim ${this.dim}`);
    }
    const payload = Buffer.alloc(KEY_BYTES + 4 * this.dim);
    keyHash.copy(payload, 0);
    for (let i = 0; i < this.dim; i++) {
      payload.writeFloatLE(vector[i], KEY_BYTES + 4 * i);
    }
    const tail = Buffer.alloc(4);
    tail.writeUInt32LE(crc32(payload), 0);
    this.chunks.push(payload, tail);
    this.records += 1;
  }

  get recordCount(): number {
    return this.records;
  }

  toBuffer(): Buffer {
    return Buffer.concat(this.chunks);
  }

  writeTo(path: string): void {
    mkdirSync(dirname(path), { recursive: true });
    writeFileSync(path, this.toBuffer());
  }
}

export interface ShardRecord {
  keyHash: Buffer;
  vector: Float32Array;
}

export interface ParsedShard {
  modelId: string;
  dim: number;
  records: ShardRecord[];
  trailingBytes: number;
}

/** Reader counterpart, used by tests to round-trip what the writer emits. */
export function readShard(path: string): ParsedShard {
  const buf = readFileSync(path);
  if (buf.length < 12 || !buf.subarray(0, 4).equals(MAGIC)) throw new Error(`${path}: bad magic`);
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const idLen = buf.readUInt16LE(6);
  const modelId = buf.subarray(8, 8 + idLen).toString("utf-8");
  const dim = buf.readUInt32LE(8 + idLen);
  const headerSize = 8 + idLen + 4;
  const recordSize = KEY_BYTES + 4 * dim + 4;
  const records: ShardRecord[] = [];
  let pos = headerSize;
  while (pos + recordSize <= buf.length) {
    const payload = buf.subarray(pos, pos + recordSize - 4);
    const stored = buf.readUInt32LE(pos + recordSize - 4);
    if (crc32(payload) !== stored) throw new Error(`${path}: checksum failure at offset ${pos}`);
    const vector = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      vector[i] = payload.readFloatLE(KEY_BYTES + 4 * i);
    }
    records.push({ keyHash: Buffer.from(payload.subarray(0, KEY_BYTES)), vector });
    pos += recordSize;
  }
  return { modelId, dim, records, trailingBytes: buf.length - pos };
}
