"""Content-addressed, persistent embedding store.

Reference-model vectors are computed once per sentence and reused across
super-batches, epochs, and runs. Vectors are keyed by (model_id,
content_hash) where the hash already encodes which side of the pair the
text came from.

On-disk layout: a directory tree of append-only shard files, one
subdirectory per model. Each ``*.embc`` shard is

    magic  "EMBC"                     4 bytes
    version                           u16 LE (currently 1)
    model_id                          u16 LE length + UTF-8 bytes
    dim                               u32 LE
    records                           fixed size, repeated:
        key hash                      32 bytes
        vector                        dim * f32 LE
        checksum                      CRC32 of hash+vector, u32 LE

plus a rebuildable ``index.json`` mapping key hashes to (shard, record)
positions. Losing or corrupting the index is harmless; it is rebuilt by
scanning shard headers and record hashes. A torn trailing record (write
interrupted mid-append) is treated as uncommitted and ignored on open.

Concurrency contract: many readers, one writer. Appends happen in a
single write() call per record, so readers never observe a partially
written record within the committed region.
"""
from __future__ import annotations

import json
import struct
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConflictingVector, CorruptShard, DimensionMismatch, NORM_TOLERANCE, ValueOutOfRange

# Spec'd cache error name; the condition is the shared dimensional one.
DimMismatch = DimensionMismatch

MAGIC = b"EMBC"
VERSION = 1
KEY_BYTES = 32
_HEADER_FMT = "<4sH"
INDEX_FILENAME = "index.json"


def _safe_model_dir(model_id: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in model_id) or "model"


def _record_size(dim: int) -> int:
    return KEY_BYTES + 4 * dim + 4


def pack_header(model_id: str, dim: int) -> bytes:
    mid = model_id.encode("utf-8")
    if len(mid) > 0xFFFF:
        raise ValueOutOfRange("model_id too long")
    return struct.pack(_HEADER_FMT, MAGIC, VERSION) + struct.pack("<H", len(mid)) + mid + struct.pack("<I", dim)


def pack_record(key_hash: bytes, vector: np.ndarray) -> bytes:
    payload = key_hash + np.ascontiguousarray(vector, dtype="<f4").tobytes()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


@dataclass
class ShardHeader:
    model_id: str
    dim: int
    header_size: int


def read_header(buf: bytes, path: Path) -> ShardHeader:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise CorruptShard(f"{path}: bad magic")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise CorruptShard(f"{path}: unsupported shard version {version}")
    (mid_len,) = struct.unpack_from("<H", buf, 6)
    header_size = 8 + mid_len + 4
    if len(buf) < header_size:
        raise CorruptShard(f"{path}: truncated header")
    model_id = buf[8 : 8 + mid_len].decode("utf-8")
    (dim,) = struct.unpack_from("<I", buf, 8 + mid_len)
    if dim < 1:
        raise CorruptShard(f"{path}: nonsensical dim {dim}")
    return ShardHeader(model_id=model_id, dim=dim, header_size=header_size)


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    stored_vectors: int = 0
    bytes_on_disk: int = 0

    def to_record(self) -> dict:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "stored_vectors": self.stored_vectors,
            "bytes_on_disk": self.bytes_on_disk,
        }


@dataclass
class VerifyReport:
    shards: int = 0
    records: int = 0
    checksum_failures: int = 0
    truncated_tails: int = 0
    unreadable_shards: int = 0
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.checksum_failures == 0 and self.unreadable_shards == 0

    def to_record(self) -> dict:
        return {
            "shards": self.shards,
            "records": self.records,
            "checksum_failures": self.checksum_failures,
            "truncated_tails": self.truncated_tails,
            "unreadable_shards": self.unreadable_shards,
            "ok": self.ok,
            "problems": self.problems,
        }


@dataclass
class _RecordLoc:
    path: Path
    offset: int


class EmbeddingCache:
    """Read-through store over one cache directory."""

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._dims: dict[str, int] = {}
        self._index: dict[str, dict[bytes, _RecordLoc]] = {}
        self._memory: dict[tuple[str, bytes], np.ndarray] = {}
        self._write_handles: dict[str, object] = {}
        self.stats = CacheStats()
        self._load_or_rebuild_index()

    # -- index management ---------------------------------------------------

    def _shard_paths(self) -> list[Path]:
        return sorted(self.cache_dir.rglob("*.embc"))

    def _load_or_rebuild_index(self) -> None:
        index_path = self.cache_dir / INDEX_FILENAME
        if index_path.exists():
            try:
                doc = json.loads(index_path.read_text())
                if self._try_load_index(doc):
                    return
            except (json.JSONDecodeError, KeyError, OSError, ValueError):
                pass
        self._rebuild_index()
        self.flush_index()

    def _try_load_index(self, doc: dict) -> bool:
        if doc.get("version") != 1:
            return False
        recorded = {s["path"]: s for s in doc["shards"]}
        on_disk = {str(p.relative_to(self.cache_dir)): p for p in self._shard_paths()}
        if set(recorded) != set(on_disk):
            return False
        for rel, meta in recorded.items():
            if on_disk[rel].stat().st_size != meta["file_size"]:
                return False
        dims: dict[str, int] = {}
        index: dict[str, dict[bytes, _RecordLoc]] = {}
        total = 0
        total_bytes = 0
        for rel, meta in recorded.items():
            path = on_disk[rel]
            model_id = meta["model_id"]
            dim = int(meta["dim"])
            if dims.setdefault(model_id, dim) != dim:
                return False
            per_model = index.setdefault(model_id, {})
            for hex_hash, offset in meta["keys"].items():
                per_model[bytes.fromhex(hex_hash)] = _RecordLoc(path=path, offset=int(offset))
                total += 1
            total_bytes += meta["file_size"]
        self._dims = dims
        self._index = index
        self.stats.stored_vectors = total
        self.stats.bytes_on_disk = total_bytes
        return True

    def _rebuild_index(self) -> None:
        self._dims = {}
        self._index = {}
        total = 0
        total_bytes = 0
        for path in self._shard_paths():
            buf = path.read_bytes()
            header = read_header(buf, path)
            if header.model_id in self._dims and self._dims[header.model_id] != header.dim:
                raise CorruptShard(
                    f"{path}: model '{header.model_id}' stored at dim {header.dim}, "
                    f"already registered at {self._dims[header.model_id]}"
                )
            self._dims[header.model_id] = header.dim
            per_model = self._index.setdefault(header.model_id, {})
            rec = _record_size(header.dim)
            pos = header.header_size
            while pos + rec <= len(buf):
                key = buf[pos : pos + KEY_BYTES]
                per_model[key] = _RecordLoc(path=path, offset=pos)
                pos += rec
                total += 1
            total_bytes += len(buf)
        self.stats.stored_vectors = total
        self.stats.bytes_on_disk = total_bytes

    def flush_index(self) -> None:
        shards: dict[Path, dict] = {}
        for model_id, per_model in self._index.items():
            for key, loc in per_model.items():
                meta = shards.setdefault(
                    loc.path,
                    {
                        "path": str(loc.path.relative_to(self.cache_dir)),
                        "model_id": model_id,
                        "dim": self._dims[model_id],
                        "file_size": loc.path.stat().st_size,
                        "keys": {},
                    },
                )
                meta["keys"][key.hex()] = loc.offset
        doc = {"version": 1, "shards": sorted(shards.values(), key=lambda s: s["path"])}
        tmp = self.cache_dir / (INDEX_FILENAME + ".tmp")
        tmp.write_text(json.dumps(doc))
        tmp.replace(self.cache_dir / INDEX_FILENAME)

    # -- model registry -----------------------------------------------------

    def register_model(self, model_id: str, dim: int) -> None:
        with self._lock:
            known = self._dims.get(model_id)
            if known is not None and known != dim:
                raise DimMismatch(f"model '{model_id}' already registered at dim {known}, not {dim}")
            self._dims[model_id] = dim

    def model_dim(self, model_id: str) -> int | None:
        return self._dims.get(model_id)

    # -- store operations ---------------------------------------------------

    def put(self, model_id: str, key_hash: bytes, vector: np.ndarray) -> None:
        vector = np.ascontiguousarray(vector, dtype=np.float32)
        if vector.ndim != 1:
            raise DimMismatch("vector must be one-dimensional")
        with self._lock:
            dim = self._dims.get(model_id)
            if dim is None:
                dim = vector.shape[0]
                self._dims[model_id] = dim
            if vector.shape[0] != dim:
                raise DimMismatch(
                    f"vector dim {vector.shape[0]} != registered dim {dim} for model '{model_id}'"
                )
            norm = float(np.linalg.norm(vector.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise ValueOutOfRange(f"cached vectors must be unit norm, got {norm:.6g}")
            existing = self._index.get(model_id, {}).get(key_hash)
            if existing is not None:
                stored = self._read_record(model_id, existing)
                if stored.tobytes() == vector.tobytes():
                    return
                raise ConflictingVector(
                    f"key {key_hash.hex()[:16]}... already stored with different bytes "
                    f"under model '{model_id}'"
                )
            self._append_record(model_id, dim, key_hash, vector)

    def get(self, model_id: str, key_hash: bytes) -> np.ndarray | None:
        with self._lock:
            cached = self._memory.get((model_id, key_hash))
            if cached is not None:
                self.stats.hits += 1
                return cached.copy()
            loc = self._index.get(model_id, {}).get(key_hash)
            if loc is None:
                self.stats.misses += 1
                return None
            vector = self._read_record(model_id, loc)
            self._memory[(model_id, key_hash)] = vector
            self.stats.hits += 1
            return vector.copy()

    def batch_lookup(self, model_id: str, key_hashes: list[bytes]) -> tuple[dict[bytes, np.ndarray], list[bytes]]:
        """Partition keys into found (hash -> vector) and missing, with the
        missing list preserving input order."""
        found: dict[bytes, np.ndarray] = {}
        missing: list[bytes] = []
        for key in key_hashes:
            vec = self.get(model_id, key)
            if vec is None:
                missing.append(key)
            else:
                found[key] = vec
        return found, missing

    def close(self) -> None:
        with self._lock:
            for handle in self._write_handles.values():
                handle.close()
            self._write_handles.clear()
        self.flush_index()

    # -- internals ------------------------------------------------------------

    def _read_record(self, model_id: str, loc: _RecordLoc) -> np.ndarray:
        dim = self._dims[model_id]
        rec = _record_size(dim)
        with open(loc.path, "rb") as fh:
            fh.seek(loc.offset)
            buf = fh.read(rec)
        if len(buf) != rec:
            raise CorruptShard(f"{loc.path}: short read at offset {loc.offset}")
        payload, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise CorruptShard(f"{loc.path}: checksum failure at offset {loc.offset}")
        return np.frombuffer(payload[KEY_BYTES:], dtype="<f4").copy()

    def _writable_shard(self, model_id: str, dim: int):
        handle = self._write_handles.get(model_id)
        if handle is not None:
            return handle
        shard_dir = self.cache_dir / _safe_model_dir(model_id)
        shard_dir.mkdir(parents=True, exist_ok=True)
        path = shard_dir / "data-00000.embc"
        if not path.exists():
            path.write_bytes(pack_header(model_id, dim))
            self.stats.bytes_on_disk += path.stat().st_size
        handle = open(path, "ab")
        self._write_handles[model_id] = handle
        return handle

    def _append_record(self, model_id: str, dim: int, key_hash: bytes, vector: np.ndarray) -> None:
        handle = self._writable_shard(model_id, dim)
        record = pack_record(key_hash, vector)
        offset = handle.tell()
        handle.write(record)
        handle.flush()
        path = Path(handle.name)
        self._index.setdefault(model_id, {})[key_hash] = _RecordLoc(path=path, offset=offset)
        self._memory[(model_id, key_hash)] = vector
        self.stats.stored_vectors += 1
        self.stats.bytes_on_disk += len(record)

    # -- maintenance ----------------------------------------------------------

    def compact(self) -> int:
        """Rewrite every model's records into a single fresh shard, dropping
        torn tails and duplicate appends. Returns records kept."""
        with self._lock:
            for handle in self._write_handles.values():
                handle.close()
            self._write_handles.clear()

            kept = 0
            for model_id in sorted(self._dims):
                per_model = self._index.get(model_id, {})
                if not per_model:
                    continue
                dim = self._dims[model_id]
                records = []
                for key in sorted(per_model):
                    records.append((key, self._read_record(model_id, per_model[key])))
                shard_dir = self.cache_dir / _safe_model_dir(model_id)
                shard_dir.mkdir(parents=True, exist_ok=True)
                tmp = shard_dir / ".compact.tmp"
                with open(tmp, "wb") as fh:
                    fh.write(pack_header(model_id, dim))
                    for key, vec in records:
                        fh.write(pack_record(key, vec))
                old_paths = {loc.path for loc in per_model.values()}
                target = shard_dir / "data-00000.embc"
                for old in old_paths:
                    if old != target:
                        old.unlink(missing_ok=True)
                tmp.replace(target)
                kept += len(records)
            self._rebuild_index()
            self.flush_index()
            return kept


def verify_cache_dir(cache_dir: str | Path) -> VerifyReport:
    """Validate every shard under a directory: headers parse, every
    committed record checksums, torn tails are counted but not fatal."""
    report = VerifyReport()
    for path in sorted(Path(cache_dir).rglob("*.embc")):
        report.shards += 1
        try:
            buf = path.read_bytes()
            header = read_header(buf, path)
        except (CorruptShard, OSError) as exc:
            report.unreadable_shards += 1
            report.problems.append(str(exc))
            continue
        rec = _record_size(header.dim)
        pos = header.header_size
        while pos + rec <= len(buf):
            payload = buf[pos : pos + rec - 4]
            (crc,) = struct.unpack_from("<I", buf, pos + rec - 4)
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                report.checksum_failures += 1
                report.problems.append(f"{path}: checksum failure at offset {pos}")
            else:
                report.records += 1
            pos += rec
        if pos != len(buf):
            report.truncated_tails += 1
            report.problems.append(f"{path}: {len(buf) - pos} trailing bytes ignored")
    return report
