"""Embedding providers: where vectors come from when the cache misses.

The engine never runs model inference itself. Vectors arrive either from
shard files written offline (by the exporter tool or a previous run) or
from a deterministic pseudo-encoder that derives a unit vector from each
sentence's content hash. The pseudo-encoder makes the full pipeline
runnable on any corpus with zero models, which is all the desk-scale
experiments need.
"""
from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np

from .cache import EmbeddingCache
from .core import MissingEmbedding, PairRecord, Side


class EmbeddingProvider(Protocol):
    model_id: str
    dim: int

    def embed(self, records: list[PairRecord], side: Side) -> np.ndarray:
        """Return one unit-norm float32 row per record."""
        ...


class HashEmbeddingProvider:
    """Deterministic pseudo-encoder: a sentence's vector is a normalized
    gaussian draw seeded by its content hash and the model id.

    The same (model_id, dim, text, side) always yields the same float32
    bytes, on any platform, which is what the cache round-trip and
    cold/warm equivalence tests rely on.
    """

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim

    def _vector(self, key_hash: bytes) -> np.ndarray:
        seed_material = list(key_hash) + [ord(c) for c in self.model_id]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_material)))
        raw = rng.normal(size=self.dim)
        unit = raw / np.linalg.norm(raw)
        return unit.astype(np.float32)

    def embed(self, records: list[PairRecord], side: Side) -> np.ndarray:
        return np.stack([self._vector(r.hash_for(side)) for r in records])


class ShardEmbeddingProvider:
    """Read-only lookups against shard files produced offline."""

    def __init__(self, shard_dir: str | Path, model_id: str, dim: int | None = None):
        self.store = EmbeddingCache(shard_dir)
        self.model_id = model_id
        known = self.store.model_dim(model_id)
        if known is None and dim is None:
            raise MissingEmbedding(-1, model_id)
        self.dim = known if known is not None else dim

    def embed(self, records: list[PairRecord], side: Side) -> np.ndarray:
        rows = np.empty((len(records), self.dim), dtype=np.float32)
        for i, record in enumerate(records):
            vec = self.store.get(self.model_id, record.hash_for(side))
            if vec is None:
                raise MissingEmbedding(record.id, self.model_id)
            rows[i] = vec
        return rows


class CachedReferenceSource:
    """Resolves reference vectors through the cache, routing misses to the
    underlying provider and persisting what comes back.

    With no cache attached this degrades to calling the provider every
    time, which is the "uncached" accounting regime. ``fetched_samples``
    counts provider calls, i.e. the forward passes a real encoder would
    have run.
    """

    def __init__(self, provider: EmbeddingProvider, cache: EmbeddingCache | None):
        self.provider = provider
        self.cache = cache
        self.fetched_samples = 0
        if cache is not None:
            cache.register_model(provider.model_id, provider.dim)

    @property
    def model_id(self) -> str:
        return self.provider.model_id

    @property
    def dim(self) -> int:
        return self.provider.dim

    def embed(self, records: list[PairRecord], side: Side) -> np.ndarray:
        if self.cache is None:
            self.fetched_samples += len(records)
            return self.provider.embed(records, side)
        keys = [r.hash_for(side) for r in records]
        found, missing = self.cache.batch_lookup(self.provider.model_id, keys)
        if missing:
            missing_set = set(missing)
            missing_records = [r for r, k in zip(records, keys) if k in missing_set]
            fresh = self.provider.embed(missing_records, side)
            self.fetched_samples += len(missing_records)
            for record, row in zip(missing_records, fresh):
                self.cache.put(self.provider.model_id, record.hash_for(side), row)
                found[record.hash_for(side)] = row
        return np.stack([found[k] for k in keys])
