"""Shared domain types, validation, and normalization.

Everything downstream (scoring, selection, caching, the experiment lab)
operates on the value types defined here. All embedding rows are L2
normalized at ingestion so that every similarity value is a cosine in
[-1, 1], and all dot-product accumulation happens in float64 even though
vectors are stored as float32.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

NORM_TOLERANCE = 1e-5
ZERO_NORM_THRESHOLD = 1e-12

# Snaps away float representation error before flooring, so decimal filter
# ratios (e.g. 0.9) produce the exact integer draw counts they denote.
FLOOR_EPS = 1e-9


class LearnselError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVectorRow(LearnselError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has (near-)zero norm and cannot be normalized")


class DimensionMismatch(LearnselError):
    pass


class ModelMismatch(LearnselError):
    pass


class ValueOutOfRange(LearnselError):
    pass


class KTooLarge(LearnselError):
    pass


class DegenerateConfig(LearnselError):
    pass


class ConflictingVector(LearnselError):
    pass


class CorruptShard(LearnselError):
    pass


class UnreadableFile(LearnselError):
    pass


class EncodingError(LearnselError):
    pass


class MissingEmbedding(LearnselError):
    def __init__(self, pair_id: int, model_id: str):
        self.pair_id = pair_id
        self.model_id = model_id
        super().__init__(f"no provider supplied an embedding for pair {pair_id} under model '{model_id}'")


class UnknownId(LearnselError):
    pass


class MissingLabel(LearnselError):
    pass


class Side(Enum):
    """Which half of a parallel pair a text or embedding belongs to."""

    SOURCE = "src"
    TARGET = "trg"


_SIDE_TAG = {Side.SOURCE: b"s", Side.TARGET: b"t"}


def content_hash(text: str, side: Side) -> bytes:
    """32-byte content hash of a sentence: SHA-256 over a 1-byte side tag
    (0x73 for source, 0x74 for target) followed by the UTF-8 text.

    The side tag keeps source and target vectors of an identical string
    from colliding under one cache key.
    """
    h = hashlib.sha256()
    h.update(_SIDE_TAG[side])
    h.update(text.encode("utf-8"))
    return h.digest()


@dataclass(frozen=True)
class PairRecord:
    """One parallel sentence pair.

    ``noise_label`` is ground truth available only for synthetic corpora
    (True = the pair is noise, not a real translation).
    """

    id: int
    src_text: str
    trg_text: str
    src_hash: bytes
    trg_hash: bytes
    noise_label: bool | None = None

    @classmethod
    def create(cls, pair_id: int, src_text: str, trg_text: str, noise_label: bool | None = None) -> "PairRecord":
        return cls(
            id=pair_id,
            src_text=src_text,
            trg_text=trg_text,
            src_hash=content_hash(src_text, Side.SOURCE),
            trg_hash=content_hash(trg_text, Side.TARGET),
            noise_label=noise_label,
        )

    def hash_for(self, side: Side) -> bytes:
        return self.src_hash if side is Side.SOURCE else self.trg_hash


@dataclass
class EmbeddingMatrix:
    """Row-major block of unit-norm embedding vectors for one side of a
    super-batch under one model.

    rows: float32 array of shape (n, dim), every row unit L2 norm within
    1e-5. row_ids aligns pair ids with rows.
    """

    model_id: str
    side: Side
    rows: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float32)
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        if self.rows.ndim != 2 or self.rows.shape[0] < 1 or self.rows.shape[1] < 1:
            raise DimensionMismatch(f"embedding matrix must be (n>=1, dim>=1), got {self.rows.shape}")
        if self.row_ids.shape != (self.rows.shape[0],):
            raise DimensionMismatch(
                f"row_ids length {self.row_ids.shape} does not match {self.rows.shape[0]} rows"
            )
        norms = np.linalg.norm(self.rows.astype(np.float64), axis=1)
        bad = np.where(np.abs(norms - 1.0) > NORM_TOLERANCE)[0]
        if bad.size:
            raise ValueOutOfRange(
                f"rows {bad[:8].tolist()} are not unit norm (|norm-1| up to {np.abs(norms - 1).max():.3g})"
            )

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ScoreWeights:
    """Weights on the reference (easy) and learner (hard) similarity terms."""

    w_easy: float = 0.8
    w_hard: float = 0.2

    def __post_init__(self):
        if self.w_easy < 0 or self.w_hard < 0:
            raise ValueOutOfRange("score weights must be non-negative")
        if self.w_easy + self.w_hard <= 0:
            raise ValueOutOfRange("score weights must not both be zero")


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of one selection run.

    ``chunk0_policy`` chooses how the first chunk is drawn: "weighted"
    perturbs the diagonal scores, "uniform" ignores them. ``temperature``
    scales scores before the stochastic draw; lower is greedier.
    """

    super_batch_size: int = 4000
    filter_ratio: float = 0.9
    n_chunks: int = 4
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    large_constant_C: float = 1e6
    seed: int = 0
    chunk0_policy: str = "weighted"
    temperature: float = 1.0

    def __post_init__(self):
        if self.super_batch_size < 1:
            raise DegenerateConfig("super_batch_size must be >= 1")
        if not (0.0 <= self.filter_ratio < 1.0):
            raise DegenerateConfig(f"filter_ratio must be in [0, 1), got {self.filter_ratio}")
        if self.n_chunks < 1:
            raise DegenerateConfig("n_chunks must be >= 1")
        if self.chunk0_policy not in ("weighted", "uniform"):
            raise DegenerateConfig(f"unknown chunk0_policy '{self.chunk0_policy}'")
        if self.temperature <= 0:
            raise DegenerateConfig("temperature must be positive")
        if floor_draws(self.super_batch_size, self.filter_ratio, self.n_chunks) < 1:
            raise DegenerateConfig(
                f"config draws zero samples per chunk: n={self.super_batch_size}, "
                f"filter_ratio={self.filter_ratio}, n_chunks={self.n_chunks}"
            )


def floor_draws(n_rows: int, filter_ratio: float, n_chunks: int) -> int:
    """floor(n_rows * (1 - filter_ratio) / n_chunks) with float error snapped
    away, so (4000, 0.9, 4) gives 100 and not 99."""
    return int(math.floor(n_rows * (1.0 - filter_ratio) / n_chunks + FLOOR_EPS))


@dataclass
class LearnabilityMatrix:
    """Square matrix of pairwise learnability scores for one super-batch.

    Entry (i, j) scores how useful it is to train on source i against
    target j; the diagonal holds true-pair scores. With unit-norm inputs
    every entry lies in [-(w_easy+w_hard), +(w_easy+w_hard)].
    """

    values: np.ndarray
    weights: ScoreWeights

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionMismatch(f"learnability matrix must be square, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueOutOfRange("learnability matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.ascontiguousarray(np.diagonal(self.values))


@dataclass
class FlopsCounters:
    """Raw tallies accumulated while running selection epochs."""

    scored_samples: int = 0
    trained_samples: int = 0
    reference_fwd_samples: int = 0
    scoring_flops: float = 0.0
    super_batches: int = 0
    wall_seconds: float = 0.0

    def merge(self, other: "FlopsCounters") -> None:
        self.scored_samples += other.scored_samples
        self.trained_samples += other.trained_samples
        self.reference_fwd_samples += other.reference_fwd_samples
        self.scoring_flops += other.scoring_flops
        self.super_batches += other.super_batches
        self.wall_seconds += other.wall_seconds


# chunk_of value marking a corpus-tail batch emitted without selection.
PASSTHROUGH_CHUNK = -1


@dataclass
class SelectionResult:
    """Output of one selection step over a super-batch.

    selected: in-batch indices, in draw order. chunk_of: chunk ordinal per
    selected position (PASSTHROUGH_CHUNK for an unselected tail batch).
    diag_scores: diagonal learnability of each selected index, or None for
    strategies that never score (iid).
    """

    selected: np.ndarray
    chunk_of: np.ndarray
    diag_scores: np.ndarray | None
    counters: FlopsCounters = field(default_factory=FlopsCounters)

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=np.int64)
        self.chunk_of = np.asarray(self.chunk_of, dtype=np.int64)
        if self.chunk_of.shape != self.selected.shape:
            raise DimensionMismatch("chunk_of must align with selected")
        if len(np.unique(self.selected)) != len(self.selected):
            raise ValueOutOfRange("selection contains duplicate indices")


def normalize_rows(
    raw: np.ndarray,
    model_id: str,
    side: Side,
    row_ids: np.ndarray | None = None,
) -> EmbeddingMatrix:
    """L2-normalize each row of ``raw`` and wrap it as an EmbeddingMatrix.

    Raises ZeroVectorRow for any row whose norm is below 1e-12; direction
    of every other row is preserved.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {raw.shape}")
    norms = np.linalg.norm(raw, axis=1)
    dead = np.where(norms <= ZERO_NORM_THRESHOLD)[0]
    if dead.size:
        raise ZeroVectorRow(int(dead[0]))
    rows = (raw / norms[:, None]).astype(np.float32)
    if row_ids is None:
        row_ids = np.arange(raw.shape[0], dtype=np.int64)
    return EmbeddingMatrix(model_id=model_id, side=side, rows=rows, row_ids=row_ids)
