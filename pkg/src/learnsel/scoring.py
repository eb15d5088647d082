"""Cross-similarity matrices, the learnability matrix, and score histograms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatch,
    EmbeddingMatrix,
    LearnabilityMatrix,
    ModelMismatch,
    ScoreWeights,
    ValueOutOfRange,
)

HISTOGRAM_RANGE = (-1.0, 1.0)
_RANGE_SLACK = 1e-5


@dataclass
class SimilarityMatrix:
    """All pairwise source/target cosine similarities under one model."""

    values: np.ndarray
    model_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionMismatch(f"similarity matrix must be square, got {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.ascontiguousarray(np.diagonal(self.values))


@dataclass
class ScoreHistogram:
    """Distribution of true-pair similarity scores over [-1, 1]."""

    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    variance: float

    def to_record(self) -> dict:
        return {
            "edges": [float(e) for e in self.bin_edges],
            "counts": [int(c) for c in self.counts],
            "mean": self.mean,
            "variance": self.variance,
        }


def similarity_matrix(src: EmbeddingMatrix, trg: EmbeddingMatrix) -> SimilarityMatrix:
    """values[i][j] = dot(src row i, trg row j), accumulated in float64.

    Both sides must come from the same model, share the embedding
    dimension, and describe the same pairs in the same order.
    """
    if src.model_id != trg.model_id:
        raise ModelMismatch(f"source model '{src.model_id}' != target model '{trg.model_id}'")
    if src.dim != trg.dim:
        raise DimensionMismatch(f"embedding dims differ: {src.dim} vs {trg.dim}")
    if src.n != trg.n:
        raise DimensionMismatch(f"row counts differ: {src.n} vs {trg.n}")
    if not np.array_equal(src.row_ids, trg.row_ids):
        raise DimensionMismatch("source and target row_ids are not aligned")
    values = src.rows.astype(np.float64) @ trg.rows.astype(np.float64).T
    return SimilarityMatrix(values=values.astype(np.float32), model_id=src.model_id)


def hard_learner_scores(sim_learner: SimilarityMatrix) -> np.ndarray:
    """Negated learner similarity: high where the learner has not yet
    aligned a pair."""
    return -sim_learner.values


def easy_reference_scores(sim_ref: SimilarityMatrix) -> np.ndarray:
    """Reference similarity passed through unchanged; named for symmetry
    with the hard score and as an instrumentation point."""
    return sim_ref.values


def learnability_matrix(
    sim_learner: SimilarityMatrix,
    sim_ref: SimilarityMatrix,
    weights: ScoreWeights,
) -> LearnabilityMatrix:
    """Weighted combination w_easy * ref - w_hard * learner, elementwise.

    The two models may embed at different dimensions; only the pair count
    must agree.
    """
    if sim_learner.n != sim_ref.n:
        raise DimensionMismatch(f"similarity sizes differ: learner {sim_learner.n} vs reference {sim_ref.n}")
    values = (
        weights.w_easy * sim_ref.values.astype(np.float64)
        - weights.w_hard * sim_learner.values.astype(np.float64)
    )
    return LearnabilityMatrix(values=values.astype(np.float32), weights=weights)


def score_histogram(diag_values, n_bins: int) -> ScoreHistogram:
    """Histogram of similarity scores over uniform bins spanning [-1, 1].

    Values at the boundary (within 1e-5 slack) clamp into the edge bins;
    anything further out raises ValueOutOfRange.
    """
    if n_bins < 1:
        raise ValueOutOfRange("n_bins must be >= 1")
    values = np.asarray(diag_values, dtype=np.float64).ravel()
    lo, hi = HISTOGRAM_RANGE
    if values.size and (values.min() < lo - _RANGE_SLACK or values.max() > hi + _RANGE_SLACK):
        raise ValueOutOfRange(
            f"scores outside [{lo}, {hi}]: min={values.min():.6g}, max={values.max():.6g}"
        )
    clamped = np.clip(values, lo, hi)
    edges = np.linspace(lo, hi, n_bins + 1)
    # np.histogram's final bin is closed on the right, which is exactly the
    # clamp-into-edge-bin behavior wanted for scores of +1.
    counts, _ = np.histogram(clamped, bins=edges)
    mean = float(values.mean()) if values.size else 0.0
    variance = float(values.var()) if values.size else 0.0
    return ScoreHistogram(bin_edges=edges, counts=counts.astype(np.int64), mean=mean, variance=variance)
