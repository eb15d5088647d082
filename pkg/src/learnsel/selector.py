"""Joint sub-batch selection over a learnability matrix, plus the uniform
and individual top-k baselines.

Selection proceeds in chunks. Chunk 0 is drawn from the matrix diagonal;
every later chunk scores each candidate by its diagonal value plus its row
and column interactions with everything already drawn, pushes already
drawn indices out of contention by subtracting a large constant, and draws
again. Draws are made without replacement by perturbing scores with Gumbel
noise and taking the top k, so scores act as logits: negative values are
fine, and widening gaps make the draw increasingly greedy.

Randomness contract (relied on by reproducibility tests): all noise for
chunk ``z`` of super-batch ``b`` under run seed ``s`` comes from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(0, b, z))))``,
consumed as a single ``gumbel(size=n)`` call per draw. Epoch shuffles use
``spawn_key=(1, epoch)``.
"""
from __future__ import annotations

import numpy as np

from .core import (
    DegenerateConfig,
    DimensionMismatch,
    FlopsCounters,
    KTooLarge,
    LearnabilityMatrix,
    SelectionConfig,
    SelectionResult,
    ValueOutOfRange,
    floor_draws,
)

SELECT_STREAM = 0
SHUFFLE_STREAM = 1


def chunk_rng(seed: int, batch_ordinal: int, chunk: int) -> np.random.Generator:
    """The dedicated noise stream for one chunk of one super-batch."""
    ss = np.random.SeedSequence(seed, spawn_key=(SELECT_STREAM, batch_ordinal, chunk))
    return np.random.Generator(np.random.PCG64(ss))


def shuffle_rng(seed: int, epoch: int) -> np.random.Generator:
    """The stream that orders the corpus for one epoch."""
    ss = np.random.SeedSequence(seed, spawn_key=(SHUFFLE_STREAM, epoch))
    return np.random.Generator(np.random.PCG64(ss))


class SampledMask:
    """Boolean mask over a super-batch tracking already-drawn indices."""

    def __init__(self, n: int):
        self.flags = np.zeros(n, dtype=bool)

    @property
    def n(self) -> int:
        return self.flags.shape[0]

    def add(self, indices: np.ndarray) -> None:
        # A re-draw means the large-constant exclusion was overwhelmed by
        # the score scale; better to fail loudly than emit duplicates.
        assert not self.flags[indices].any(), "index drawn twice; masking failed"
        self.flags[indices] = True

    def count(self) -> int:
        return int(self.flags.sum())


def n_draws(cfg: SelectionConfig, n_rows: int) -> int:
    """Number of indices drawn per chunk for a batch of ``n_rows``."""
    if n_rows < 1:
        raise DegenerateConfig("n_rows must be >= 1")
    draws = floor_draws(n_rows, cfg.filter_ratio, cfg.n_chunks)
    if draws < 1:
        raise DegenerateConfig(
            f"zero draws per chunk for n_rows={n_rows}, "
            f"filter_ratio={cfg.filter_ratio}, n_chunks={cfg.n_chunks}"
        )
    return draws


def gumbel_topk(logits: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct indices of the largest (logit + Gumbel(0,1)) values.

    Equivalent to sampling k items without replacement with probabilities
    proportional to exp(logit). Deterministic given the generator state;
    ties (measure zero) break toward the lower index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionMismatch(f"logits must be a vector, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueOutOfRange("logits must be finite")
    if k > logits.shape[0]:
        raise KTooLarge(f"k={k} exceeds {logits.shape[0]} candidates")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    perturbed = logits + rng.gumbel(size=logits.shape[0])
    order = np.argsort(-perturbed, kind="stable")
    return order[:k].astype(np.int64)


def conditional_scores(M: LearnabilityMatrix, mask: SampledMask, C: float) -> np.ndarray:
    """Per-candidate score conditioned on the already-drawn set.

    out[i] = M[i,i] + sum over drawn j of M[i,j] + sum over drawn j of
    M[j,i]; drawn candidates then have C subtracted so they cannot win
    again while |scores| stay far below C.
    """
    if M.n != mask.n:
        raise DimensionMismatch(f"matrix size {M.n} != mask size {mask.n}")
    values = M.values.astype(np.float64)
    flags = mask.flags
    out = np.diagonal(values).copy()
    if flags.any():
        out += values[:, flags].sum(axis=1)
        out += values[flags, :].sum(axis=0)
    out[flags] -= C
    return out


def joint_select(M: LearnabilityMatrix, cfg: SelectionConfig, batch_ordinal: int = 0) -> SelectionResult:
    """Chunked joint selection of n_chunks * n_draws indices from a
    super-batch's learnability matrix.

    ``batch_ordinal`` separates the noise streams of successive
    super-batches under one run seed (see module docstring).
    """
    draws = n_draws(cfg, M.n)
    diag = M.diagonal().astype(np.float64)

    if cfg.chunk0_policy == "uniform":
        chunk0_logits = np.zeros(M.n)
    else:
        chunk0_logits = diag / cfg.temperature
    inds = gumbel_topk(chunk0_logits, draws, chunk_rng(cfg.seed, batch_ordinal, 0))

    mask = SampledMask(M.n)
    mask.add(inds)
    chunks = [inds]
    for z in range(1, cfg.n_chunks):
        probs = conditional_scores(M, mask, cfg.large_constant_C)
        new = gumbel_topk(probs / cfg.temperature, draws, chunk_rng(cfg.seed, batch_ordinal, z))
        mask.add(new)
        chunks.append(new)

    selected = np.concatenate(chunks)
    chunk_of = np.repeat(np.arange(cfg.n_chunks, dtype=np.int64), draws)
    return SelectionResult(
        selected=selected,
        chunk_of=chunk_of,
        diag_scores=diag[selected].astype(np.float32),
        counters=FlopsCounters(),
    )


def iid_select(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of k distinct indices from range(n)."""
    if k > n:
        raise KTooLarge(f"k={k} exceeds population {n}")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    return rng.choice(n, size=k, replace=False).astype(np.int64)


def topk_individual_select(M: LearnabilityMatrix, k: int) -> np.ndarray:
    """Indices of the k largest diagonal scores, ignoring interactions.

    Ties break toward the lower index, keeping the baseline deterministic.
    """
    if k > M.n:
        raise KTooLarge(f"k={k} exceeds matrix size {M.n}")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    diag = M.diagonal()
    order = np.argsort(-diag, kind="stable")
    return order[:k].astype(np.int64)
