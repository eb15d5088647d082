"""Desk-scale experiment lab.

Builds synthetic parallel corpora with controllable noise, a toy learner
whose per-pair embedding tables improve only on the pairs it trains on,
and a closed loop that runs the selection strategies against each other
and records learning curves.

Corpus model: every clean pair shares one latent direction, observed by
the reference encoder through small gaussian noise on each side, so its
reference similarity sits near 1. A noisy pair gets independent latents
per side (reference similarity near 0), or an antipodal latent pair when
modeling reversed-meaning noise. The toy learner starts from its own
noisy view of the latents and pulls the two sides of every pair it trains
on toward their common midpoint, reaching similarity 1.0 in one step at
lr=1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import (
    DegenerateConfig,
    EmbeddingMatrix,
    MissingLabel,
    PairRecord,
    SelectionConfig,
    ScoreWeights,
    Side,
    UnknownId,
    ValueOutOfRange,
)
from .pipeline import STRATEGIES
from .scoring import learnability_matrix, similarity_matrix
from .selector import chunk_rng, iid_select, joint_select, n_draws, shuffle_rng, topk_individual_select

CORPUS_STREAM = 2
LEARNER_INIT_STREAM = 3


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_clean: int
    n_noisy: int
    dim: int = 64
    ref_noise_sigma: float = 0.02
    learner_init_sigma: float = 100.0
    antipodal_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clean + self.n_noisy < 2:
            raise DegenerateConfig("corpus needs at least 2 pairs")
        if self.dim < 2:
            raise DegenerateConfig("dim must be >= 2")
        if self.ref_noise_sigma < 0 or self.learner_init_sigma < 0:
            raise ValueOutOfRange("noise sigmas must be non-negative")
        if not (0.0 <= self.antipodal_fraction <= 1.0):
            raise ValueOutOfRange("antipodal_fraction must be in [0, 1]")

    @property
    def n_total(self) -> int:
        return self.n_clean + self.n_noisy


@dataclass
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    records: list[PairRecord]
    ref_src: EmbeddingMatrix
    ref_trg: EmbeddingMatrix
    latent_src: np.ndarray
    latent_trg: np.ndarray

    def labels(self) -> dict[int, bool]:
        return {r.id: bool(r.noise_label) for r in self.records}

    def clean_ids(self) -> np.ndarray:
        return np.array([r.id for r in self.records if not r.noise_label], dtype=np.int64)


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    """Deterministic synthetic corpus: records, fixed reference embeddings,
    and the ground-truth latents behind them.

    Clean and noisy pairs are interleaved by a seeded shuffle so corpus
    order carries no label signal.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed, spawn_key=(CORPUS_STREAM,))))
    n = spec.n_total

    latent_src = _unit(rng.normal(size=(n, spec.dim)))
    latent_trg = latent_src.copy()
    noisy_flags = np.zeros(n, dtype=bool)
    noisy_flags[spec.n_clean :] = True
    n_antipodal = int(round(spec.n_noisy * spec.antipodal_fraction))
    for i in range(spec.n_clean, n):
        if i < spec.n_clean + n_antipodal:
            latent_trg[i] = -latent_src[i]
        else:
            latent_trg[i] = _unit(rng.normal(size=(1, spec.dim)))[0]

    order = rng.permutation(n)
    latent_src = latent_src[order]
    latent_trg = latent_trg[order]
    noisy_flags = noisy_flags[order]

    ref_src_rows = _unit(latent_src + spec.ref_noise_sigma * rng.normal(size=(n, spec.dim)))
    ref_trg_rows = _unit(latent_trg + spec.ref_noise_sigma * rng.normal(size=(n, spec.dim)))

    records = [
        PairRecord.create(i, f"synthetic source {i}", f"synthetic target {i}", noise_label=bool(noisy_flags[i]))
        for i in range(n)
    ]
    ids = np.arange(n, dtype=np.int64)
    return SyntheticCorpus(
        spec=spec,
        records=records,
        ref_src=EmbeddingMatrix("sim-reference", Side.SOURCE, ref_src_rows.astype(np.float32), ids),
        ref_trg=EmbeddingMatrix("sim-reference", Side.TARGET, ref_trg_rows.astype(np.float32), ids),
        latent_src=latent_src,
        latent_trg=latent_trg,
    )


@dataclass
class ToyLearnerState:
    """Per-pair embedding tables standing in for a live learner model."""

    src_table: np.ndarray
    trg_table: np.ndarray
    step: int = 0
    lr: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.lr <= 1.0):
            raise ValueOutOfRange("lr must be in (0, 1]")

    @property
    def n(self) -> int:
        return self.src_table.shape[0]

    def diagonal_similarity(self, ids: np.ndarray | None = None) -> np.ndarray:
        src = self.src_table if ids is None else self.src_table[ids]
        trg = self.trg_table if ids is None else self.trg_table[ids]
        return np.einsum("ij,ij->i", src.astype(np.float64), trg.astype(np.float64))


def init_toy_learner(corpus: SyntheticCorpus, lr: float = 1.0) -> ToyLearnerState:
    """Learner tables start at a noisy view of the latents; at large
    learner_init_sigma that is indistinguishable from random directions."""
    spec = corpus.spec
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(spec.seed, spawn_key=(LEARNER_INIT_STREAM,)))
    )
    src = _unit(corpus.latent_src + spec.learner_init_sigma * rng.normal(size=corpus.latent_src.shape))
    trg = _unit(corpus.latent_trg + spec.learner_init_sigma * rng.normal(size=corpus.latent_trg.shape))
    return ToyLearnerState(src_table=src.astype(np.float32), trg_table=trg.astype(np.float32), lr=lr)


def toy_learner_update(state: ToyLearnerState, selected_ids) -> ToyLearnerState:
    """Pull both sides of every selected pair toward their midpoint by lr.

    At lr=1 both sides land exactly on the normalized midpoint, so the
    pair's similarity becomes 1.0 after a single visit. Unselected rows
    are untouched; the step counter always advances.
    """
    ids = np.asarray(selected_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= state.n):
        raise UnknownId(f"pair ids out of range [0, {state.n})")
    src = state.src_table.copy()
    trg = state.trg_table.copy()
    if ids.size:
        s = src[ids].astype(np.float64)
        t = trg[ids].astype(np.float64)
        mid = (s + t) / 2.0
        new_s = s + state.lr * (mid - s)
        new_t = t + state.lr * (mid - t)
        # An exactly antipodal pair has no midpoint direction; leave it be.
        s_norm = np.linalg.norm(new_s, axis=1, keepdims=True)
        t_norm = np.linalg.norm(new_t, axis=1, keepdims=True)
        ok = (s_norm > 1e-12) & (t_norm > 1e-12)
        new_s = np.where(ok, new_s / np.where(s_norm > 0, s_norm, 1.0), s)
        new_t = np.where(ok, new_t / np.where(t_norm > 0, t_norm, 1.0), t)
        src[ids] = new_s.astype(np.float32)
        trg[ids] = new_t.astype(np.float32)
    return ToyLearnerState(src_table=src, trg_table=trg, step=state.step + 1, lr=state.lr)


@dataclass
class LearningCurve:
    points: list[tuple[int, float]]
    strategy: str
    seed: int

    def samples_to_target(self, target: float) -> int | None:
        for samples, metric in self.points:
            if metric >= target:
                return samples
        return None

    def to_csv_rows(self) -> Iterator[str]:
        for samples, metric in self.points:
            yield f"{samples},{metric!r},{self.strategy},{self.seed}"


def write_curves_csv(path: str | Path, curves: list[LearningCurve]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("samples,metric,strategy,seed\n")
        for curve in curves:
            for row in curve.to_csv_rows():
                fh.write(row + "\n")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: SyntheticCorpusSpec
    selection: SelectionConfig
    strategy: str = "joint"
    lr: float = 1.0
    budget_samples: int = 6000
    eval_every: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DegenerateConfig(f"unknown strategy '{self.strategy}'")
        if self.budget_samples < 0:
            raise ValueOutOfRange("budget_samples must be >= 0")
        if self.eval_every < 1:
            raise ValueOutOfRange("eval_every must be >= 1")


@dataclass
class ExperimentResult:
    curve: LearningCurve
    selected_total: int = 0
    selected_noisy: int = 0
    final_state: ToyLearnerState | None = None

    @property
    def noise_exposure(self) -> float:
        return self.selected_noisy / self.selected_total if self.selected_total else 0.0


def noise_exposure(selected_ids, labels: dict[int, bool]) -> float:
    """Fraction of selected pairs whose ground-truth label marks them
    noisy. Every selected id must be labeled."""
    ids = list(selected_ids)
    if not ids:
        return 0.0
    noisy = 0
    for pair_id in ids:
        if pair_id not in labels or labels[pair_id] is None:
            raise MissingLabel(f"pair {pair_id} has no noise label")
        noisy += int(labels[pair_id])
    return noisy / len(ids)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Closed selection-and-training loop on a synthetic corpus.

    Streams super-batches epoch over epoch (epoch 0 in corpus order,
    later epochs reshuffled by the run seed), selects with the configured
    strategy, trains the toy learner on the selection, and records the
    mean diagonal learner similarity over clean pairs after every
    ``eval_every`` super-batches. Stops once the trained-sample budget is
    consumed.
    """
    corpus = generate_synthetic_corpus(cfg.corpus)
    state = init_toy_learner(corpus, lr=cfg.lr)
    sel = cfg.selection
    clean = corpus.clean_ids()
    labels = corpus.labels()

    def alignment() -> float:
        return float(state.diagonal_similarity(clean).mean())

    curve_points: list[tuple[int, float]] = [(0, alignment())]
    result = ExperimentResult(curve=LearningCurve(points=curve_points, strategy=cfg.strategy, seed=sel.seed))

    consumed = 0
    ordinal = 0
    epoch = 0
    all_ids = np.arange(corpus.spec.n_total, dtype=np.int64)
    while consumed < cfg.budget_samples:
        consumed_at_epoch_start = consumed
        order = all_ids if epoch == 0 else shuffle_rng(sel.seed, epoch).permutation(all_ids)
        for start in range(0, len(order), sel.super_batch_size):
            member_ids = order[start : start + sel.super_batch_size]
            n = len(member_ids)
            try:
                draws = n_draws(sel, n)
            except DegenerateConfig:
                continue  # tail too small at this batch size; next epoch re-deals
            k = draws * sel.n_chunks
            if cfg.strategy == "iid":
                picked = iid_select(n, k, chunk_rng(sel.seed, ordinal, 0))
            else:
                sim_learner = similarity_matrix(
                    EmbeddingMatrix("sim-learner", Side.SOURCE, state.src_table[member_ids], member_ids),
                    EmbeddingMatrix("sim-learner", Side.TARGET, state.trg_table[member_ids], member_ids),
                )
                sim_ref = similarity_matrix(
                    EmbeddingMatrix("sim-reference", Side.SOURCE, corpus.ref_src.rows[member_ids], member_ids),
                    EmbeddingMatrix("sim-reference", Side.TARGET, corpus.ref_trg.rows[member_ids], member_ids),
                )
                M = learnability_matrix(sim_learner, sim_ref, sel.weights)
                if cfg.strategy == "joint":
                    picked = joint_select(M, sel, batch_ordinal=ordinal).selected
                else:
                    picked = topk_individual_select(M, k)
            picked_ids = member_ids[picked]
            state = toy_learner_update(state, picked_ids)
            consumed += len(picked_ids)
            result.selected_total += len(picked_ids)
            result.selected_noisy += sum(int(labels[i]) for i in picked_ids.tolist())
            ordinal += 1
            if ordinal % cfg.eval_every == 0:
                curve_points.append((consumed, alignment()))
            if consumed >= cfg.budget_samples:
                break
        if consumed == consumed_at_epoch_start:
            raise DegenerateConfig(
                "corpus too small for the configured super-batch: no batch produced any draws"
            )
        epoch += 1

    if not curve_points or curve_points[-1][0] != consumed:
        curve_points.append((consumed, alignment()))
    result.final_state = state
    return result


def load_experiment_spec(path: str | Path) -> ExperimentConfig:
    """Experiment spec from a JSON file; keys mirror the dataclasses:
    {"corpus": {...}, "selection": {...}, "strategy": ..., "lr": ...,
    "budget_samples": ..., "eval_every": ...}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    selection = dict(doc.get("selection", {}))
    weights = selection.pop("weights", None)
    if weights is not None:
        selection["weights"] = ScoreWeights(**weights)
    return ExperimentConfig(
        corpus=SyntheticCorpusSpec(**doc["corpus"]),
        selection=SelectionConfig(**selection),
        strategy=doc.get("strategy", "joint"),
        lr=doc.get("lr", 1.0),
        budget_samples=doc.get("budget_samples", 6000),
        eval_every=doc.get("eval_every", 1),
    )


def with_strategy(cfg: ExperimentConfig, strategy: str, seed: int | None = None) -> ExperimentConfig:
    selection = cfg.selection if seed is None else replace(cfg.selection, seed=seed)
    return replace(cfg, strategy=strategy, selection=selection)
