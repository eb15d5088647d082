"""End-to-end orchestration: corpus ingestion, super-batch streaming,
selection, and modeled FLOPS accounting.

The pipeline emits selected sub-batches on an output stream; it never
trains anything itself. Training cost still appears in the accounting,
as the declared per-sample constants of a CostModel, because the point
of the report is to compare selection regimes against plain-iid training
at equal trained-sample parity.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .cache import CacheStats
from .core import (
    DegenerateConfig,
    EmbeddingMatrix,
    EncodingError,
    FlopsCounters,
    PASSTHROUGH_CHUNK,
    PairRecord,
    SelectionConfig,
    SelectionResult,
    Side,
    UnreadableFile,
)
from .scoring import ScoreHistogram, learnability_matrix, score_histogram, similarity_matrix
from .selector import chunk_rng, iid_select, joint_select, n_draws, topk_individual_select

STRATEGIES = ("joint", "topk", "iid")


# -- ingestion ----------------------------------------------------------------

@dataclass
class IngestStats:
    read: int = 0
    skipped: int = 0


def ingest_corpus(
    path: str | Path,
    fmt: str = "tsv",
    trg_path: str | Path | None = None,
    stats: IngestStats | None = None,
    noise_labels: dict[int, bool] | None = None,
) -> Iterator[PairRecord]:
    """Stream pair records out of a corpus file.

    tsv: one ``source<TAB>target`` pair per line; lines without exactly
    one tab are counted in ``stats.skipped`` and dropped. moses: two
    aligned files (``path`` holds sources, ``trg_path`` targets) that must
    have equal line counts.
    """
    if stats is None:
        stats = IngestStats()
    if fmt == "tsv":
        yield from _ingest_tsv(Path(path), stats, noise_labels)
    elif fmt == "moses":
        if trg_path is None:
            raise UnreadableFile("moses format needs a target-side file")
        yield from _ingest_moses(Path(path), Path(trg_path), stats, noise_labels)
    else:
        raise UnreadableFile(f"unknown corpus format '{fmt}'")


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise UnreadableFile(f"{path}: no such file")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: not valid UTF-8 ({exc})") from exc
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _ingest_tsv(path: Path, stats: IngestStats, noise_labels) -> Iterator[PairRecord]:
    next_id = 0
    for line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            stats.skipped += 1
            continue
        label = noise_labels.get(next_id) if noise_labels else None
        yield PairRecord.create(next_id, parts[0], parts[1], noise_label=label)
        stats.read += 1
        next_id += 1


def _ingest_moses(src_path: Path, trg_path: Path, stats: IngestStats, noise_labels) -> Iterator[PairRecord]:
    src_lines = _read_lines(src_path)
    trg_lines = _read_lines(trg_path)
    if len(src_lines) != len(trg_lines):
        raise UnreadableFile(
            f"aligned files disagree: {src_path} has {len(src_lines)} lines, "
            f"{trg_path} has {len(trg_lines)}"
        )
    next_id = 0
    for src, trg in zip(src_lines, trg_lines):
        if not src or not trg:
            stats.skipped += 1
            continue
        label = noise_labels.get(next_id) if noise_labels else None
        yield PairRecord.create(next_id, src, trg, noise_label=label)
        stats.read += 1
        next_id += 1


# -- super-batch assembly -------------------------------------------------------

@dataclass
class SuperBatch:
    ordinal: int
    records: list[PairRecord]
    learner_src: EmbeddingMatrix | None = None
    learner_trg: EmbeddingMatrix | None = None
    ref_src: EmbeddingMatrix | None = None
    ref_trg: EmbeddingMatrix | None = None

    @property
    def n(self) -> int:
        return len(self.records)


def batch_records(stream: Iterable[PairRecord], size: int) -> Iterator[list[PairRecord]]:
    """Group a record stream into lists of exactly ``size``, except a final
    partial batch, which is passed through rather than dropped."""
    buffer: list[PairRecord] = []
    for record in stream:
        buffer.append(record)
        if len(buffer) == size:
            yield buffer
            buffer = []
    if buffer:
        yield buffer


def resolve_embeddings(batch: SuperBatch, learner_source, reference_source) -> None:
    """Fill in the four embedding matrices of a super-batch.

    Learner vectors are recomputed every call (they track the live model);
    reference vectors route through whatever caching the source wraps.
    """
    ids = np.array([r.id for r in batch.records], dtype=np.int64)

    def matrix(source, side: Side) -> EmbeddingMatrix:
        rows = source.embed(batch.records, side)
        return EmbeddingMatrix(model_id=source.model_id, side=side, rows=rows, row_ids=ids)

    batch.learner_src = matrix(learner_source, Side.SOURCE)
    batch.learner_trg = matrix(learner_source, Side.TARGET)
    batch.ref_src = matrix(reference_source, Side.SOURCE)
    batch.ref_trg = matrix(reference_source, Side.TARGET)


# -- selection epoch ------------------------------------------------------------

@dataclass
class EmittedSelection:
    ordinal: int
    records: list[PairRecord]
    result: SelectionResult

    def selected_ids(self) -> list[int]:
        return [self.records[i].id for i in self.result.selected]


class EpochRunner:
    """Streams one epoch of selection over a record stream.

    Iterating yields EmittedSelection per super-batch, in order. Counter
    and histogram state accumulates on the instance as iteration
    progresses; read it after the stream is exhausted.
    """

    def __init__(
        self,
        cfg: SelectionConfig,
        strategy: str,
        learner_source=None,
        reference_source=None,
    ):
        if strategy not in STRATEGIES:
            raise DegenerateConfig(f"unknown strategy '{strategy}' (expected one of {STRATEGIES})")
        if strategy != "iid" and (learner_source is None or reference_source is None):
            raise DegenerateConfig(f"strategy '{strategy}' needs learner and reference embedding sources")
        self.cfg = cfg
        self.strategy = strategy
        self.learner_source = learner_source
        self.reference_source = reference_source
        self.counters = FlopsCounters()
        self.learner_diag: list[np.ndarray] = []
        self.reference_diag: list[np.ndarray] = []

    def run(self, stream: Iterable[PairRecord]) -> Iterator[EmittedSelection]:
        started = time.perf_counter()
        fetched_before = getattr(self.reference_source, "fetched_samples", 0)
        for ordinal, records in enumerate(batch_records(stream, self.cfg.super_batch_size)):
            yield self._run_batch(ordinal, records)
        if self.reference_source is not None:
            self.counters.reference_fwd_samples += self.reference_source.fetched_samples - fetched_before
        self.counters.wall_seconds += time.perf_counter() - started

    def _run_batch(self, ordinal: int, records: list[PairRecord]) -> EmittedSelection:
        n = len(records)
        try:
            draws = n_draws(self.cfg, n)
        except DegenerateConfig:
            # Corpus tail too small to select from: pass it through whole.
            result = SelectionResult(
                selected=np.arange(n, dtype=np.int64),
                chunk_of=np.full(n, PASSTHROUGH_CHUNK, dtype=np.int64),
                diag_scores=None,
            )
            self.counters.super_batches += 1
            self.counters.trained_samples += n
            return EmittedSelection(ordinal=ordinal, records=records, result=result)

        k = draws * self.cfg.n_chunks
        if self.strategy == "iid":
            selected = iid_select(n, k, chunk_rng(self.cfg.seed, ordinal, 0))
            result = SelectionResult(
                selected=selected,
                chunk_of=np.zeros(k, dtype=np.int64),
                diag_scores=None,
            )
        else:
            batch = SuperBatch(ordinal=ordinal, records=records)
            resolve_embeddings(batch, self.learner_source, self.reference_source)
            sim_learner = similarity_matrix(batch.learner_src, batch.learner_trg)
            sim_ref = similarity_matrix(batch.ref_src, batch.ref_trg)
            M = learnability_matrix(sim_learner, sim_ref, self.cfg.weights)
            self.counters.scored_samples += n
            self.counters.scoring_flops += 2.0 * n * n * (batch.learner_src.dim + batch.ref_src.dim)
            self.learner_diag.append(sim_learner.diagonal())
            self.reference_diag.append(sim_ref.diagonal())
            if self.strategy == "joint":
                result = joint_select(M, self.cfg, batch_ordinal=ordinal)
            else:
                selected = topk_individual_select(M, k)
                result = SelectionResult(
                    selected=selected,
                    chunk_of=np.zeros(k, dtype=np.int64),
                    diag_scores=M.diagonal()[selected],
                )
        self.counters.super_batches += 1
        self.counters.trained_samples += len(result.selected)
        return EmittedSelection(ordinal=ordinal, records=records, result=result)

    def histograms(self, n_bins: int = 40) -> dict[str, ScoreHistogram]:
        out: dict[str, ScoreHistogram] = {}
        if self.learner_diag and self.learner_source is not None:
            out[self.learner_source.model_id] = score_histogram(np.concatenate(self.learner_diag), n_bins)
        if self.reference_diag and self.reference_source is not None:
            out[self.reference_source.model_id] = score_histogram(np.concatenate(self.reference_diag), n_bins)
        return out


# -- serialization ----------------------------------------------------------------

def selection_record(emitted: EmittedSelection, seed: int) -> dict:
    result = emitted.result
    return {
        "super_batch_ordinal": emitted.ordinal,
        "selected_ids": emitted.selected_ids(),
        "chunk_of": result.chunk_of.tolist(),
        "diag_scores": None if result.diag_scores is None else [float(v) for v in result.diag_scores],
        "seed": seed,
    }


def dump_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_selection_stream(path: str | Path, emitted: Iterable[EmittedSelection], seed: int) -> list[EmittedSelection]:
    """Write the line-delimited selection stream; returns the materialized
    emissions so callers can keep aggregating."""
    kept = []
    with open(path, "w", encoding="utf-8") as fh:
        for item in emitted:
            fh.write(dump_record(selection_record(item, seed)) + "\n")
            kept.append(item)
    return kept


# -- FLOPS accounting ----------------------------------------------------------------

@dataclass
class CostModel:
    """Declared per-sample costs, in FLOPs.

    ``learner_fwd`` models the embedding (encoder-only) pass used for
    scoring; ``learner_bwd`` bundles the rest of a full training step, so
    a trained sample costs fwd + bwd. Defaults are transformer-scale
    ballparks; reports only ever compare totals built from the same model.
    """

    learner_fwd_flops_per_sample: float = 4e10
    learner_bwd_flops_per_sample: float = 2e11
    reference_fwd_flops_per_sample: float = 6e10

    def __post_init__(self):
        for name in (
            "learner_fwd_flops_per_sample",
            "learner_bwd_flops_per_sample",
            "reference_fwd_flops_per_sample",
        ):
            if getattr(self, name) < 0:
                raise DegenerateConfig(f"{name} must be non-negative")

    @property
    def train_flops_per_sample(self) -> float:
        return self.learner_fwd_flops_per_sample + self.learner_bwd_flops_per_sample

    @staticmethod
    def scoring_flops(n: int, d_learn: int, d_ref: int) -> float:
        return 2.0 * n * n * (d_learn + d_ref)


@dataclass
class RunReport:
    samples_trained: int
    super_batches: int
    total_flops: float
    flops_relative_to_iid: float
    cache_stats: CacheStats | None = None
    histograms: dict[str, ScoreHistogram] = field(default_factory=dict)
    strategy: str = ""
    seed: int = 0
    wall_seconds: float = 0.0

    def to_record(self) -> dict:
        return {
            "samples_trained": self.samples_trained,
            "super_batches": self.super_batches,
            "total_flops": self.total_flops,
            "flops_relative_to_iid": self.flops_relative_to_iid,
            "cache_stats": self.cache_stats.to_record() if self.cache_stats else None,
            "histograms": {k: v.to_record() for k, v in self.histograms.items()},
            "strategy": self.strategy,
            "seed": self.seed,
            "wall_seconds": self.wall_seconds,
        }


def flops_report(
    counters: FlopsCounters,
    cost: CostModel,
    iid_samples_for_parity: int,
    cache_stats: CacheStats | None = None,
    histograms: dict[str, ScoreHistogram] | None = None,
    strategy: str = "",
    seed: int = 0,
) -> RunReport:
    """Total modeled FLOPS of a run, and its ratio against plain-iid
    training of ``iid_samples_for_parity`` samples under the same costs.

    Reference forwards count only the samples actually fetched from the
    provider; with a warm cache that is zero, which is the whole benefit
    being accounted for.
    """
    total = (
        cost.reference_fwd_flops_per_sample * counters.reference_fwd_samples
        + cost.learner_fwd_flops_per_sample * counters.scored_samples
        + cost.train_flops_per_sample * counters.trained_samples
        + counters.scoring_flops
    )
    iid_total = cost.train_flops_per_sample * iid_samples_for_parity
    relative = total / iid_total if iid_total > 0 else 0.0
    return RunReport(
        samples_trained=counters.trained_samples,
        super_batches=counters.super_batches,
        total_flops=total,
        flops_relative_to_iid=relative,
        cache_stats=cache_stats,
        histograms=histograms or {},
        strategy=strategy,
        seed=seed,
        wall_seconds=counters.wall_seconds,
    )
