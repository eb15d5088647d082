"""Run configuration: an INI manifest with [selection], [models], [cache],
[cost], and [io] sections. Every CLI flag overrides its config key, so a
manifest plus the command line fully determines a run."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import SelectionConfig, ScoreWeights, UnreadableFile
from .pipeline import CostModel


@dataclass
class ModelsConfig:
    learner_id: str = "learner"
    learner_dim: int = 64
    learner_provider: str = "hash"
    learner_shard_dir: str = ""
    reference_id: str = "reference"
    reference_dim: int = 64
    reference_provider: str = "hash"
    reference_shard_dir: str = ""


@dataclass
class CacheConfig:
    enabled: bool = True
    dir: str = ".learnsel-cache"


@dataclass
class IoConfig:
    corpus: str = ""
    format: str = "tsv"
    trg_corpus: str = ""
    out_dir: str = "out"
    histogram_bins: int = 40


@dataclass
class RunConfig:
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    strategy: str = "joint"
    models: ModelsConfig = field(default_factory=ModelsConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    cost: CostModel = field(default_factory=CostModel)
    io: IoConfig = field(default_factory=IoConfig)


def load_run_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(str(path))
    if not read:
        raise UnreadableFile(f"{path}: cannot read config file")

    if parser.has_section("selection"):
        s = parser["selection"]
        cfg.selection = SelectionConfig(
            super_batch_size=s.getint("super_batch_size", 4000),
            filter_ratio=s.getfloat("filter_ratio", 0.9),
            n_chunks=s.getint("n_chunks", 4),
            weights=ScoreWeights(
                w_easy=s.getfloat("w_easy", 0.8),
                w_hard=s.getfloat("w_hard", 0.2),
            ),
            large_constant_C=s.getfloat("large_constant_c", 1e6),
            seed=s.getint("seed", 0),
            chunk0_policy=s.get("chunk0_policy", "weighted"),
            temperature=s.getfloat("temperature", 1.0),
        )
        cfg.strategy = s.get("strategy", cfg.strategy)
    if parser.has_section("models"):
        m = parser["models"]
        cfg.models = ModelsConfig(
            learner_id=m.get("learner_id", "learner"),
            learner_dim=m.getint("learner_dim", 64),
            learner_provider=m.get("learner_provider", "hash"),
            learner_shard_dir=m.get("learner_shard_dir", ""),
            reference_id=m.get("reference_id", "reference"),
            reference_dim=m.getint("reference_dim", 64),
            reference_provider=m.get("reference_provider", "hash"),
            reference_shard_dir=m.get("reference_shard_dir", ""),
        )
    if parser.has_section("cache"):
        c = parser["cache"]
        cfg.cache = CacheConfig(enabled=c.getboolean("enabled", True), dir=c.get("dir", ".learnsel-cache"))
    if parser.has_section("cost"):
        c = parser["cost"]
        cfg.cost = CostModel(
            learner_fwd_flops_per_sample=c.getfloat("learner_fwd_flops_per_sample", 4e10),
            learner_bwd_flops_per_sample=c.getfloat("learner_bwd_flops_per_sample", 2e11),
            reference_fwd_flops_per_sample=c.getfloat("reference_fwd_flops_per_sample", 6e10),
        )
    if parser.has_section("io"):
        i = parser["io"]
        cfg.io = IoConfig(
            corpus=i.get("corpus", ""),
            format=i.get("format", "tsv"),
            trg_corpus=i.get("trg_corpus", ""),
            out_dir=i.get("out_dir", "out"),
            histogram_bins=i.getint("histogram_bins", 40),
        )
    return cfg


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Fold parsed CLI flags (argparse namespace, None = not given) over a
    loaded config."""
    sel = cfg.selection
    weights = sel.weights
    if getattr(args, "w_easy", None) is not None or getattr(args, "w_hard", None) is not None:
        weights = ScoreWeights(
            w_easy=args.w_easy if args.w_easy is not None else weights.w_easy,
            w_hard=args.w_hard if args.w_hard is not None else weights.w_hard,
        )
    updates = {}
    if getattr(args, "super_batch", None) is not None:
        updates["super_batch_size"] = args.super_batch
    if getattr(args, "filter_ratio", None) is not None:
        updates["filter_ratio"] = args.filter_ratio
    if getattr(args, "chunks", None) is not None:
        updates["n_chunks"] = args.chunks
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "chunk0_policy", None) is not None:
        updates["chunk0_policy"] = args.chunk0_policy
    if getattr(args, "temperature", None) is not None:
        updates["temperature"] = args.temperature
    if weights is not sel.weights:
        updates["weights"] = weights
    if updates:
        sel = replace(sel, **updates)
    cfg.selection = sel
    if getattr(args, "strategy", None) is not None:
        cfg.strategy = args.strategy
    if getattr(args, "cache_dir", None) is not None:
        cfg.cache.dir = args.cache_dir
    if getattr(args, "out", None) is not None:
        cfg.io.out_dir = args.out
    if getattr(args, "corpus", None) is not None:
        cfg.io.corpus = args.corpus
    if getattr(args, "format", None) is not None:
        cfg.io.format = args.format
    if getattr(args, "trg_corpus", None) is not None:
        cfg.io.trg_corpus = args.trg_corpus
    return cfg
