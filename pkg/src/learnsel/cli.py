"""Command-line entry points.

    learnsel select  --config run.ini [--strategy joint|topk|iid] ...
    learnsel score   --config run.ini
    learnsel cache   verify|compact --cache-dir DIR
    learnsel report  --report out/report.json [--out DIR]
    learnsel simlab  run --spec exp.json --strategy joint --budget 6000 --out curve.csv
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import cache as cache_mod
from . import figures
from .config import RunConfig, apply_overrides, load_run_config
from .core import LearnselError
from .pipeline import EpochRunner, IngestStats, dump_record, flops_report, ingest_corpus, selection_record
from .providers import CachedReferenceSource, HashEmbeddingProvider, ShardEmbeddingProvider
from .simlab import load_experiment_spec, run_experiment, with_strategy, write_curves_csv


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="INI run manifest")
    p.add_argument("--strategy", choices=("joint", "topk", "iid"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--super-batch", dest="super_batch", type=int, default=None)
    p.add_argument("--filter-ratio", dest="filter_ratio", type=float, default=None)
    p.add_argument("--chunks", type=int, default=None)
    p.add_argument("--w-easy", dest="w_easy", type=float, default=None)
    p.add_argument("--w-hard", dest="w_hard", type=float, default=None)
    p.add_argument("--chunk0-policy", dest="chunk0_policy", choices=("weighted", "uniform"), default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--cache-dir", dest="cache_dir", default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--corpus", default=None)
    p.add_argument("--format", choices=("tsv", "moses"), default=None)
    p.add_argument("--trg-corpus", dest="trg_corpus", default=None)


def _embedding_source(kind: str, model_id: str, dim: int, shard_dir: str):
    if kind == "hash":
        return HashEmbeddingProvider(model_id, dim)
    if kind == "shards":
        return ShardEmbeddingProvider(shard_dir, model_id, dim)
    raise LearnselError(f"unknown provider kind '{kind}' (expected hash or shards)")


def _build_sources(cfg: RunConfig):
    models = cfg.models
    learner = _embedding_source(
        models.learner_provider, models.learner_id, models.learner_dim, models.learner_shard_dir
    )
    ref_provider = _embedding_source(
        models.reference_provider, models.reference_id, models.reference_dim, models.reference_shard_dir
    )
    store = cache_mod.EmbeddingCache(cfg.cache.dir) if cfg.cache.enabled else None
    return learner, CachedReferenceSource(ref_provider, store), store


def _run_epoch(cfg: RunConfig, out_dir: Path, emit_selections: bool) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = IngestStats()
    stream = ingest_corpus(
        cfg.io.corpus,
        fmt=cfg.io.format,
        trg_path=cfg.io.trg_corpus or None,
        stats=stats,
    )
    learner, reference, store = _build_sources(cfg)
    runner = EpochRunner(cfg.selection, cfg.strategy, learner_source=learner, reference_source=reference)

    selections_path = out_dir / "selections.jsonl"
    if emit_selections:
        with open(selections_path, "w", encoding="utf-8") as fh:
            for emitted in runner.run(stream):
                fh.write(dump_record(selection_record(emitted, cfg.selection.seed)) + "\n")
    else:
        for _ in runner.run(stream):
            pass

    histograms = runner.histograms(cfg.io.histogram_bins)
    with open(out_dir / "histograms.jsonl", "w", encoding="utf-8") as fh:
        for model_id, hist in sorted(histograms.items()):
            fh.write(dump_record({"model_id": model_id, **hist.to_record()}) + "\n")
    if histograms:
        figures.render_histograms(histograms, out_dir / "histograms.png")

    report = flops_report(
        runner.counters,
        cfg.cost,
        iid_samples_for_parity=runner.counters.trained_samples,
        cache_stats=store.stats if store else None,
        histograms=histograms,
        strategy=cfg.strategy,
        seed=cfg.selection.seed,
    )
    (out_dir / "report.json").write_text(json.dumps(report.to_record(), indent=2) + "\n", encoding="utf-8")
    if store is not None:
        store.close()

    print(f"super-batches: {report.super_batches}")
    print(f"samples selected: {report.samples_trained}")
    print(f"lines skipped at ingest: {stats.skipped}")
    if emit_selections:
        print(f"selection stream: {selections_path}")
    print(f"report: {out_dir / 'report.json'}")
    return 0


def cmd_select(args) -> int:
    cfg = apply_overrides(load_run_config(args.config), args)
    return _run_epoch(cfg, Path(cfg.io.out_dir), emit_selections=True)


def cmd_score(args) -> int:
    cfg = apply_overrides(load_run_config(args.config), args)
    if cfg.strategy == "iid":
        cfg.strategy = "topk"  # scoring requires a scored strategy; any non-iid works
    return _run_epoch(cfg, Path(cfg.io.out_dir), emit_selections=False)


def cmd_cache(args) -> int:
    if args.action == "verify":
        report = cache_mod.verify_cache_dir(args.cache_dir)
        print(json.dumps(report.to_record(), indent=2))
        return 0 if report.ok else 1
    store = cache_mod.EmbeddingCache(args.cache_dir)
    kept = store.compact()
    store.close()
    print(json.dumps({"compacted_records": kept}))
    return 0


def cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    out_dir = Path(args.out or Path(args.report).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"strategy: {doc.get('strategy', '?')}  seed: {doc.get('seed', '?')}")
    print(f"samples trained: {doc['samples_trained']}  super-batches: {doc['super_batches']}")
    print(f"total FLOPS: {doc['total_flops']:.3e}  relative to iid: {doc['flops_relative_to_iid']:.3f}")
    if doc.get("cache_stats"):
        cs = doc["cache_stats"]
        print(f"cache: {cs['hits']} hits, {cs['misses']} misses, {cs['stored_vectors']} vectors")
    if doc.get("histograms"):
        from .scoring import ScoreHistogram  # local import keeps CLI startup light
        import numpy as np

        hists = {
            model: ScoreHistogram(
                bin_edges=np.asarray(rec["edges"]),
                counts=np.asarray(rec["counts"]),
                mean=rec["mean"],
                variance=rec["variance"],
            )
            for model, rec in doc["histograms"].items()
        }
        path = figures.render_histograms(hists, out_dir / "histograms.png")
        print(f"figure: {path}")
    return 0


def cmd_simlab(args) -> int:
    cfg = load_experiment_spec(args.spec)
    if args.strategy:
        cfg = with_strategy(cfg, args.strategy, seed=args.seed)
    elif args.seed is not None:
        cfg = with_strategy(cfg, cfg.strategy, seed=args.seed)
    if args.budget is not None:
        cfg = replace(cfg, budget_samples=args.budget)
    result = run_experiment(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curves_csv(out, [result.curve])
    figure_path = out.with_suffix(".png")
    figures.render_curves([result.curve], figure_path)
    final = result.curve.points[-1]
    print(f"strategy: {cfg.strategy}  seed: {cfg.selection.seed}")
    print(f"samples consumed: {final[0]}  final alignment: {final[1]:.4f}")
    print(f"noise exposure: {result.noise_exposure:.4f}")
    print(f"curve: {out}")
    print(f"figure: {figure_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learnsel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_select = sub.add_parser("select", help="run one selection epoch over a corpus")
    _add_run_flags(p_select)
    p_select.set_defaults(func=cmd_select)

    p_score = sub.add_parser("score", help="compute similarity histograms only")
    _add_run_flags(p_score)
    p_score.set_defaults(func=cmd_score)

    p_cache = sub.add_parser("cache", help="shard store maintenance")
    p_cache.add_argument("action", choices=("verify", "compact"))
    p_cache.add_argument("--cache-dir", dest="cache_dir", required=True)
    p_cache.set_defaults(func=cmd_cache)

    p_report = sub.add_parser("report", help="render a run report")
    p_report.add_argument("--report", required=True, help="path to report.json")
    p_report.add_argument("--out", default=None, help="directory for figures")
    p_report.set_defaults(func=cmd_report)

    p_sim = sub.add_parser("simlab", help="synthetic experiment lab")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)
    p_run = sim_sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--spec", required=True, help="JSON experiment spec")
    p_run.add_argument("--strategy", choices=("joint", "topk", "iid"), default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--budget", type=int, default=None)
    p_run.add_argument("--out", required=True, help="curve CSV path")
    p_run.set_defaults(func=cmd_simlab)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LearnselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
