import numpy as np
import pytest

from learnsel.core import DegenerateConfig, MissingLabel, UnknownId, ScoreWeights, SelectionConfig
from learnsel.scoring import similarity_matrix
from learnsel.simlab import (
    ExperimentConfig,
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    init_toy_learner,
    load_experiment_spec,
    noise_exposure,
    run_experiment,
    toy_learner_update,
    with_strategy,
    write_curves_csv,
)

from experiment_setups import efficiency_experiment


def small_spec(**kw):
    defaults = dict(n_clean=60, n_noisy=20, dim=16, ref_noise_sigma=0.05, learner_init_sigma=50.0, seed=3)
    defaults.update(kw)
    return SyntheticCorpusSpec(**defaults)


class TestGenerateCorpus:
    def test_zero_noise_gives_perfect_clean_diagonal(self):
        corpus = generate_synthetic_corpus(small_spec(ref_noise_sigma=0.0))
        sim = similarity_matrix(corpus.ref_src, corpus.ref_trg)
        diag = np.diagonal(sim.values)
        clean = corpus.clean_ids()
        assert np.all(diag[clean] > 1.0 - 1e-5)

    def test_noisy_pairs_have_near_zero_similarity(self):
        # Independent unit latents at dim 64: E|dot| = sqrt(2/(pi*64)) ~ 0.1.
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(n_clean=0, n_noisy=1000, dim=64, ref_noise_sigma=0.0, seed=1)
        )
        sim = similarity_matrix(corpus.ref_src, corpus.ref_trg)
        assert np.abs(np.diagonal(sim.values)).mean() < 0.15

    def test_deterministic_given_seed(self):
        a = generate_synthetic_corpus(small_spec())
        b = generate_synthetic_corpus(small_spec())
        assert a.ref_src.rows.tobytes() == b.ref_src.rows.tobytes()
        assert [r.src_text for r in a.records] == [r.src_text for r in b.records]
        assert [r.noise_label for r in a.records] == [r.noise_label for r in b.records]

    def test_labels_count_matches_spec(self):
        corpus = generate_synthetic_corpus(small_spec())
        labels = corpus.labels()
        assert sum(labels.values()) == 20
        assert len(labels) == 80

    def test_clean_and_noisy_interleaved(self):
        corpus = generate_synthetic_corpus(small_spec())
        flags = [r.noise_label for r in corpus.records]
        # a contiguous block would mean the shuffle did not happen
        assert flags[:20].count(True) not in (0, 20)

    def test_antipodal_fraction(self):
        corpus = generate_synthetic_corpus(
            SyntheticCorpusSpec(
                n_clean=0, n_noisy=400, dim=32, ref_noise_sigma=0.0, antipodal_fraction=1.0, seed=2
            )
        )
        sim = similarity_matrix(corpus.ref_src, corpus.ref_trg)
        assert np.all(np.diagonal(sim.values) < -1.0 + 1e-4)

    def test_rejects_undersized_corpus(self):
        with pytest.raises(DegenerateConfig):
            SyntheticCorpusSpec(n_clean=1, n_noisy=0)


class TestToyLearner:
    def test_full_step_reaches_normalized_midpoint(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus, lr=1.0)
        before_src = state.src_table[5].astype(np.float64)
        before_trg = state.trg_table[5].astype(np.float64)
        mid = (before_src + before_trg) / 2
        mid /= np.linalg.norm(mid)
        after = toy_learner_update(state, [5])
        np.testing.assert_allclose(after.src_table[5], mid, atol=1e-6)
        np.testing.assert_allclose(after.trg_table[5], mid, atol=1e-6)
        assert after.diagonal_similarity(np.array([5]))[0] == pytest.approx(1.0, abs=1e-6)

    def test_empty_selection_only_advances_step(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus)
        after = toy_learner_update(state, [])
        assert after.step == state.step + 1
        assert after.src_table.tobytes() == state.src_table.tobytes()

    def test_half_step_strictly_improves_similarity(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus, lr=0.5)
        ids = np.arange(10)
        before = state.diagonal_similarity(ids)
        after = toy_learner_update(state, ids).diagonal_similarity(ids)
        assert np.all(after > before)

    def test_half_step_matches_closed_form(self):
        # normalize(v + 0.5*(m - v)) = normalize(0.75 s + 0.25 t) for the
        # source side; checked against direct arithmetic.
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus, lr=0.5)
        s = state.src_table[3].astype(np.float64)
        t = state.trg_table[3].astype(np.float64)
        expect = 0.75 * s + 0.25 * t
        expect /= np.linalg.norm(expect)
        after = toy_learner_update(state, [3])
        np.testing.assert_allclose(after.src_table[3], expect, atol=1e-6)

    def test_unselected_rows_untouched(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus)
        after = toy_learner_update(state, [0, 1])
        assert after.src_table[2:].tobytes() == state.src_table[2:].tobytes()

    def test_rows_stay_unit_norm(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus, lr=0.7)
        for _ in range(3):
            state = toy_learner_update(state, np.arange(40))
        norms = np.linalg.norm(state.src_table.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-5)

    def test_never_decreases_similarity(self):
        corpus = generate_synthetic_corpus(small_spec(seed=9))
        for lr in (0.1, 0.5, 1.0):
            state = init_toy_learner(corpus, lr=lr)
            ids = np.arange(30)
            before = state.diagonal_similarity(ids)
            after = toy_learner_update(state, ids).diagonal_similarity(ids)
            assert np.all(after >= before - 1e-9)

    def test_unknown_id_rejected(self):
        corpus = generate_synthetic_corpus(small_spec())
        state = init_toy_learner(corpus)
        with pytest.raises(UnknownId):
            toy_learner_update(state, [999])


class TestNoiseExposure:
    def test_all_clean(self):
        assert noise_exposure([0, 1], {0: False, 1: False}) == 0.0

    def test_fraction(self):
        assert noise_exposure([0, 1, 2, 3], {0: True, 1: False, 2: False, 3: False}) == 0.25

    def test_missing_label(self):
        with pytest.raises(MissingLabel):
            noise_exposure([0, 1], {0: False})


class TestRunExperiment:
    def test_zero_budget_yields_single_point(self):
        cfg = ExperimentConfig(
            corpus=small_spec(),
            selection=SelectionConfig(super_batch_size=40, filter_ratio=0.5, n_chunks=2, seed=0),
            strategy="iid",
            budget_samples=0,
        )
        result = run_experiment(cfg)
        assert len(result.curve.points) == 1
        assert result.curve.points[0][0] == 0

    def test_clean_only_corpus_converges_monotonically(self):
        cfg = ExperimentConfig(
            corpus=SyntheticCorpusSpec(
                n_clean=80, n_noisy=0, dim=16, ref_noise_sigma=0.02, learner_init_sigma=50.0, seed=4
            ),
            selection=SelectionConfig(super_batch_size=40, filter_ratio=0.5, n_chunks=2, seed=4),
            strategy="joint",
            lr=1.0,
            budget_samples=700,
        )
        result = run_experiment(cfg)
        metrics = [m for _, m in result.curve.points]
        assert metrics[-1] > 0.99
        assert all(b >= a - 1e-6 for a, b in zip(metrics, metrics[1:]))

    def test_iid_exposure_tracks_corpus_rate(self):
        cfg = ExperimentConfig(
            corpus=small_spec(n_clean=160, n_noisy=40, seed=8),
            selection=SelectionConfig(super_batch_size=50, filter_ratio=0.5, n_chunks=2, seed=8),
            strategy="iid",
            budget_samples=2000,
        )
        result = run_experiment(cfg)
        assert result.noise_exposure == pytest.approx(0.2, abs=0.05)

    def test_curves_deterministic_and_csv_byte_identical(self, tmp_path):
        cfg = efficiency_experiment(seed=0)
        cfg = with_strategy(cfg, "joint")
        import dataclasses

        cfg = dataclasses.replace(cfg, budget_samples=500)
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert a.curve.points == b.curve.points
        write_curves_csv(tmp_path / "a.csv", [a.curve])
        write_curves_csv(tmp_path / "b.csv", [b.curve])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_samples_consumed_strictly_increasing(self):
        cfg = ExperimentConfig(
            corpus=small_spec(),
            selection=SelectionConfig(super_batch_size=40, filter_ratio=0.5, n_chunks=2, seed=1),
            strategy="joint",
            budget_samples=300,
        )
        points = run_experiment(cfg).curve.points
        samples = [s for s, _ in points]
        assert all(b > a for a, b in zip(samples, samples[1:]))

    def test_corpus_too_small_to_draw_is_degenerate(self):
        # 3 pairs at filter 0.9 over 2 chunks: floor(3*0.1/2) = 0 draws.
        cfg = ExperimentConfig(
            corpus=small_spec(n_clean=3, n_noisy=0, seed=0),
            selection=SelectionConfig(super_batch_size=400, filter_ratio=0.9, n_chunks=2, seed=0),
            strategy="iid",
            budget_samples=10,
        )
        with pytest.raises(DegenerateConfig):
            run_experiment(cfg)


class TestSpecFile:
    def test_round_trip_from_json(self, tmp_path):
        doc = {
            "corpus": {"n_clean": 50, "n_noisy": 10, "dim": 16, "seed": 2},
            "selection": {
                "super_batch_size": 30,
                "filter_ratio": 0.5,
                "n_chunks": 2,
                "seed": 2,
                "weights": {"w_easy": 0.7, "w_hard": 0.3},
            },
            "strategy": "topk",
            "lr": 0.5,
            "budget_samples": 120,
        }
        import json

        path = tmp_path / "exp.json"
        path.write_text(json.dumps(doc))
        cfg = load_experiment_spec(path)
        assert cfg.strategy == "topk"
        assert cfg.selection.weights == ScoreWeights(0.7, 0.3)
        assert cfg.corpus.n_clean == 50
        result = run_experiment(cfg)
        assert result.selected_total >= 120
