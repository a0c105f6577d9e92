from __future__ import annotations

import json

import numpy as np
import pytest

from oalsed.data_model import FeatureVector, LabelVector, Sample
from oalsed.engine import OracleAnnotator, run_al, run_oal, run_supervised
from oalsed.ingest import DriftConfig, generate_synthetic_stream
from oalsed.losses import LossConfig
from oalsed.network import ArchConfig, TrainConfig

from conftest import make_sample, make_stream

FAST = TrainConfig(batch_size=16, max_epochs=4, fallback_epochs=4, val_fraction=0.0, lr=1e-3)
ARCH2 = ArchConfig(input_dim=2, hidden=(8, 4), num_classes=1)


def blob_samples(prefix, n, flag, center, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    return [
        Sample(
            id=f"{prefix}{i:04d}",
            env_id="pool",
            timestamp=float(i),
            features=FeatureVector(np.asarray(center) + 0.4 * rng.standard_normal(dim)),
            label=LabelVector(np.array([flag])),
        )
        for i in range(n)
    ]


class TestOracle:
    def test_counts_distinct_releases(self):
        samples = [make_sample(f"s{i}", label=[i % 2]) for i in range(4)]
        oracle = OracleAnnotator.from_samples(samples)
        oracle.label(["s0", "s1"])
        oracle.label(["s1", "s2"])
        assert oracle.count == 3
        assert oracle.released_ids() == {"s0", "s1", "s2"}

    def test_answers_are_stable(self):
        samples = [make_sample("a", label=[1])]
        oracle = OracleAnnotator.from_samples(samples)
        first = oracle.label(["a"])["a"]
        second = oracle.label(["a"])["a"]
        assert first is second

    def test_unknown_id_rejected(self):
        oracle = OracleAnnotator.from_samples([make_sample("a", label=[1])])
        with pytest.raises(KeyError, match="missing"):
            oracle.label(["missing"])

    def test_unlabeled_sample_rejected(self):
        with pytest.raises(ValueError, match="unlabeled"):
            OracleAnnotator.from_samples([make_sample("a")])


class TestRunOal:
    def _stream(self, num_envs=2, sessions=3, seed=7):
        cfg = DriftConfig(
            num_envs=num_envs,
            sessions_per_env=sessions,
            session_len=30,
            dim=2,
            separation=3.0,
            seed=seed,
        )
        return generate_synthetic_stream(cfg)

    def test_label_accounting_identity(self):
        envs = self._stream(num_envs=2, sessions=3)
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0)
        # 2 envs * 8 bootstrap + 2 envs * 3 sessions * 5 queries
        assert report.labels_used == 2 * 8 + 2 * 3 * 5 == 46
        assert report.labels_bootstrap == 16
        assert report.labels_queried == 30
        assert report.samples_to_start == 30

    def test_budget_clamps_to_session_size(self):
        envs = self._stream(num_envs=1, sessions=2)
        # bootstrap eats 8 samples -> sessions of 30 and 22; budget 25 clamps on the tail
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=25, bootstrap_n=8, seed=0)
        assert report.labels_queried == 25 + 22

    def test_degenerate_budget_labels_everything(self):
        envs = self._stream(num_envs=1, sessions=1)
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=30, bootstrap_n=8, seed=0)
        assert "no_unlabeled_predictions" in report.flags
        assert report.per_session[0].queried_ids == tuple(sorted(report.per_session[0].queried_ids))
        assert report.dcf == 0.0

    def test_no_evaluated_sample_was_ever_labeled(self):
        envs = self._stream(num_envs=2, sessions=3)
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=1)
        queried = {qid for t in report.per_session for qid in t.queried_ids}
        total = sum(len(e) for e in envs)
        evaluated = total - report.labels_used
        assert len(queried) == report.labels_queried
        assert sum(len(t.queried_ids) for t in report.per_session) == report.labels_queried
        assert evaluated > 0

    def test_deterministic_reports(self):
        envs = self._stream(num_envs=2, sessions=2)
        a = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=3)
        b = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=3)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_sessions_traced_in_order_per_environment(self):
        envs = self._stream(num_envs=2, sessions=3)
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0)
        assert [t.session for t in report.per_session] == list(range(6))
        assert [t.env for t in report.per_session] == ["synth000"] * 3 + ["synth001"] * 3

    def test_shortfall_is_flagged_not_fatal(self):
        env = make_stream("rare", [0] * 80 + [1] + [0] * 40)
        report = run_oal([env], ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0)
        assert any(f.startswith("bootstrap_shortfall") for f in report.flags)
        assert report.labels_bootstrap == 5  # 1 present + 4 absent

    def test_shared_model_mode_runs(self):
        envs = self._stream(num_envs=2, sessions=2)
        report = run_oal(
            envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0,
            shared_model=True,
        )
        assert report.labels_used == 2 * 8 + 2 * 2 * 5

    def test_random_strategy_and_scratch_retraining(self):
        envs = self._stream(num_envs=1, sessions=2)
        report = run_oal(
            envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0,
            strategy="random", retrain_from_scratch=True,
        )
        assert report.run_id.startswith("oal-random-")
        assert report.labels_queried == 10

    def test_unknown_strategy_rejected(self):
        envs = self._stream(num_envs=1, sessions=1)
        with pytest.raises(ValueError, match="strategy"):
            run_oal(envs, ARCH2, FAST, LossConfig(), strategy="entropy")


class TestRunAl:
    def _pool_and_test(self, n=120, seed=0):
        pool = blob_samples("p", n // 2, 1, [2.0, 2.0], seed) + blob_samples(
            "q", n // 2, 0, [-2.0, -2.0], seed + 1
        )
        test = blob_samples("tp", 30, 1, [2.0, 2.0], seed + 2) + blob_samples(
            "tn", 30, 0, [-2.0, -2.0], seed + 3
        )
        return pool, test

    def test_zero_steps_reports_bootstrap_classifier(self):
        pool, test = self._pool_and_test()
        report = run_al(pool, test, ARCH2, FAST, LossConfig(), steps=0, bootstrap_n=8, seed=0)
        assert report.labels_used == 8
        assert report.per_session == ()
        assert 0.0 <= report.dcf <= 1.0

    def test_label_accounting_identity(self):
        pool, test = self._pool_and_test()
        report = run_al(
            pool, test, ARCH2, FAST, LossConfig(), steps=3, step_budget=10, bootstrap_n=8, seed=0
        )
        assert report.labels_used == 8 + 3 * 10
        assert report.samples_to_start == len(pool) + len(test)

    def test_pool_exhaustion_stops_early_with_flag(self):
        pool, test = self._pool_and_test(n=20)
        report = run_al(
            pool, test, ARCH2, FAST, LossConfig(), steps=10, step_budget=6, bootstrap_n=8, seed=0
        )
        assert "pool_exhausted" in report.flags
        assert report.labels_used == len(pool)

    def test_overlapping_pool_and_test_rejected(self):
        pool, _ = self._pool_and_test()
        with pytest.raises(ValueError, match="disjoint"):
            run_al(pool, pool[:5], ARCH2, FAST, LossConfig())

    def test_dcf_improves_on_separable_pool(self):
        """Prediction cost decreases (within noise) as labels accumulate."""
        wins = 0
        for seed in range(5):
            pool, test = self._pool_and_test(n=200, seed=seed * 10)
            cfg = TrainConfig(batch_size=16, max_epochs=15, fallback_epochs=15, val_fraction=0.0, lr=2e-3)
            report = run_al(
                pool, test, ARCH2, cfg, LossConfig(), steps=4, step_budget=20, bootstrap_n=8, seed=seed
            )
            first = report.per_session[0].dcf_so_far
            last = report.per_session[-1].dcf_so_far
            wins += last <= first + 0.02
        assert wins >= 4


class TestRunSupervised:
    def _splits(self):
        train = blob_samples("tr1", 40, 1, [2.0, 2.0], 1) + blob_samples("tr0", 40, 0, [-2.0, -2.0], 2)
        val = blob_samples("v1", 10, 1, [2.0, 2.0], 3) + blob_samples("v0", 10, 0, [-2.0, -2.0], 4)
        test = blob_samples("te1", 20, 1, [2.0, 2.0], 5) + blob_samples("te0", 20, 0, [-2.0, -2.0], 6)
        return train, val, test

    def test_overfit_sanity_on_separable_clone(self):
        train, val, _ = self._splits()
        # test set is a clone of train (fresh ids), the overfitting bound
        clones = [
            Sample(f"c{i:04d}", s.env_id, s.timestamp, s.features, s.label)
            for i, s in enumerate(train)
        ]
        cfg = TrainConfig(batch_size=16, max_epochs=40, patience=10, lr=5e-3)
        report = run_supervised(train, val, clones, ARCH2, cfg, LossConfig(), seed=0)
        assert report.dcf <= 0.02

    def test_label_and_start_accounting(self):
        train, val, test = self._splits()
        report = run_supervised(train, val, test, ARCH2, FAST, LossConfig(), seed=0)
        assert report.labels_used == len(train) + len(val)
        assert report.samples_to_start == len(train) + len(val) + len(test)
        assert report.per_session == ()

    def test_published_split_arithmetic(self):
        # the reference corpus split: 13,538 train + 4,308 val -> 17,846
        # labels, and 18,515 samples collected before training can begin
        assert 13_538 + 4_308 == 17_846
        assert 13_538 + 4_308 + 669 == 18_515

    def test_identical_seeds_identical_reports(self):
        train, val, test = self._splits()
        a = run_supervised(train, val, test, ARCH2, FAST, LossConfig(), seed=9)
        b = run_supervised(train, val, test, ARCH2, FAST, LossConfig(), seed=9)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_empty_split_is_configuration_error(self):
        train, val, test = self._splits()
        with pytest.raises(ValueError, match="non-empty"):
            run_supervised(train, val, [], ARCH2, FAST, LossConfig())

    def test_overlapping_splits_rejected(self):
        train, val, test = self._splits()
        with pytest.raises(ValueError, match="disjoint"):
            run_supervised(train, val, train[:3], ARCH2, FAST, LossConfig())

    def test_multiclass_reports_macro_auprc(self, rng):
        def multi(prefix, n, seed):
            gen = np.random.default_rng(seed)
            out = []
            centers = {0: [3.0, 0.0], 1: [-3.0, 0.0], 2: [0.0, 3.0]}
            for i in range(n):
                cls = int(gen.integers(0, 3))
                flags = np.zeros(3, dtype=int)
                flags[cls] = 1
                out.append(
                    Sample(
                        f"{prefix}{i:04d}",
                        "m",
                        float(i),
                        FeatureVector(np.asarray(centers[cls]) + 0.4 * gen.standard_normal(2)),
                        LabelVector(flags),
                    )
                )
            return out

        arch = ArchConfig(input_dim=2, hidden=(8, 4), num_classes=3)
        cfg = TrainConfig(batch_size=16, max_epochs=20, patience=5, lr=5e-3)
        report = run_supervised(
            multi("a", 90, 1), multi("b", 30, 2), multi("c", 45, 3), arch, cfg, LossConfig(), seed=0
        )
        assert report.auprc is not None and 0.0 <= report.auprc <= 1.0


class TestChronology:
    def test_prediction_uses_only_past_and_present_session_labels(self, monkeypatch):
        """The model scoring session i was trained only on bootstrap labels
        plus queries from sessions <= i of environments processed so far."""
        import oalsed.engine as engine_mod

        envs = generate_synthetic_stream(
            DriftConfig(num_envs=1, sessions_per_env=3, session_len=30, dim=2, separation=3.0, seed=2)
        )
        observed: list[tuple[int, frozenset]] = []
        real_train = engine_mod.train

        def spy_train(params, examples, cfg, loss_cfg, val_examples=None):
            observed.append(frozenset(e.sample_id for e in examples))
            return real_train(params, examples, cfg, loss_cfg, val_examples)

        monkeypatch.setattr(engine_mod, "train", spy_train)
        report = run_oal(envs, ARCH2, FAST, LossConfig(), session_len=30, budget=5, bootstrap_n=8, seed=0)

        # training sets grow monotonically: bootstrap, then +5 ids per session
        sizes = [len(s) for s in observed]
        assert sizes == [8, 13, 18, 23]
        for earlier, later in zip(observed, observed[1:]):
            assert earlier < later
        # the ids added at step i are exactly session i's queried ids
        for i, trace in enumerate(report.per_session):
            added = observed[i + 1] - observed[i]
            assert added == frozenset(trace.queried_ids)
