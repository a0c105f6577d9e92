"""The three training paradigms plus the simulated oracle annotator.

Streaming online active learning processes each environment session by
session: score the session with the query strategy, obtain labels for the
selected budget, fold them into the adaptation pool, update the classifier
on the whole pool, then predict the session's remaining unlabeled samples.
Those predictions, accumulated across all sessions and environments, are
the prequential evaluation ledger that the final metrics summarize.

Pool-based active learning iterates query steps against a fixed unlabeled
pool and evaluates on a held-out test set; fully-supervised training fits
the whole labeled training split with early stopping on the validation
split. Every run is deterministic given (data, configs, seed).
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Sequence

import numpy as np

from .data_model import (
    AdaptationPool,
    Environment,
    LabelVector,
    Sample,
    build_bootstrap,
    build_sessions,
    stack_features,
    stack_labels,
)
from .losses import LossConfig, loss_token
from .metrics import (
    auprc_score,
    confusion_counts,
    dcf,
    error_rates,
    macro_auprc,
    pr_curve,
)
from .network import ArchConfig, TrainConfig, forward, init_classifier, predict, train
from .query import energy_scores, random_strategy, select_queries
from .report import RunReport, SessionTrace

logger = logging.getLogger("oalsed")

__all__ = [
    "OracleAnnotator",
    "RunReport",
    "SessionTrace",
    "run_oal",
    "run_al",
    "run_supervised",
]

# Tags that keep the derived seed streams of the run phases apart.
_SEED_INIT = 0
_SEED_BOOT = 1
_SEED_TRAIN = 2
_SEED_QUERY = 3


def _child_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


class OracleAnnotator:
    """Releases immutable ground-truth labels and counts distinct releases."""

    def __init__(self, answers: dict[str, LabelVector]):
        self._answers = dict(answers)
        self._released: set[str] = set()

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "OracleAnnotator":
        answers: dict[str, LabelVector] = {}
        for s in samples:
            if s.label is None:
                raise ValueError(f"oracle requires ground truth; sample {s.id!r} is unlabeled")
            answers[s.id] = s.label
        return cls(answers)

    def label(self, ids: Sequence[str]) -> dict[str, LabelVector]:
        out: dict[str, LabelVector] = {}
        for sid in ids:
            if sid not in self._answers:
                raise KeyError(f"oracle has no answer for sample {sid!r}")
            self._released.add(sid)
            out[sid] = self._answers[sid]
        return out

    @property
    def count(self) -> int:
        return len(self._released)

    def released_ids(self) -> set[str]:
        return set(self._released)


class _EvalLedger:
    """Accumulated (posterior, ground truth) pairs for unlabeled predictions."""

    def __init__(self) -> None:
        self.ids: list[str] = []
        self._posts: list[np.ndarray] = []
        self._truth: list[np.ndarray] = []

    def extend(self, samples: Sequence[Sample], posteriors: np.ndarray) -> None:
        for s, row in zip(samples, posteriors):
            if s.label is None:
                raise ValueError(f"ledger requires ground truth for sample {s.id!r}")
            self.ids.append(s.id)
            self._posts.append(np.asarray(row, dtype=np.float64))
            self._truth.append(s.label.flags)

    def __len__(self) -> int:
        return len(self.ids)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.ids:
            return np.empty((0, 0)), np.empty((0, 0), dtype=np.int64)
        return np.stack(self._posts), np.stack(self._truth)

    def target_dcf(self, target_class: int) -> float:
        if not self.ids:
            return 0.0
        posts, truth = self.arrays()
        rates = error_rates(
            confusion_counts(posts[:, target_class], truth[:, target_class])
        )
        return dcf(rates.fnr, rates.fpr)


def _final_metrics(
    posts: np.ndarray, truth: np.ndarray, target_class: int
) -> tuple[float, float, float, float | None, tuple[str, ...]]:
    """DCF/FNR/FPR on the target class plus AUPRC (macro when multi-class)."""
    if posts.shape[0] == 0:
        return 0.0, 0.0, 0.0, None, ("no_unlabeled_predictions",)
    rates = error_rates(
        confusion_counts(posts[:, target_class], truth[:, target_class])
    )
    num_classes = posts.shape[1]
    if num_classes > 1:
        macro = macro_auprc(
            [pr_curve(posts[:, c], truth[:, c]) for c in range(num_classes)]
        )
        area = macro.value
    else:
        area = auprc_score(posts[:, target_class], truth[:, target_class])
    return dcf(rates.fnr, rates.fpr), rates.fnr, rates.fpr, area, rates.flags


def _score_session(
    params, samples: Sequence[Sample], strategy: str, temperature: float
) -> np.ndarray:
    _, logits, _ = forward(params, stack_features(samples))
    return energy_scores(logits, temperature)


def run_oal(
    environments: Sequence[Environment],
    arch: ArchConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    *,
    session_len: int = 30,
    budget: int = 5,
    bootstrap_n: int = 8,
    strategy: str = "negenergy",
    temperature: float = 1.0,
    target_class: int = 0,
    seed: int = 0,
    shared_model: bool = False,
    retrain_from_scratch: bool = False,
) -> RunReport:
    """Streaming online active learning over every environment.

    Each environment gets its own classifier by default (one model per
    sensor); shared_model=True threads a single classifier and adaptation
    pool through all environments in order.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    envs = sorted(environments, key=lambda e: e.env_id)
    all_samples = [s for env in envs for s in env.samples]
    oracle = OracleAnnotator.from_samples(all_samples)
    ledger = _EvalLedger()
    trace: list[SessionTrace] = []
    flags: list[str] = []
    labels_bootstrap = 0
    labels_queried = 0
    global_session = 0

    shared_params = None
    shared_pool = AdaptationPool() if shared_model else None

    for env_index, env in enumerate(envs):
        corpus = build_bootstrap(env, bootstrap_n, target_class)
        sessions = build_sessions(env, session_len, skip=corpus)
        if not sessions:
            logger.warning("environment %s has no sessions; skipped", env.env_id)
            flags.append(f"env_skipped:{env.env_id}")
            continue
        if corpus.shortfall:
            flags.append(f"bootstrap_shortfall:{env.env_id}")

        pool = shared_pool if shared_model else AdaptationPool()
        answers = oracle.label([s.id for s in corpus.samples])
        labels_bootstrap += len(answers)
        for s in corpus.samples:
            pool.add(s, answers[s.id])

        init_seed = _child_seed(seed, _SEED_INIT, 0 if shared_model else env_index)
        if shared_model and shared_params is not None:
            params = shared_params
        else:
            params = init_classifier(arch, init_seed)
        cfg = replace(
            train_cfg,
            seed=_child_seed(seed, _SEED_TRAIN, env_index, 0),
            target_class=target_class,
        )
        params, _ = train(params, pool.examples(), cfg, loss_cfg)

        for s_idx, session in enumerate(sessions):
            if strategy == "negenergy":
                scores = _score_session(params, session.samples, strategy, temperature)
                queried = select_queries(session.samples, scores, budget, exclude=pool.ids())
            elif strategy == "random":
                rng = np.random.default_rng(
                    _child_seed(seed, _SEED_QUERY, env_index, s_idx)
                )
                queried = random_strategy(session.samples, budget, rng, exclude=pool.ids())
            else:
                raise ValueError(f"unknown query strategy {strategy!r}")

            answers = oracle.label(queried)
            labels_queried += len(queried)
            by_id = {s.id: s for s in session.samples}
            for sid in queried:
                pool.add(by_id[sid], answers[sid])

            cfg = replace(
                train_cfg,
                seed=_child_seed(seed, _SEED_TRAIN, env_index, s_idx + 1),
                target_class=target_class,
            )
            if retrain_from_scratch:
                params = init_classifier(arch, init_seed)
            params, _ = train(params, pool.examples(), cfg, loss_cfg)

            queried_set = set(queried)
            unlabeled = [s for s in session.samples if s.id not in queried_set]
            if unlabeled:
                posts, _ = predict(params, unlabeled)
                ledger.extend(unlabeled, posts)
            trace.append(
                SessionTrace(
                    session=global_session,
                    queried_ids=tuple(sorted(queried)),
                    dcf_so_far=ledger.target_dcf(target_class),
                    env=env.env_id,
                )
            )
            global_session += 1

        if shared_model:
            shared_params = params

    # Nothing the model was scored on may ever have been labeled.
    assert set(ledger.ids).isdisjoint(oracle.released_ids())

    posts, truth = ledger.arrays()
    final_dcf, fnr, fpr, area, rate_flags = _final_metrics(posts, truth, target_class)
    flags.extend(rate_flags)
    assert oracle.count == labels_bootstrap + labels_queried

    token = loss_token(loss_cfg)
    return RunReport(
        run_id=f"oal-{strategy}-{token}-s{seed}",
        paradigm="oal",
        loss=token,
        seed=seed,
        dcf=final_dcf,
        fnr=fnr,
        fpr=fpr,
        auprc=area,
        labels_used=oracle.count,
        labels_bootstrap=labels_bootstrap,
        labels_queried=labels_queried,
        samples_to_start=session_len,
        per_session=tuple(trace),
        flags=tuple(flags),
    )


def _al_bootstrap(
    pool_samples: Sequence[Sample],
    n: int,
    target_class: int,
    rng: np.random.Generator,
) -> tuple[list[Sample], dict[str, int]]:
    """A seeded class-balanced bootstrap draw from an unordered pool."""
    if n <= 0 or n % 2 != 0:
        raise ValueError("bootstrap size N must be a positive even integer")
    per_category = n // 2
    order = rng.permutation(len(pool_samples))
    present: list[Sample] = []
    absent: list[Sample] = []
    for i in order:
        s = pool_samples[i]
        if s.label is None:
            raise ValueError(f"pool sample {s.id!r} lacks ground truth")
        if s.label.present(target_class):
            if len(present) < per_category:
                present.append(s)
        elif len(absent) < per_category:
            absent.append(s)
        if len(present) == per_category and len(absent) == per_category:
            break
    shortfall: dict[str, int] = {}
    if len(present) < per_category:
        shortfall["present"] = per_category - len(present)
    if len(absent) < per_category:
        shortfall["absent"] = per_category - len(absent)
    return present + absent, shortfall


def _test_eval(params, test_samples: Sequence[Sample], target_class: int):
    posts, _ = predict(params, test_samples)
    truth = stack_labels(test_samples)
    return posts, truth


def run_al(
    pool_samples: Sequence[Sample],
    test_samples: Sequence[Sample],
    arch: ArchConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    *,
    steps: int = 20,
    step_budget: int = 50,
    bootstrap_n: int = 8,
    strategy: str = "negenergy",
    temperature: float = 1.0,
    target_class: int = 0,
    seed: int = 0,
    retrain_from_scratch: bool = False,
) -> RunReport:
    """Pool-based active learning with a fixed held-out test set."""
    pool_ids = {s.id for s in pool_samples}
    if any(s.id in pool_ids for s in test_samples):
        raise ValueError("pool and test sets must be disjoint")
    if steps < 0 or step_budget < 1:
        raise ValueError("steps must be >= 0 and step_budget >= 1")

    oracle = OracleAnnotator.from_samples(pool_samples)
    flags: list[str] = []

    boot_rng = np.random.default_rng(_child_seed(seed, _SEED_BOOT))
    boot_samples, shortfall = _al_bootstrap(pool_samples, bootstrap_n, target_class, boot_rng)
    if shortfall:
        flags.append("bootstrap_shortfall")
    answers = oracle.label([s.id for s in boot_samples])
    labeled = AdaptationPool()
    for s in boot_samples:
        labeled.add(s, answers[s.id])
    labels_bootstrap = len(boot_samples)

    boot_ids = {s.id for s in boot_samples}
    remaining = [s for s in pool_samples if s.id not in boot_ids]

    init_seed = _child_seed(seed, _SEED_INIT)
    params = init_classifier(arch, init_seed)
    cfg = replace(train_cfg, seed=_child_seed(seed, _SEED_TRAIN, 0), target_class=target_class)
    params, _ = train(params, labeled.examples(), cfg, loss_cfg)

    posts, truth = _test_eval(params, test_samples, target_class)
    trace: list[SessionTrace] = []
    labels_queried = 0

    for step in range(steps):
        if not remaining:
            flags.append("pool_exhausted")
            break
        if strategy == "negenergy":
            scores = _score_session(params, remaining, strategy, temperature)
            queried = select_queries(remaining, scores, step_budget, exclude=labeled.ids())
        elif strategy == "random":
            rng = np.random.default_rng(_child_seed(seed, _SEED_QUERY, step))
            queried = random_strategy(remaining, step_budget, rng, exclude=labeled.ids())
        else:
            raise ValueError(f"unknown query strategy {strategy!r}")

        answers = oracle.label(queried)
        labels_queried += len(queried)
        by_id = {s.id: s for s in remaining}
        for sid in queried:
            labeled.add(by_id[sid], answers[sid])
        queried_set = set(queried)
        remaining = [s for s in remaining if s.id not in queried_set]

        cfg = replace(
            train_cfg, seed=_child_seed(seed, _SEED_TRAIN, step + 1), target_class=target_class
        )
        if retrain_from_scratch:
            params = init_classifier(arch, init_seed)
        params, _ = train(params, labeled.examples(), cfg, loss_cfg)

        posts, truth = _test_eval(params, test_samples, target_class)
        rates = error_rates(
            confusion_counts(posts[:, target_class], truth[:, target_class])
        )
        trace.append(
            SessionTrace(
                session=step,
                queried_ids=tuple(sorted(queried)),
                dcf_so_far=dcf(rates.fnr, rates.fpr),
            )
        )

    final_dcf, fnr, fpr, area, rate_flags = _final_metrics(posts, truth, target_class)
    flags.extend(rate_flags)
    assert oracle.count == labels_bootstrap + labels_queried

    token = loss_token(loss_cfg)
    return RunReport(
        run_id=f"al-{strategy}-{token}-s{seed}",
        paradigm="al",
        loss=token,
        seed=seed,
        dcf=final_dcf,
        fnr=fnr,
        fpr=fpr,
        auprc=area,
        labels_used=oracle.count,
        labels_bootstrap=labels_bootstrap,
        labels_queried=labels_queried,
        samples_to_start=len(pool_samples) + len(test_samples),
        per_session=tuple(trace),
        flags=tuple(flags),
    )


def _labeled_examples(samples: Sequence[Sample]):
    pool = AdaptationPool()
    for s in samples:
        if s.label is None:
            raise ValueError(f"supervised split requires labels; {s.id!r} has none")
        pool.add(s, s.label)
    return pool.examples()


def run_supervised(
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    test_samples: Sequence[Sample],
    arch: ArchConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    *,
    target_class: int = 0,
    seed: int = 0,
) -> RunReport:
    """Train on the full labeled split, early-stop on val, evaluate on test."""
    if not train_samples or not val_samples or not test_samples:
        raise ValueError("supervised training requires non-empty train/val/test splits")
    ids = [s.id for s in (*train_samples, *val_samples, *test_samples)]
    if len(set(ids)) != len(ids):
        raise ValueError("train/val/test splits must be disjoint")

    params = init_classifier(arch, _child_seed(seed, _SEED_INIT))
    cfg = replace(train_cfg, seed=_child_seed(seed, _SEED_TRAIN), target_class=target_class)
    params, trace = train(
        params,
        _labeled_examples(train_samples),
        cfg,
        loss_cfg,
        val_examples=_labeled_examples(val_samples),
    )

    posts, truth = _test_eval(params, test_samples, target_class)
    final_dcf, fnr, fpr, area, rate_flags = _final_metrics(posts, truth, target_class)

    token = loss_token(loss_cfg)
    return RunReport(
        run_id=f"supervised-{token}-s{seed}",
        paradigm="supervised",
        loss=token,
        seed=seed,
        dcf=final_dcf,
        fnr=fnr,
        fpr=fpr,
        auprc=area,
        labels_used=len(train_samples) + len(val_samples),
        labels_bootstrap=0,
        labels_queried=0,
        samples_to_start=len(train_samples) + len(val_samples) + len(test_samples),
        per_session=(),
        flags=tuple(rate_flags),
    )
