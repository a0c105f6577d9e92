"""Domain types for sensor streams: environments, sessions, bootstrap corpora.

A dataset starts as a flat collection of timestamped, sensor-tagged feature
vectors. For online processing it is reorganized per sensor ("environment"),
chronologically ordered, split into a small labeled bootstrap prefix per
class category, and the remainder chunked into fixed-length sessions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger("oalsed")

__all__ = [
    "FeatureVector",
    "LabelVector",
    "Sample",
    "Environment",
    "Session",
    "BootstrapCorpus",
    "AdaptationPool",
    "LabeledExample",
    "OrganizeReport",
    "organize_environments",
    "build_sessions",
    "build_bootstrap",
    "stack_features",
    "stack_labels",
]


@dataclass(frozen=True)
class FeatureVector:
    """One fixed-dimension feature vector; every component must be finite."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("feature vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class LabelVector:
    """Per-class presence flags, one 0/1 entry per class."""

    flags: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.flags)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("label vector must be a non-empty 1-D array")
        if not np.all(np.isin(arr, (0, 1))):
            raise ValueError("label flags must be 0 or 1")
        arr = arr.astype(np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "flags", arr)

    @property
    def num_classes(self) -> int:
        return int(self.flags.shape[0])

    def present(self, class_index: int) -> bool:
        return bool(self.flags[class_index] == 1)


@dataclass(frozen=True)
class Sample:
    """One timestamped feature vector from one sensor, optionally labeled.

    The label is present iff the sample comes from an annotated manifest or
    synthetic ground truth; streaming code must not read it before the
    oracle releases it.
    """

    id: str
    env_id: str
    timestamp: float
    features: FeatureVector
    label: LabelVector | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if not self.env_id:
            raise ValueError("sample env_id must be non-empty")
        if not np.isfinite(self.timestamp):
            raise ValueError(f"sample {self.id!r}: timestamp must be finite")


def _chronological_key(sample: Sample) -> tuple[float, str]:
    # Equal timestamps tie-break on id so stream order is deterministic.
    return (sample.timestamp, sample.id)


@dataclass(frozen=True)
class Environment:
    """All samples from one fixed-location sensor, chronologically ordered."""

    env_id: str
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        for s in self.samples:
            if s.env_id != self.env_id:
                raise ValueError(
                    f"environment {self.env_id!r} contains sample {s.id!r} "
                    f"tagged {s.env_id!r}"
                )
        ts = [s.timestamp for s in self.samples]
        if any(a > b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"environment {self.env_id!r}: timestamps decrease")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Session:
    """A contiguous chunk of an environment's post-bootstrap chronology."""

    index: int
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("session index must be non-negative")
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("session must contain at least one sample")

    def __len__(self) -> int:
        return len(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


@dataclass(frozen=True)
class BootstrapCorpus:
    """The labeled corpus that initializes a classifier for one environment.

    `shortfall` maps a category name ("present"/"absent") to the number of
    missing samples when the environment held fewer than size_target/2
    occurrences of that category.
    """

    samples: tuple[Sample, ...]
    size_target: int
    shortfall: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.size_target <= 0 or self.size_target % 2 != 0:
            raise ValueError("bootstrap size_target must be a positive even integer")
        object.__setattr__(self, "samples", tuple(self.samples))
        for s in self.samples:
            if s.label is None:
                raise ValueError(f"bootstrap sample {s.id!r} is unlabeled")

    def ids(self) -> set[str]:
        return {s.id for s in self.samples}

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class LabeledExample:
    """A (sample, label) pair in the form training code consumes."""

    sample_id: str
    features: np.ndarray
    label: np.ndarray


class AdaptationPool:
    """Append-only collection of labeled samples accumulated during a run."""

    def __init__(self) -> None:
        self._examples: list[LabeledExample] = []
        self._ids: set[str] = set()

    def add(self, sample: Sample, label: LabelVector) -> None:
        if sample.id in self._ids:
            raise ValueError(f"duplicate sample id in adaptation pool: {sample.id!r}")
        self._ids.add(sample.id)
        self._examples.append(
            LabeledExample(sample.id, sample.features.values, label.flags)
        )

    def ids(self) -> set[str]:
        return set(self._ids)

    def examples(self) -> list[LabeledExample]:
        return list(self._examples)

    def __len__(self) -> int:
        return len(self._examples)


@dataclass(frozen=True)
class OrganizeReport:
    """What organize_environments kept and what it dropped (env_id -> count)."""

    n_kept: int
    dropped: dict[str, int]


def organize_environments(
    samples: Iterable[Sample],
    min_total_duration: float,
    sample_duration: float,
) -> tuple[list[Environment], OrganizeReport]:
    """Group samples per sensor, order chronologically, drop short sensors.

    A sensor is kept iff sample_count * sample_duration >= min_total_duration.
    Within an environment, equal timestamps are ordered by id. Duplicate
    (env_id, id) pairs are rejected.
    """
    by_env: dict[str, list[Sample]] = {}
    seen: set[tuple[str, str]] = set()
    for s in samples:
        key = (s.env_id, s.id)
        if key in seen:
            raise ValueError(f"duplicate sample id {s.id!r} in environment {s.env_id!r}")
        seen.add(key)
        by_env.setdefault(s.env_id, []).append(s)

    kept: list[Environment] = []
    dropped: dict[str, int] = {}
    for env_id in sorted(by_env):
        members = sorted(by_env[env_id], key=_chronological_key)
        if len(members) * sample_duration >= min_total_duration:
            kept.append(Environment(env_id, tuple(members)))
        else:
            dropped[env_id] = len(members)
    if dropped:
        logger.info(
            "organize_environments: dropped %d environment(s) below %.1f s total",
            len(dropped),
            min_total_duration,
        )
    return kept, OrganizeReport(n_kept=len(kept), dropped=dropped)


def build_sessions(
    env: Environment, session_len: int, skip: BootstrapCorpus | None = None
) -> list[Session]:
    """Partition the non-bootstrap chronology into chunks of `session_len`.

    The final partial chunk is kept as a short session so no tail data is
    silently lost; budgets clamp to the session size downstream.
    """
    if session_len < 1:
        raise ValueError("session_len must be >= 1")
    skip_ids = skip.ids() if skip is not None else set()
    remaining = [s for s in env.samples if s.id not in skip_ids]
    return [
        Session(index=k, samples=tuple(remaining[start : start + session_len]))
        for k, start in enumerate(range(0, len(remaining), session_len))
    ]


def build_bootstrap(env: Environment, n: int, target_class: int) -> BootstrapCorpus:
    """Collect the first n/2 target-present and n/2 target-absent samples.

    Scans the environment chronologically; requires ground-truth labels on
    the scanned samples (simulation mode). A category with fewer than n/2
    occurrences in the whole environment yields a shortfall flag, not an
    error, so rare-class environments still run.
    """
    if n <= 0 or n % 2 != 0:
        raise ValueError("bootstrap size N must be a positive even integer")
    per_category = n // 2
    present: list[Sample] = []
    absent: list[Sample] = []
    for s in env.samples:
        if len(present) == per_category and len(absent) == per_category:
            break
        if s.label is None:
            raise ValueError(
                f"bootstrap scan hit unlabeled sample {s.id!r}; "
                "environment labels are required in simulation mode"
            )
        if s.label.present(target_class):
            if len(present) < per_category:
                present.append(s)
        elif len(absent) < per_category:
            absent.append(s)

    shortfall: dict[str, int] = {}
    if len(present) < per_category:
        shortfall["present"] = per_category - len(present)
    if len(absent) < per_category:
        shortfall["absent"] = per_category - len(absent)
    if shortfall:
        logger.warning(
            "bootstrap shortfall in environment %s: %s", env.env_id, shortfall
        )
    members = sorted(present + absent, key=_chronological_key)
    return BootstrapCorpus(samples=tuple(members), size_target=n, shortfall=shortfall)


def stack_features(samples: Sequence[Sample]) -> np.ndarray:
    """Stack sample features into an (n, d) float64 matrix; (0, 0) if empty."""
    if not samples:
        return np.empty((0, 0), dtype=np.float64)
    return np.stack([s.features.values for s in samples]).astype(np.float64)


def stack_labels(samples: Sequence[Sample]) -> np.ndarray:
    """Stack ground-truth label flags into an (n, C) int matrix."""
    rows = []
    for s in samples:
        if s.label is None:
            raise ValueError(f"sample {s.id!r} has no label")
        rows.append(s.label.flags)
    if not rows:
        return np.empty((0, 0), dtype=np.int64)
    return np.stack(rows)
