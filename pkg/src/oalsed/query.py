"""Query selection strategies: negative-energy uncertainty sampling, random.

The energy of a logit vector z is E = -T * logsumexp(z / T). High energy
means low model confidence, which is where labels help adaptation most, so
the strategy queries the top-B energies. In single-target mode the one
sigmoid logit z is scored as the pair (z, 0), since a sigmoid posterior is
the two-way softmax against a zero reference logit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import Sample

__all__ = [
    "QueryBudget",
    "energy_score",
    "energy_scores",
    "select_queries",
    "random_strategy",
    "STRATEGIES",
]

STRATEGIES = ("negenergy", "random")


@dataclass(frozen=True)
class QueryBudget:
    """Labels the strategy may request per session."""

    per_session: int

    def __post_init__(self) -> None:
        if self.per_session < 1:
            raise ValueError("query budget must be >= 1")


def energy_score(logits: np.ndarray, temperature: float = 1.0) -> float:
    """Free energy -T * logsumexp(z / T) of one sample's class logits."""
    z = np.asarray(logits, dtype=np.float64).ravel() / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError("energy_score requires finite logits")
    zmax = float(np.max(z))
    return -temperature * (zmax + float(np.log(np.sum(np.exp(z - zmax)))))


def energy_scores(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise energies for an (n, C) logit matrix.

    A single-column matrix is treated as single-target mode and augmented
    with the zero reference logit before scoring.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("expected an (n, C) logit matrix")
    if z.shape[0] == 0:
        return np.empty(0)
    if z.shape[1] == 1:
        z = np.column_stack([z, np.zeros(z.shape[0])])
    z = z / temperature
    zmax = np.max(z, axis=1, keepdims=True)
    return -temperature * (
        zmax.ravel() + np.log(np.sum(np.exp(z - zmax), axis=1))
    )


def select_queries(
    samples: Sequence[Sample],
    scores: np.ndarray,
    budget: int,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[str]:
    """Ids of the top-`budget` scores; ties break toward the smaller id.

    Sessions smaller than the budget are queried whole. Ids in `exclude`
    (already labeled) are never selected.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(samples) != scores.shape[0]:
        raise ValueError("one score per sample required")
    candidates = [
        (s.id, float(scores[i])) for i, s in enumerate(samples) if s.id not in exclude
    ]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return [sid for sid, _ in candidates[: min(budget, len(candidates))]]


def random_strategy(
    samples: Sequence[Sample],
    budget: int,
    rng: np.random.Generator | int,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> list[str]:
    """Uniform seeded draw without replacement; baseline for ablations."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids = [s.id for s in samples if s.id not in exclude]
    take = min(budget, len(ids))
    picked = rng.choice(len(ids), size=take, replace=False) if take else []
    return [ids[i] for i in picked]
