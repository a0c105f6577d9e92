from __future__ import annotations

import numpy as np
import pytest

from oalsed.data_model import Environment, FeatureVector, LabelVector, Sample


def make_sample(
    sid: str,
    env_id: str = "envA",
    t: float = 0.0,
    features=(0.0, 1.0),
    label=None,
) -> Sample:
    lv = None if label is None else LabelVector(np.asarray(label))
    return Sample(
        id=sid,
        env_id=env_id,
        timestamp=t,
        features=FeatureVector(np.asarray(features, dtype=float)),
        label=lv,
    )


def make_stream(
    env_id: str,
    labels: list[int],
    start_t: float = 0.0,
    dim: int = 2,
    rng: np.random.Generator | None = None,
) -> Environment:
    """An environment whose target flags follow `labels` in order."""
    rng = rng or np.random.default_rng(0)
    samples = []
    for i, flag in enumerate(labels):
        mean = 1.5 if flag else -1.5
        samples.append(
            Sample(
                id=f"{env_id}-{i:05d}",
                env_id=env_id,
                timestamp=start_t + i * 10.0,
                features=FeatureVector(mean + 0.1 * rng.standard_normal(dim)),
                label=LabelVector(np.asarray([flag])),
            )
        )
    return Environment(env_id, tuple(samples))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
