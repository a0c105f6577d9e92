"""Finite-difference verification of every analytic gradient.

Each loss is checked at seeded random points against central differences
(h = 1e-4, float64). Points are drawn away from non-smooth spots: logits
stay in a range where the cross-entropy clamp never fires, contrastive
pairs keep |d - margin| > 1e-2, and the network check resamples until all
ReLU pre-activations are away from zero. The relative error denominator is
max(|analytic|, |numeric|, 1e-6) so near-zero gradient pairs compare on an
absolute scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .losses import (
    LossConfig,
    classification_loss,
    contrastive_loss,
    sigmoid,
)
from .network import ArchConfig, _forward_cache, init_classifier, loss_and_grad

__all__ = ["GradCheckResult", "run_gradcheck", "FD_STEP", "REL_TOL"]

FD_STEP = 1e-4
REL_TOL = 1e-4
_POINTS = 10


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of one loss's check; per_parameter holds the worst relative
    error seen for each named parameter group (check points for the
    pointwise losses, tensors for the network-level check)."""

    name: str
    max_rel_err: float
    passed: bool
    per_parameter: tuple[tuple[str, float], ...] = ()


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _central_diff(value_fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + FD_STEP
        up = value_fn(x)
        xf[i] = orig - FD_STEP
        down = value_fn(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * FD_STEP)
    return grad


def _mixed_labels(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random 0/1 labels guaranteed to include both classes."""
    y = (rng.random(n) < 0.5).astype(np.float64)
    y[0], y[1] = 1.0, 0.0
    return y


def _check_classification(cfg: LossConfig, name: str, corrupted: bool) -> GradCheckResult:
    rng = np.random.default_rng(20260515)
    per_point: list[tuple[str, float]] = []
    for point in range(_POINTS):
        n = 8
        y = _mixed_labels(rng, n)
        z = rng.uniform(-1.5, 1.5, n)

        out = classification_loss(cfg, sigmoid(z), y, z)
        analytic = out.dlogits * (1.5 if corrupted else 1.0)
        numeric = _central_diff(
            lambda zz: classification_loss(cfg, sigmoid(zz), y, zz).value, z
        )
        per_point.append((f"point{point}", _rel_err(analytic, numeric)))
    worst = max(err for _, err in per_point)
    return GradCheckResult(name, worst, worst <= REL_TOL, tuple(per_point))


def _check_contrastive(margin: float, corrupted: bool) -> GradCheckResult:
    rng = np.random.default_rng(31337)
    per_point: list[tuple[str, float]] = []
    while len(per_point) < _POINTS:
        k, e = 4, 5
        e1 = rng.normal(size=(k, e))
        e2 = rng.normal(size=(k, e))
        y = _mixed_labels(rng, k)
        d = np.linalg.norm(e1 - e2, axis=1)
        if np.any(np.abs(d - margin) <= 1e-2):
            continue  # resample away from the hinge kink
        out = contrastive_loss(e1, e2, y, margin)
        scale = 1.5 if corrupted else 1.0
        num1 = _central_diff(lambda a: contrastive_loss(a, e2, y, margin).value, e1)
        num2 = _central_diff(lambda b: contrastive_loss(e1, b, y, margin).value, e2)
        err = max(_rel_err(out.de1 * scale, num1), _rel_err(out.de2 * scale, num2))
        per_point.append((f"point{len(per_point)}", err))
    worst = max(err for _, err in per_point)
    return GradCheckResult("contrastive", worst, worst <= REL_TOL, tuple(per_point))


def _tensor_names(arch: ArchConfig) -> list[str]:
    names = []
    for layer in range(len(arch.hidden)):
        names.extend((f"W{layer + 1}", f"b{layer + 1}"))
    names.extend(("W_head", "b_head"))
    return names


def _check_combined(corrupted: bool) -> GradCheckResult:
    """Full-network parameter gradients for the averaged total loss."""
    rng = np.random.default_rng(777)
    arch = ArchConfig(input_dim=3, hidden=(4, 3), num_classes=1)
    loss_cfg = LossConfig(kind="xent")
    names = _tensor_names(arch)
    worst_by_tensor = {name: 0.0 for name in names}
    points = 0
    while points < _POINTS:
        params = init_classifier(arch, seed=int(rng.integers(2**31)))
        for t in params.tensors():
            t += 0.05 * rng.normal(size=t.shape)
        n = 6
        x = rng.normal(size=(n, arch.input_dim))
        y = _mixed_labels(rng, n).reshape(n, 1)
        perm = rng.permutation(n)
        k = n // 2
        pairing = (
            perm[0 : 2 * k : 2],
            perm[1 : 2 * k : 2],
            (y[perm[0 : 2 * k : 2], 0] == y[perm[1 : 2 * k : 2], 0]).astype(np.float64),
        )

        # Keep the point away from ReLU and hinge kinks.
        _, preacts, emb, _ = _forward_cache(params, x)
        if any(np.min(np.abs(z)) < 1e-3 for z in preacts):
            continue
        d = np.linalg.norm(emb[pairing[0]] - emb[pairing[1]], axis=1)
        if np.any(np.abs(d - loss_cfg.margin) <= 1e-2):
            continue
        points += 1

        _, grads, _ = loss_and_grad(params, x, y, loss_cfg, pairing)
        scale = 1.5 if corrupted else 1.0
        for name, tensor, grad in zip(names, params.tensors(), grads):
            numeric = _central_diff(
                lambda _t: loss_and_grad(params, x, y, loss_cfg, pairing)[0], tensor
            )
            err = _rel_err(grad * scale, numeric)
            worst_by_tensor[name] = max(worst_by_tensor[name], err)
    worst = max(worst_by_tensor.values())
    return GradCheckResult(
        "combined", worst, worst <= REL_TOL, tuple(worst_by_tensor.items())
    )


def run_gradcheck(corrupt: str | None = None) -> list[GradCheckResult]:
    """Run the whole suite; `corrupt` deliberately breaks one loss by name
    (test hook for verifying that the harness catches bad gradients)."""
    checks: list[tuple[str, Callable[[bool], GradCheckResult]]] = [
        ("xent11", lambda c: _check_classification(LossConfig(kind="xent"), "xent11", c)),
        (
            "xent41",
            lambda c: _check_classification(
                LossConfig(kind="xent", ratio=(4.0, 1.0)), "xent41", c
            ),
        ),
        ("edcf", lambda c: _check_classification(LossConfig(kind="edcf"), "edcf", c)),
        (
            "ddcf_lam1",
            lambda c: _check_classification(LossConfig(kind="ddcf", lam=1.0), "ddcf_lam1", c),
        ),
        (
            "ddcf_lam100",
            lambda c: _check_classification(
                LossConfig(kind="ddcf", lam=100.0), "ddcf_lam100", c
            ),
        ),
        ("contrastive", lambda c: _check_contrastive(1.0, c)),
        ("combined", lambda c: _check_combined(c)),
    ]
    return [fn(corrupt == name) for name, fn in checks]
