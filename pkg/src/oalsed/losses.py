"""Classification and contrastive losses, each with exact analytic gradients.

Classification losses consume per-decision posterior probabilities (the
per-class sigmoid of a logit) together with 0/1 labels, and return their
value plus the gradient with respect to the pre-sigmoid logits. Inputs may
have any shape; a multi-label batch of shape (n, C) is treated as n*C
independent decisions. The contrastive loss operates on embedding pairs and
returns gradients with respect to both embeddings.

The cost-sensitive losses replace the hard false-negative / false-positive
rates with differentiable surrogates:

  expected rates   p_fn = sum_i (1 - q_i) y_i / sum_i y_i
                   p_fp = sum_i q_i (1 - y_i) / sum_i (1 - y_i)

where q_i is either the raw posterior (expected-rate loss) or a sharpened
two-way softmax weight sigma(lam * (2 p_i - 1)) that approaches the argmax
indicator as lam grows (differentiable-argmax loss). The loss value is
w_fn * p_fn + w_fp * p_fp; a term whose denominator is zero contributes 0
and raises a degenerate-batch flag, which keeps small online batches finite
and lets learning be driven by whichever class is represented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossConfig",
    "LossOutput",
    "PairLossOutput",
    "CombinedOutput",
    "xent_loss",
    "edcf_loss",
    "dargmax_weight",
    "ddcf_loss",
    "contrastive_loss",
    "combined_loss",
    "classification_loss",
    "loss_token",
    "parse_loss_token",
    "sigmoid",
]

_CLAMP_EPS = 1e-7

LOSS_KINDS = ("xent", "edcf", "ddcf")


@dataclass(frozen=True)
class LossConfig:
    """Selects the classification loss and houses its constants.

    ratio is the (target, non-target) cross-entropy weighting; it is
    normalized so the mean class weight is 1. w_fn + w_fp must equal 1.
    """

    kind: str = "xent"
    ratio: tuple[float, float] = (1.0, 1.0)
    w_fn: float = 0.75
    w_fp: float = 0.25
    lam: float = 100.0
    margin: float = 1.0
    ddcf_on_logits: bool = False

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if len(self.ratio) != 2 or self.ratio[0] <= 0 or self.ratio[1] <= 0:
            raise ValueError("ratio must be a pair of positive weights")
        if abs(self.w_fn + self.w_fp - 1.0) > 1e-12:
            raise ValueError("w_fn + w_fp must equal 1")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")


@dataclass(frozen=True)
class LossOutput:
    value: float
    dlogits: np.ndarray
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class PairLossOutput:
    value: float
    de1: np.ndarray
    de2: np.ndarray
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class CombinedOutput:
    value: float
    dlogits: np.ndarray
    de1: np.ndarray | None
    de2: np.ndarray | None
    flags: tuple[str, ...] = ()


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (safe for |x| up to ~1e3 * 2)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _normalized_ratio(ratio: tuple[float, float]) -> tuple[float, float]:
    a, b = float(ratio[0]), float(ratio[1])
    if a <= 0 or b <= 0:
        raise ValueError("ratio entries must be positive")
    scale = 2.0 / (a + b)
    return a * scale, b * scale


def xent_loss(
    posteriors: np.ndarray,
    labels: np.ndarray,
    ratio: tuple[float, float] = (1.0, 1.0),
) -> LossOutput:
    """Class-weighted binary cross-entropy, averaged over decisions.

    Value uses posteriors clamped to [eps, 1-eps] (flagged when the clamp
    fires); the gradient is that of the unclamped objective,
    w_i * (p_i - y_i) / n per logit, which is the standard numerically
    stable form and coincides with the clamped value away from the clamp.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValueError("xent_loss requires a non-empty batch")
    if p.shape != y.shape:
        raise ValueError("posteriors and labels must have matching shapes")
    w_pos, w_neg = _normalized_ratio(ratio)

    flags: list[str] = []
    p_safe = np.clip(p, _CLAMP_EPS, 1.0 - _CLAMP_EPS)
    if np.any(p_safe != p):
        flags.append("clamped")
    value = float(
        np.mean(-(w_pos * y * np.log(p_safe) + w_neg * (1.0 - y) * np.log(1.0 - p_safe)))
    )
    weights = w_pos * y + w_neg * (1.0 - y)
    dlogits = weights * (p - y) / p.size
    return LossOutput(value=value, dlogits=dlogits, flags=tuple(flags))


def _surrogate_dcf(
    q: np.ndarray, y: np.ndarray, w_fn: float, w_fp: float
) -> tuple[float, np.ndarray, tuple[str, ...]]:
    """Shared core of the expected/differentiable rate losses.

    q is the per-decision detection weight in [0, 1]; returns the value and
    d(value)/dq. Zero-denominator terms contribute 0 and raise a flag.
    """
    flags: list[str] = []
    n_pos = float(np.sum(y))
    n_neg = float(np.sum(1.0 - y))
    dq = np.zeros_like(q)
    value = 0.0
    if n_pos > 0:
        value += w_fn * float(np.sum((1.0 - q) * y)) / n_pos
        dq += -w_fn * y / n_pos
    else:
        flags.append("degenerate_fn")
    if n_neg > 0:
        value += w_fp * float(np.sum(q * (1.0 - y))) / n_neg
        dq += w_fp * (1.0 - y) / n_neg
    else:
        flags.append("degenerate_fp")
    return value, dq, tuple(flags)


def edcf_loss(
    posteriors: np.ndarray,
    labels: np.ndarray,
    w_fn: float = 0.75,
    w_fp: float = 0.25,
) -> LossOutput:
    """Expectation-based detection-cost loss.

    The hard argmax inside the error rates is replaced by the posterior
    itself, so the batch false-negative rate becomes the mean predicted
    miss mass over positives, and symmetrically for false alarms.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValueError("edcf_loss requires a non-empty batch")
    if p.shape != y.shape:
        raise ValueError("posteriors and labels must have matching shapes")
    value, dq, flags = _surrogate_dcf(p, y, w_fn, w_fp)
    dlogits = dq * p * (1.0 - p)
    return LossOutput(value=value, dlogits=dlogits, flags=flags)


def dargmax_weight(p: np.ndarray | float, lam: float) -> np.ndarray | float:
    """Two-way softmax of (lam*p, lam*(1-p)): 1 / (1 + exp(lam * (1 - 2p))).

    Smooth and strictly increasing in p; approaches the indicator of
    p > 0.5 as lam grows. Evaluating at lam = 0 returns 0.5 everywhere
    (useful as a boundary check; configs require lam > 0).
    """
    arr = sigmoid(lam * (2.0 * np.asarray(p, dtype=np.float64) - 1.0))
    if np.isscalar(p) or getattr(p, "ndim", 1) == 0:
        return float(arr)
    return arr


def ddcf_loss(
    posteriors: np.ndarray,
    labels: np.ndarray,
    lam: float = 100.0,
    w_fn: float = 0.75,
    w_fp: float = 0.25,
    logits: np.ndarray | None = None,
    on_logits: bool = False,
) -> LossOutput:
    """Differentiable-argmax detection-cost loss.

    Each posterior is sharpened through the two-way softmax weight before
    entering the rate estimates. By default the softmax is applied to the
    posterior pair (p, 1-p); with on_logits=True it is applied to the raw
    logit against a zero reference instead (an alternative reading kept
    behind this switch).
    """
    p = np.asarray(posteriors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValueError("ddcf_loss requires a non-empty batch")
    if p.shape != y.shape:
        raise ValueError("posteriors and labels must have matching shapes")
    if on_logits:
        if logits is None:
            raise ValueError("on_logits=True requires the raw logits")
        z = np.asarray(logits, dtype=np.float64)
        q = sigmoid(lam * z)
        value, dq, flags = _surrogate_dcf(q, y, w_fn, w_fp)
        dlogits = dq * q * (1.0 - q) * lam
    else:
        q = sigmoid(lam * (2.0 * p - 1.0))
        value, dq, flags = _surrogate_dcf(q, y, w_fn, w_fp)
        dp = dq * q * (1.0 - q) * 2.0 * lam
        dlogits = dp * p * (1.0 - p)
    return LossOutput(value=value, dlogits=dlogits, flags=flags)


def contrastive_loss(
    e1: np.ndarray,
    e2: np.ndarray,
    y: np.ndarray,
    margin: float = 1.0,
) -> PairLossOutput:
    """Margin contrastive loss, mean over pairs.

    Per pair with Euclidean distance d: y * d^2 + (1-y) * max(margin-d, 0)^2.
    At d = 0 with y = 0 the hinge subgradient is taken as 0.
    """
    e1 = np.atleast_2d(np.asarray(e1, dtype=np.float64))
    e2 = np.atleast_2d(np.asarray(e2, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if e1.shape != e2.shape:
        raise ValueError("paired embeddings must share a shape")
    if e1.shape[0] != y.shape[0]:
        raise ValueError("one pair label per embedding pair required")
    k = e1.shape[0]
    if k == 0:
        raise ValueError("contrastive_loss requires at least one pair")

    diff = e1 - e2
    d = np.sqrt(np.sum(diff * diff, axis=1))
    hinge = np.maximum(margin - d, 0.0)
    values = y * d**2 + (1.0 - y) * hinge**2
    value = float(np.mean(values))

    # d(d^2)/de1 = 2*diff; d(hinge^2)/de1 = -2*hinge*diff/d (0 at d=0).
    safe_d = np.where(d > 0, d, 1.0)
    coeff = 2.0 * y - 2.0 * (1.0 - y) * np.where(d > 0, hinge / safe_d, 0.0)
    de1 = coeff[:, None] * diff / k
    return PairLossOutput(value=value, de1=de1, de2=-de1)


def combined_loss(
    classification: LossOutput, contrastive: PairLossOutput | None
) -> CombinedOutput:
    """Average of the classification and contrastive losses.

    When no pairs are available the classification loss passes through
    unscaled, flagged as classification-only.
    """
    if contrastive is None:
        return CombinedOutput(
            value=classification.value,
            dlogits=classification.dlogits,
            de1=None,
            de2=None,
            flags=classification.flags + ("no_pairs",),
        )
    return CombinedOutput(
        value=0.5 * (classification.value + contrastive.value),
        dlogits=0.5 * classification.dlogits,
        de1=0.5 * contrastive.de1,
        de2=0.5 * contrastive.de2,
        flags=classification.flags + contrastive.flags,
    )


def classification_loss(
    cfg: LossConfig,
    posteriors: np.ndarray,
    labels: np.ndarray,
    logits: np.ndarray | None = None,
) -> LossOutput:
    """Dispatch to the configured classification loss."""
    if cfg.kind == "xent":
        return xent_loss(posteriors, labels, cfg.ratio)
    if cfg.kind == "edcf":
        return edcf_loss(posteriors, labels, cfg.w_fn, cfg.w_fp)
    return ddcf_loss(
        posteriors,
        labels,
        lam=cfg.lam,
        w_fn=cfg.w_fn,
        w_fp=cfg.w_fp,
        logits=logits,
        on_logits=cfg.ddcf_on_logits,
    )


def loss_token(cfg: LossConfig) -> str:
    """Canonical short name for result records, e.g. xent11, xent41, edcf."""
    if cfg.kind != "xent":
        return cfg.kind
    a, b = cfg.ratio
    if float(a).is_integer() and float(b).is_integer():
        return f"xent{int(a)}{int(b)}"
    return f"xent{a:g}:{b:g}"


def parse_loss_token(token: str, base: LossConfig | None = None) -> LossConfig:
    """Build a LossConfig from a short name, inheriting constants from base.

    Accepted: "xent" (alias for xent11), "xent11", "xent41", "xentA:B",
    "edcf", "ddcf".
    """
    from dataclasses import replace

    base = base if base is not None else LossConfig()
    token = token.strip().lower()
    if token in ("edcf", "ddcf"):
        return replace(base, kind=token)
    if token == "xent" or token == "xent11":
        return replace(base, kind="xent", ratio=(1.0, 1.0))
    if token == "xent41":
        return replace(base, kind="xent", ratio=(4.0, 1.0))
    if token.startswith("xent") and ":" in token:
        a, b = token[len("xent") :].split(":", 1)
        return replace(base, kind="xent", ratio=(float(a), float(b)))
    raise ValueError(f"unknown loss token {token!r}")
