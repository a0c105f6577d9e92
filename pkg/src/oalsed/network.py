"""Contrastive feed-forward classifier with exact analytic gradients.

A small ReLU multilayer perceptron maps an input feature vector through the
configured hidden sizes; the last hidden activation is the embedding, and a
linear head maps it to one logit per class. Posteriors are per-class
sigmoids, which covers the multi-label and single-target modes uniformly.

Training minimizes the average of a classification loss (configurable) and
a margin contrastive loss over embedding pairs drawn within each mini-batch,
backpropagating exact gradients and applying Adam with decoupled weight
decay. Early stopping monitors the classification loss on a held-out
validation set and returns the best-validation parameters.

All arithmetic is float64 so finite-difference gradient verification holds
to tight tolerances; the checkpoint format stores float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import LabeledExample, Sample, stack_features
from .losses import LossConfig, classification_loss, combined_loss, contrastive_loss, sigmoid

__all__ = [
    "ArchConfig",
    "ClassifierParams",
    "OptimizerState",
    "TrainConfig",
    "TrainTrace",
    "init_classifier",
    "forward",
    "loss_and_grad",
    "adam_init",
    "adam_step",
    "train",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class ArchConfig:
    """Layer sizes: input -> hidden ... -> embedding (last hidden) -> logits."""

    input_dim: int
    hidden: tuple[int, ...] = (256, 128)
    num_classes: int = 1

    def __post_init__(self) -> None:
        dims = (self.input_dim, *self.hidden, self.num_classes)
        if any(d <= 0 for d in dims):
            raise ValueError("all layer sizes must be positive")
        if not self.hidden:
            raise ValueError("at least one hidden (embedding) layer is required")

    @property
    def embedding_dim(self) -> int:
        return self.hidden[-1]


@dataclass
class ClassifierParams:
    """Weights of the embedding stack plus the classification head."""

    arch: ArchConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        """All parameter tensors in declaration order (W1, b1, ..., Wh, bh)."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        out.extend((self.head_w, self.head_b))
        return out

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            arch=self.arch,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors())


def init_classifier(arch: ArchConfig, seed: int) -> ClassifierParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = (arch.input_dim, *arch.hidden)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    s = np.sqrt(6.0 / (arch.embedding_dim + arch.num_classes))
    head_w = rng.uniform(-s, s, size=(arch.embedding_dim, arch.num_classes))
    head_b = np.zeros(arch.num_classes)
    return ClassifierParams(arch, weights, biases, head_w, head_b)


def _forward_cache(params: ClassifierParams, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"expected input of shape (n, {params.arch.input_dim}), got {a.shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite input features")
    activations = [a]
    preacts = []
    for w, b in zip(params.weights, params.biases):
        z = activations[-1] @ w + b
        preacts.append(z)
        activations.append(np.maximum(z, 0.0))
    emb = activations[-1]
    logits = emb @ params.head_w + params.head_b
    return activations, preacts, emb, logits


def forward(
    params: ClassifierParams, batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (embeddings, logits, posteriors) for a (n, d) batch."""
    _, _, emb, logits = _forward_cache(params, batch)
    return emb, logits, sigmoid(logits)


def _make_pairs(
    rng: np.random.Generator, labels: np.ndarray, target_class: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Pair element i with i+1 of a random permutation; floor(n/2) pairs.

    A pair is "same" (y=1) iff the two target-class flags match.
    """
    n = labels.shape[0]
    if n < 2:
        return None
    perm = rng.permutation(n)
    k = n // 2
    a = perm[0 : 2 * k : 2]
    b = perm[1 : 2 * k : 2]
    y = (labels[a, target_class] == labels[b, target_class]).astype(np.float64)
    return a, b, y


def loss_and_grad(
    params: ClassifierParams,
    x: np.ndarray,
    y: np.ndarray,
    loss_cfg: LossConfig,
    pairing: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> tuple[float, list[np.ndarray], tuple[str, ...]]:
    """Total loss and its exact gradient for every parameter tensor.

    The total is the average of the classification loss (on all batch
    decisions) and the contrastive loss (on the given embedding pairs);
    without pairs the classification loss stands alone. Gradients are
    returned in params.tensors() order.
    """
    activations, preacts, emb, logits = _forward_cache(params, x)
    y = np.asarray(y, dtype=np.float64)
    posteriors = sigmoid(logits)
    cls = classification_loss(loss_cfg, posteriors, y, logits)
    con = None
    if pairing is not None and len(pairing[0]) > 0:
        a, b, y_pair = pairing
        con = contrastive_loss(emb[a], emb[b], y_pair, loss_cfg.margin)
    combined = combined_loss(cls, con)

    dlogits = combined.dlogits
    demb_extra = np.zeros_like(emb)
    if con is not None:
        a, b, _ = pairing
        np.add.at(demb_extra, a, combined.de1)
        np.add.at(demb_extra, b, combined.de2)

    grads: list[np.ndarray | None] = [None] * (2 * len(params.weights) + 2)
    grads[-2] = emb.T @ dlogits
    grads[-1] = dlogits.sum(axis=0)
    da = dlogits @ params.head_w.T + demb_extra
    for layer in range(len(params.weights) - 1, -1, -1):
        dz = da * (preacts[layer] > 0)
        grads[2 * layer] = activations[layer].T @ dz
        grads[2 * layer + 1] = dz.sum(axis=0)
        da = dz @ params.weights[layer].T
    return combined.value, grads, combined.flags  # type: ignore[return-value]


@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters; weight decay is decoupled."""

    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(
    params: ClassifierParams, lr: float = 1e-4, weight_decay: float = 1e-5
) -> OptimizerState:
    tensors = params.tensors()
    return OptimizerState(
        lr=lr,
        weight_decay=weight_decay,
        m=[np.zeros_like(t) for t in tensors],
        v=[np.zeros_like(t) for t in tensors],
    )


def adam_step(
    params: ClassifierParams, grads: Sequence[np.ndarray], state: OptimizerState
) -> None:
    """One in-place Adam update with bias correction and decoupled decay."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for tensor, grad, m, v in zip(params.tensors(), grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        tensor -= state.lr * update
        tensor -= state.lr * state.weight_decay * tensor


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training schedule and optimizer hyperparameters.

    When the validation fraction is 0 early stopping is disabled and
    exactly max_epochs run. When the seeded validation split cannot hold at
    least 2 target-present and 2 target-absent samples, early stopping is
    likewise disabled and fallback_epochs run on all the data.
    """

    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    val_fraction: float = 0.2
    fallback_epochs: int = 30
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    target_class: int = 0

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.fallback_epochs < 1:
            raise ValueError("batch_size and epoch counts must be >= 1")


@dataclass(frozen=True)
class TrainTrace:
    epochs_run: int
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    best_epoch: int | None
    early_stopped: bool
    flags: tuple[str, ...] = ()


def _as_arrays(examples: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([e.features for e in examples]).astype(np.float64)
    y = np.stack([e.label for e in examples]).astype(np.float64)
    return x, y


def _val_loss(
    params: ClassifierParams, x: np.ndarray, y: np.ndarray, loss_cfg: LossConfig
) -> float:
    # Monitor the classification loss only; the contrastive term depends on
    # batch pairing, which is a training-time construct.
    _, logits, post = forward(params, x)
    return classification_loss(loss_cfg, post, y, logits).value


def train(
    params: ClassifierParams,
    examples: Sequence[LabeledExample],
    cfg: TrainConfig,
    loss_cfg: LossConfig,
    val_examples: Sequence[LabeledExample] | None = None,
) -> tuple[ClassifierParams, TrainTrace]:
    """Fit a copy of `params` on the labeled set; returns (params, trace).

    The labeled set is first put in canonical id order, so the result
    depends only on the multiset of examples, the seeds, and the config.
    An explicit validation set overrides the seeded split.
    """
    if not examples:
        raise ValueError("training requires a non-empty labeled set")
    ordered = sorted(examples, key=lambda e: e.sample_id)
    flags: list[str] = []
    if len(ordered) < 2:
        flags.append("classification_only")

    split_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)

    train_set = ordered
    val_xy: tuple[np.ndarray, np.ndarray] | None = None
    max_epochs = cfg.max_epochs
    if val_examples is not None:
        if not val_examples:
            raise ValueError("explicit validation set must be non-empty")
        val_xy = _as_arrays(sorted(val_examples, key=lambda e: e.sample_id))
    elif cfg.val_fraction > 0.0:
        n_val = int(round(cfg.val_fraction * len(ordered)))
        perm = np.random.default_rng(split_ss).permutation(len(ordered))
        val_idx = set(perm[:n_val].tolist())
        candidate_val = [ordered[i] for i in sorted(val_idx)]
        candidate_train = [ordered[i] for i in range(len(ordered)) if i not in val_idx]
        if candidate_val and candidate_train:
            _, yv = _as_arrays(candidate_val)
            n_pos = int(yv[:, cfg.target_class].sum())
            n_neg = len(candidate_val) - n_pos
            if n_pos >= 2 and n_neg >= 2:
                train_set = candidate_train
                val_xy = _as_arrays(candidate_val)
        if val_xy is None:
            flags.append("val_too_small")
            max_epochs = cfg.fallback_epochs
    else:
        flags.append("val_disabled")

    x, y = _as_arrays(train_set)
    n = x.shape[0]
    model = params.copy()
    opt = adam_init(model, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(shuffle_ss)

    monitor = val_xy is not None
    best_val = np.inf
    best_params = model.copy()
    best_epoch: int | None = None
    bad_epochs = 0
    early_stopped = False
    train_losses: list[float] = []
    val_losses: list[float] = []

    epochs_run = 0
    for epoch in range(max_epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            pairing = _make_pairs(rng, y[idx], cfg.target_class)
            value, grads, _ = loss_and_grad(model, x[idx], y[idx], loss_cfg, pairing)
            adam_step(model, grads, opt)
            epoch_loss += value * len(idx)
        train_losses.append(epoch_loss / n)
        epochs_run = epoch + 1
        if monitor:
            vl = _val_loss(model, val_xy[0], val_xy[1], loss_cfg)
            val_losses.append(vl)
            if vl < best_val:
                best_val = vl
                best_params = model.copy()
                best_epoch = epoch
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    early_stopped = True
                    break

    result = best_params if monitor else model
    trace = TrainTrace(
        epochs_run=epochs_run,
        train_losses=tuple(train_losses),
        val_losses=tuple(val_losses),
        best_epoch=best_epoch,
        early_stopped=early_stopped,
        flags=tuple(flags),
    )
    return result, trace


def predict(
    params: ClassifierParams, samples: Sequence[Sample] | np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posteriors and hard per-class labels; posterior >= 0.5 counts present."""
    if isinstance(samples, np.ndarray):
        x = samples
    else:
        x = stack_features(samples)
    if x.shape[0] == 0:
        empty = np.empty((0, params.arch.num_classes))
        return empty, empty.astype(np.int64)
    _, _, post = forward(params, x)
    return post, (post >= 0.5).astype(np.int64)


def save_checkpoint(
    params: ClassifierParams, path, metadata: dict | None = None
) -> None:
    """JSON header line, then one float32 tensor block per parameter."""
    from .ingest import _write_array_block

    header = {
        "format": "oalsed-checkpoint",
        "version": 1,
        "arch": {
            "input_dim": params.arch.input_dim,
            "hidden": list(params.arch.hidden),
            "num_classes": params.arch.num_classes,
        },
        "metadata": metadata or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        for tensor in params.tensors():
            _write_array_block(fh, np.atleast_2d(tensor.astype(np.float32)))


def load_checkpoint(path) -> tuple[ClassifierParams, dict]:
    from .ingest import _read_array_block

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "oalsed-checkpoint" or header.get("version") != 1:
            raise ValueError(f"{path}: not a recognized checkpoint file")
        arch = ArchConfig(
            input_dim=int(header["arch"]["input_dim"]),
            hidden=tuple(int(h) for h in header["arch"]["hidden"]),
            num_classes=int(header["arch"]["num_classes"]),
        )
        tensors = []
        for _ in range(2 * len(arch.hidden) + 2):
            tensors.append(_read_array_block(fh).astype(np.float64))
    weights = [tensors[2 * i] for i in range(len(arch.hidden))]
    biases = [tensors[2 * i + 1].ravel() for i in range(len(arch.hidden))]
    params = ClassifierParams(
        arch=arch,
        weights=weights,
        biases=biases,
        head_w=tensors[-2],
        head_b=tensors[-1].ravel(),
    )
    return params, header.get("metadata", {})
