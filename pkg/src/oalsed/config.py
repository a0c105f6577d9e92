"""Experiment configuration: defaults, key = value config files, overrides.

Config files are flat UTF-8 text, one `key = value` per line, `#` comments.
Unknown keys are errors. Defaults reproduce the reference operating point:
lr 1e-4, weight decay 1e-5, patience 5, session length 30, budget 5,
bootstrap 8, margin 1, detection-cost weights (0.75, 0.25).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ingest import DriftConfig
from .losses import LossConfig, parse_loss_token
from .network import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_kv_file"]

PARADIGMS = ("supervised", "al", "oal")


class ConfigError(ValueError):
    """A configuration value violated its contract; message names the key."""


def _as_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _as_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _as_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _as_str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _as_ratio(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"expected a ratio like 4:1, got {text!r}")
    return float(parts[0]), float(parts[1])


_CASTERS = {
    "paradigm": str,
    "dataset": str,
    "out_dir": str,
    "jobs": int,
    "seeds": _as_int_list,
    "losses": _as_str_list,
    "strategy": str,
    "temperature": float,
    "session_len": int,
    "budget": int,
    "bootstrap": int,
    "target_class": int,
    "xent_ratio": _as_ratio,
    "w_fn": float,
    "w_fp": float,
    "lambda": float,
    "margin": float,
    "ddcf_on_logits": _as_bool,
    "lr": float,
    "weight_decay": float,
    "patience": int,
    "batch_size": int,
    "max_epochs": int,
    "val_fraction": float,
    "fallback_epochs": int,
    "hidden_sizes": _as_int_list,
    "shared_model": _as_bool,
    "retrain_from_scratch": _as_bool,
    "al_steps": int,
    "al_budget": int,
    "split_train": float,
    "split_val": float,
    "min_env_duration": float,
    "sample_duration": float,
    "train_manifest": str,
    "train_features": str,
    "val_manifest": str,
    "val_features": str,
    "test_manifest": str,
    "test_features": str,
    "pool_manifest": str,
    "pool_features": str,
    "stream_manifest": str,
    "stream_features": str,
    # synthetic stream
    "num_envs": int,
    "sessions_per_env": int,
    "dim": int,
    "separation": float,
    "drift_velocity": float,
    "drift_amplitude": float,
    "drift_period": float,
    "priors": _as_float_list,
    "noise_scale": float,
    "stream_seed": int,
    "sample_period": float,
}

_PATH_KEYS = (
    "train_manifest",
    "train_features",
    "val_manifest",
    "val_features",
    "test_manifest",
    "test_features",
    "pool_manifest",
    "pool_features",
    "stream_manifest",
    "stream_features",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment grid needs: data source, model, schedule."""

    paradigm: str = "oal"
    dataset: str = "synthetic"
    out_dir: str = "results"
    jobs: int = 1
    seeds: tuple[int, ...] = (0,)
    losses: tuple[str, ...] = ("xent41",)
    strategy: str = "negenergy"
    temperature: float = 1.0
    session_len: int = 30
    budget: int = 5
    bootstrap: int = 8
    target_class: int = 0
    hidden_sizes: tuple[int, ...] = (256, 128)
    shared_model: bool = False
    retrain_from_scratch: bool = False
    al_steps: int = 20
    al_budget: int = 50
    split_train: float = 0.8
    split_val: float = 0.1
    min_env_duration: float = 600.0
    sample_duration: float = 10.0
    loss_base: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    paths: dict = field(default_factory=dict)

    def loss_config(self, token: str) -> LossConfig:
        return parse_loss_token(token, base=self.loss_base)


def parse_kv_file(path) -> dict[str, str]:
    """Read a flat `key = value` config file into a string mapping."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


def parse_config(
    path=None, overrides: dict[str, str] | None = None
) -> ExperimentConfig:
    """Build an ExperimentConfig from an optional file plus flag overrides.

    Overrides win over file values; both are validated against the key
    registry, and invariant violations are reported with key names.
    """
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(parse_kv_file(path))
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})

    typed: dict[str, object] = {}
    for key, text in raw.items():
        if key not in _CASTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            typed[key] = _CASTERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc

    paradigm = typed.get("paradigm", "oal")
    if paradigm not in PARADIGMS:
        raise ConfigError(f"paradigm must be one of {PARADIGMS}, got {paradigm!r}")
    dataset = typed.get("dataset", "synthetic")
    if dataset not in ("synthetic", "manifest"):
        raise ConfigError(f"dataset must be 'synthetic' or 'manifest', got {dataset!r}")

    try:
        loss_base = LossConfig(
            kind="xent",
            ratio=typed.get("xent_ratio", (1.0, 1.0)),
            w_fn=typed.get("w_fn", 0.75),
            w_fp=typed.get("w_fp", 0.25),
            lam=typed.get("lambda", 100.0),
            margin=typed.get("margin", 1.0),
            ddcf_on_logits=typed.get("ddcf_on_logits", False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        train = TrainConfig(
            batch_size=typed.get("batch_size", 64),
            max_epochs=typed.get("max_epochs", 100),
            patience=typed.get("patience", 5),
            val_fraction=typed.get("val_fraction", 0.2),
            fallback_epochs=typed.get("fallback_epochs", 30),
            lr=typed.get("lr", 1e-4),
            weight_decay=typed.get("weight_decay", 1e-5),
            target_class=typed.get("target_class", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        drift = DriftConfig(
            num_envs=typed.get("num_envs", 8),
            sessions_per_env=typed.get("sessions_per_env", 20),
            session_len=typed.get("session_len", 30),
            dim=typed.get("dim", 16),
            separation=typed.get("separation", 2.0),
            drift_velocity=typed.get("drift_velocity", 0.0),
            drift_amplitude=typed.get("drift_amplitude", 0.0),
            drift_period=typed.get("drift_period", 200.0),
            priors=typed.get("priors", (0.5,)),
            noise_scale=typed.get("noise_scale", 1.0),
            seed=typed.get("stream_seed", 0),
            sample_period=typed.get("sample_period", 10.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    seeds = typed.get("seeds", (0,))
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    losses = typed.get("losses", ("xent41",))
    for token in losses:
        try:
            parse_loss_token(token, base=loss_base)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    strategy = typed.get("strategy", "negenergy")
    if strategy not in ("negenergy", "random"):
        raise ConfigError(f"strategy must be 'negenergy' or 'random', got {strategy!r}")

    split_train = typed.get("split_train", 0.8)
    split_val = typed.get("split_val", 0.1)
    if not (0 < split_train < 1 and 0 < split_val < 1 and split_train + split_val < 1):
        raise ConfigError("split_train and split_val must be in (0,1) and sum below 1")

    paths = {k: typed[k] for k in _PATH_KEYS if k in typed}
    if dataset == "manifest":
        import os

        for key, value in paths.items():
            if not os.path.exists(value):
                raise ConfigError(f"config key {key!r}: path {value!r} does not exist")

    cfg = ExperimentConfig(
        paradigm=paradigm,
        dataset=dataset,
        out_dir=typed.get("out_dir", "results"),
        jobs=typed.get("jobs", 1),
        seeds=seeds,
        losses=losses,
        strategy=strategy,
        temperature=typed.get("temperature", 1.0),
        session_len=typed.get("session_len", 30),
        budget=typed.get("budget", 5),
        bootstrap=typed.get("bootstrap", 8),
        target_class=typed.get("target_class", 0),
        hidden_sizes=typed.get("hidden_sizes", (256, 128)),
        shared_model=typed.get("shared_model", False),
        retrain_from_scratch=typed.get("retrain_from_scratch", False),
        al_steps=typed.get("al_steps", 20),
        al_budget=typed.get("al_budget", 50),
        split_train=split_train,
        split_val=split_val,
        min_env_duration=typed.get("min_env_duration", 600.0),
        sample_duration=typed.get("sample_duration", 10.0),
        loss_base=loss_base,
        train=train,
        drift=drift,
        paths=paths,
    )
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.budget < 1:
        raise ConfigError("budget must be >= 1")
    if cfg.bootstrap < 2 or cfg.bootstrap % 2 != 0:
        raise ConfigError("bootstrap must be a positive even integer")
    if cfg.session_len < 1:
        raise ConfigError("session_len must be >= 1")
    return cfg
