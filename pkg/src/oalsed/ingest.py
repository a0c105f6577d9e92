"""Dataset interchange formats and the synthetic drifting-stream generator.

Feature file (".oalf"): magic b"OALF", version u32 = 1, dim u32, count u64,
all little-endian, followed by count*dim float32 little-endian, row-major.

Manifest: JSON Lines, one record per sample:
    {"id": str, "env": str, "t": number, "labels": [0|1, ...], "row": int}
Labels live in the manifest rather than the feature file, so features stay
annotation-agnostic (labels arrive later via queries).

Results: JSON Lines, one RunReport per line (see report module).
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .data_model import Environment, FeatureVector, LabelVector, Sample
from .report import RunReport

__all__ = [
    "LoadError",
    "Manifest",
    "DriftConfig",
    "write_features",
    "load_features",
    "parse_manifest",
    "load_manifest",
    "write_manifest",
    "generate_synthetic_stream",
    "write_report",
    "write_reports",
    "read_reports",
]

_MAGIC = b"OALF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class LoadError(ValueError):
    """A dataset file failed validation; the message names the offender."""


def _write_array_block(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("feature blocks are 2-D (count x dim)")
    count, dim = arr.shape
    fh.write(_HEADER.pack(_MAGIC, _VERSION, dim, count))
    fh.write(arr.tobytes(order="C"))


def _read_array_block(fh: BinaryIO) -> np.ndarray:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise LoadError("truncated feature block header")
    magic, version, dim, count = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise LoadError(f"bad magic bytes {magic!r}; expected {_MAGIC!r}")
    if version != _VERSION:
        raise LoadError(f"unsupported feature format version {version}")
    if dim == 0:
        raise LoadError("feature dim must be positive")
    payload = fh.read(4 * dim * count)
    if len(payload) != 4 * dim * count:
        raise LoadError("truncated feature block payload")
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()


def write_features(path, matrix: np.ndarray) -> None:
    """Write an (n, d) float32 matrix as one feature file."""
    with open(path, "wb") as fh:
        _write_array_block(fh, np.asarray(matrix))


def load_features(path) -> np.ndarray:
    """Load a feature file back to its (n, d) float32 matrix."""
    with open(path, "rb") as fh:
        matrix = _read_array_block(fh)
        if fh.read(1):
            raise LoadError(f"{path}: trailing bytes after feature block")
    return matrix


@dataclass(frozen=True)
class Manifest:
    """Validated manifest records bound to the feature file they reference.

    Record ids are unique and every feature_row index lies inside the
    referenced matrix.
    """

    records: tuple[dict, ...]
    feature_file: str
    num_classes: int
    dim: int


def parse_manifest(manifest_path, feature_path) -> tuple[Manifest, np.ndarray]:
    """Read and validate a manifest against its feature file."""
    matrix = load_features(feature_path)
    records: list[dict] = []
    seen_ids: set[str] = set()
    num_classes: int | None = None
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{manifest_path}:{lineno}: invalid JSON ({exc})") from exc
            for key in ("id", "env", "t", "labels", "row"):
                if key not in rec:
                    raise LoadError(f"{manifest_path}:{lineno}: missing key {key!r}")
            rid = str(rec["id"])
            if rid in seen_ids:
                raise LoadError(f"duplicate sample id {rid!r} in {manifest_path}")
            seen_ids.add(rid)
            row = int(rec["row"])
            if not (0 <= row < matrix.shape[0]):
                raise LoadError(
                    f"record {rid!r}: feature row {row} out of range "
                    f"(file has {matrix.shape[0]} rows)"
                )
            if num_classes is None:
                num_classes = len(rec["labels"])
            elif len(rec["labels"]) != num_classes:
                raise LoadError(f"record {rid!r}: inconsistent label length")
            records.append(rec)
    manifest = Manifest(
        records=tuple(records),
        feature_file=str(feature_path),
        num_classes=num_classes or 0,
        dim=int(matrix.shape[1]),
    )
    return manifest, matrix


def load_manifest(manifest_path, feature_path) -> list[Sample]:
    """Bind manifest records to feature rows.

    Ground-truth labels are attached to every sample for oracle use; they
    are not visible to training until queried.
    """
    manifest, matrix = parse_manifest(manifest_path, feature_path)
    samples: list[Sample] = []
    for rec in manifest.records:
        rid = str(rec["id"])
        features = matrix[int(rec["row"])].astype(np.float64)
        if not np.all(np.isfinite(features)):
            raise LoadError(f"record {rid!r}: non-finite feature value in row {rec['row']}")
        samples.append(
            Sample(
                id=rid,
                env_id=str(rec["env"]),
                timestamp=float(rec["t"]),
                features=FeatureVector(features),
                label=LabelVector(np.asarray(rec["labels"])),
            )
        )
    return samples


def write_manifest(samples: Sequence[Sample], manifest_path, feature_path) -> None:
    """Write samples as a manifest plus feature file pair."""
    if not samples:
        raise ValueError("cannot write an empty manifest")
    matrix = np.stack([s.features.values for s in samples]).astype(np.float32)
    write_features(feature_path, matrix)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for row, s in enumerate(samples):
            if s.label is None:
                raise ValueError(f"sample {s.id!r} has no label to write")
            rec = {
                "id": s.id,
                "env": s.env_id,
                "t": s.timestamp,
                "labels": s.label.flags.tolist(),
                "row": row,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class DriftConfig:
    """Synthetic drifting two-class stream parameters.

    Class means start `separation` apart and move as
    mu_c(t) = mu_c(0) + velocity * t * u_c + amplitude * sin(2 pi t / period) * w_c
    with per-environment unit directions u_c, w_c derived from the seed and
    t counted in samples. Linear motion models slow environmental change,
    the sinusoid models diurnal cycles; class priors follow the per-session
    schedule (cycled when shorter than the run).
    """

    num_envs: int = 8
    sessions_per_env: int = 20
    session_len: int = 30
    dim: int = 16
    separation: float = 2.0
    drift_velocity: float = 0.0
    drift_amplitude: float = 0.0
    drift_period: float = 200.0
    priors: tuple[float, ...] = (0.5,)
    noise_scale: float = 1.0
    seed: int = 0
    sample_period: float = 10.0

    def __post_init__(self) -> None:
        if min(self.num_envs, self.sessions_per_env, self.session_len, self.dim) < 1:
            raise ValueError("num_envs, sessions_per_env, session_len, dim must be >= 1")
        if not self.priors or any(not (0.0 <= p <= 1.0) for p in self.priors):
            raise ValueError("priors must be non-empty and lie in [0, 1]")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")
        if self.drift_period <= 0:
            raise ValueError("drift_period must be > 0")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be > 0")

    @classmethod
    def vtd_shaped(cls, **overrides) -> "DriftConfig":
        """Hour-long sessions of five-second frames (720/session).

        The session length is an assumption: the source task reports only
        labeled-audio budget per hour, which matches 8 queries of 5 s
        frames out of each 720-frame hour.
        """
        base = dict(sessions_per_env=6, session_len=720, dim=16, sample_period=5.0)
        base.update(overrides)
        return cls(**base)


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def generate_synthetic_stream(cfg: DriftConfig) -> list[Environment]:
    """Deterministic drifting stream with ground-truth labels attached."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.num_envs)
    environments: list[Environment] = []
    for e, child in enumerate(children):
        rng = np.random.default_rng(child)
        env_id = f"synth{e:03d}"
        base_dir = _unit_vector(rng, cfg.dim)
        means0 = {
            1: 0.5 * cfg.separation * base_dir,
            0: -0.5 * cfg.separation * base_dir,
        }
        lin_dir = {c: _unit_vector(rng, cfg.dim) for c in (1, 0)}
        sin_dir = {c: _unit_vector(rng, cfg.dim) for c in (1, 0)}
        total = cfg.sessions_per_env * cfg.session_len
        samples = []
        for i in range(total):
            session = i // cfg.session_len
            prior = cfg.priors[session % len(cfg.priors)]
            cls = 1 if rng.random() < prior else 0
            mean = (
                means0[cls]
                + cfg.drift_velocity * i * lin_dir[cls]
                + cfg.drift_amplitude * math.sin(2.0 * math.pi * i / cfg.drift_period) * sin_dir[cls]
            )
            values = mean + cfg.noise_scale * rng.standard_normal(cfg.dim)
            samples.append(
                Sample(
                    id=f"{env_id}-{i:06d}",
                    env_id=env_id,
                    timestamp=i * cfg.sample_period,
                    features=FeatureVector(values),
                    label=LabelVector(np.array([cls])),
                )
            )
        environments.append(Environment(env_id, tuple(samples)))
    return environments


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_report(report: RunReport, path, append: bool = False) -> None:
    """Serialize one run to a JSONL results file (floats at full precision)."""
    line = json.dumps(report.to_dict(), separators=(",", ":")) + "\n"
    if append:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)
    else:
        _atomic_write_text(path, line)


def write_reports(reports: Iterable[RunReport], path) -> None:
    """Atomically write many runs as one JSONL results file."""
    text = "".join(
        json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in reports
    )
    _atomic_write_text(path, text)


def read_reports(path) -> list[RunReport]:
    reports = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                reports.append(RunReport.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise LoadError(f"{path}:{lineno}: invalid result record ({exc})") from exc
    return reports
