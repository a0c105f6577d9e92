"""Run result records: the unit of persisted experiment output.

A RunReport serializes to one JSON line (see ingest). Optional fields
(auprc, per-session env tags) are omitted when absent so that
write -> read -> write is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["SessionTrace", "RunReport"]


@dataclass(frozen=True)
class SessionTrace:
    """One processed session (or AL step): what was queried, running cost."""

    session: int
    queried_ids: tuple[str, ...]
    dcf_so_far: float
    env: str | None = None

    def to_dict(self) -> dict:
        d: dict = {
            "session": self.session,
            "queried_ids": list(self.queried_ids),
            "dcf_so_far": self.dcf_so_far,
        }
        if self.env is not None:
            d["env"] = self.env
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionTrace":
        return cls(
            session=int(d["session"]),
            queried_ids=tuple(d["queried_ids"]),
            dcf_so_far=float(d["dcf_so_far"]),
            env=d.get("env"),
        )


@dataclass(frozen=True)
class RunReport:
    """Final metrics and label accounting for one experiment run."""

    run_id: str
    paradigm: str
    loss: str
    seed: int
    dcf: float
    fnr: float
    fpr: float
    labels_used: int
    samples_to_start: int
    auprc: float | None = None
    labels_bootstrap: int = 0
    labels_queried: int = 0
    per_session: tuple[SessionTrace, ...] = ()
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("dcf", "fnr", "fpr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.auprc is not None and not (0.0 <= self.auprc <= 1.0):
            raise ValueError(f"auprc must lie in [0, 1], got {self.auprc}")

    def to_dict(self) -> dict:
        d: dict = {
            "run_id": self.run_id,
            "paradigm": self.paradigm,
            "loss": self.loss,
            "seed": self.seed,
            "dcf": self.dcf,
            "fnr": self.fnr,
            "fpr": self.fpr,
        }
        if self.auprc is not None:
            d["auprc"] = self.auprc
        d["labels_used"] = self.labels_used
        d["labels_bootstrap"] = self.labels_bootstrap
        d["labels_queried"] = self.labels_queried
        d["samples_to_start"] = self.samples_to_start
        d["per_session"] = [t.to_dict() for t in self.per_session]
        if self.flags:
            d["flags"] = list(self.flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            run_id=str(d["run_id"]),
            paradigm=str(d["paradigm"]),
            loss=str(d["loss"]),
            seed=int(d["seed"]),
            dcf=float(d["dcf"]),
            fnr=float(d["fnr"]),
            fpr=float(d["fpr"]),
            auprc=None if d.get("auprc") is None else float(d["auprc"]),
            labels_used=int(d["labels_used"]),
            labels_bootstrap=int(d.get("labels_bootstrap", 0)),
            labels_queried=int(d.get("labels_queried", 0)),
            samples_to_start=int(d["samples_to_start"]),
            per_session=tuple(
                SessionTrace.from_dict(t) for t in d.get("per_session", [])
            ),
            flags=tuple(d.get("flags", [])),
        )
