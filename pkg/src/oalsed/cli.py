"""Command-line surface: dataset synthesis, experiment matrices, verification.

Subcommands mirror the experiment sections: `synth` materializes a drifting
stream to disk, `supervised`/`al`/`oal` execute a loss x seed matrix for
one paradigm, `eval` scores a checkpoint against a manifest, `gradcheck`
verifies analytic gradients, and `summarize` rebuilds the summary tables
from a results file. Matrix cells may run in parallel (--jobs); outputs are
written atomically and are deterministic for a fixed config.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .data_model import Sample, organize_environments
from .engine import run_al, run_oal, run_supervised
from .gradcheck import run_gradcheck
from .ingest import (
    generate_synthetic_stream,
    load_manifest,
    read_reports,
    write_manifest,
    write_reports,
)
from .metrics import confusion_counts, dcf, error_rates, macro_auprc, pr_curve
from .network import ArchConfig, load_checkpoint, predict
from .report import RunReport

logger = logging.getLogger("oalsed")

__all__ = ["main", "run_matrix", "summarize_reports"]


def _configure_logging() -> None:
    level = os.environ.get("OAL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(getattr(logging, level, logging.WARNING))


def _split_stream(
    samples: list[Sample], split_train: float, split_val: float, seed: int
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Seeded random train/val/test split of a flattened stream."""
    order = sorted(samples, key=lambda s: s.id)
    perm = np.random.default_rng(np.random.SeedSequence((seed, 929))).permutation(
        len(order)
    )
    n_train = int(round(split_train * len(order)))
    n_val = int(round(split_val * len(order)))
    train = [order[i] for i in perm[:n_train]]
    val = [order[i] for i in perm[n_train : n_train + n_val]]
    test = [order[i] for i in perm[n_train + n_val :]]
    return train, val, test


def _prepare_payload(cfg: ExperimentConfig) -> dict:
    """Load or synthesize the data a paradigm needs, once per matrix."""
    if cfg.dataset == "synthetic":
        envs = generate_synthetic_stream(cfg.drift)
        if cfg.paradigm == "oal":
            return {"environments": envs}
        flat = [s for env in envs for s in env.samples]
        train, val, test = _split_stream(
            flat, cfg.split_train, cfg.split_val, cfg.drift.seed
        )
        if cfg.paradigm == "supervised":
            return {"train": train, "val": val, "test": test}
        return {"pool": train + val, "test": test}

    paths = cfg.paths
    if cfg.paradigm == "oal":
        samples = load_manifest(paths["stream_manifest"], paths["stream_features"])
        envs, org = organize_environments(
            samples, cfg.min_env_duration, cfg.sample_duration
        )
        if org.dropped:
            logger.info("dropped %d short environments", len(org.dropped))
        return {"environments": envs}
    if cfg.paradigm == "supervised":
        return {
            "train": load_manifest(paths["train_manifest"], paths["train_features"]),
            "val": load_manifest(paths["val_manifest"], paths["val_features"]),
            "test": load_manifest(paths["test_manifest"], paths["test_features"]),
        }
    return {
        "pool": load_manifest(paths["pool_manifest"], paths["pool_features"]),
        "test": load_manifest(paths["test_manifest"], paths["test_features"]),
    }


def _input_dim(payload: dict) -> int:
    for value in payload.values():
        if isinstance(value, list) and value:
            first = value[0]
            return first.samples[0].features.dim if hasattr(first, "samples") else first.features.dim
    raise ConfigError("dataset is empty; nothing to run")


def _num_classes(payload: dict) -> int:
    for value in payload.values():
        if isinstance(value, list) and value:
            first = value[0]
            s = first.samples[0] if hasattr(first, "samples") else first
            return s.label.num_classes if s.label is not None else 1
    return 1


def _execute_cell(cfg: ExperimentConfig, payload: dict, token: str, seed: int) -> RunReport:
    arch = ArchConfig(
        input_dim=_input_dim(payload),
        hidden=cfg.hidden_sizes,
        num_classes=_num_classes(payload),
    )
    loss_cfg = cfg.loss_config(token)
    if cfg.paradigm == "oal":
        return run_oal(
            payload["environments"],
            arch,
            cfg.train,
            loss_cfg,
            session_len=cfg.session_len,
            budget=cfg.budget,
            bootstrap_n=cfg.bootstrap,
            strategy=cfg.strategy,
            temperature=cfg.temperature,
            target_class=cfg.target_class,
            seed=seed,
            shared_model=cfg.shared_model,
            retrain_from_scratch=cfg.retrain_from_scratch,
        )
    if cfg.paradigm == "al":
        return run_al(
            payload["pool"],
            payload["test"],
            arch,
            cfg.train,
            loss_cfg,
            steps=cfg.al_steps,
            step_budget=cfg.al_budget,
            bootstrap_n=cfg.bootstrap,
            strategy=cfg.strategy,
            temperature=cfg.temperature,
            target_class=cfg.target_class,
            seed=seed,
            retrain_from_scratch=cfg.retrain_from_scratch,
        )
    return run_supervised(
        payload["train"],
        payload["val"],
        payload["test"],
        arch,
        cfg.train,
        loss_cfg,
        target_class=cfg.target_class,
        seed=seed,
    )


def _cell_worker(args: tuple) -> RunReport:
    return _execute_cell(*args)


def run_matrix(
    cfg: ExperimentConfig, payload: dict | None = None
) -> tuple[list[RunReport], list[tuple[str, int, str]]]:
    """Execute the loss x seed grid; failures are recorded, not fatal."""
    if payload is None:
        payload = _prepare_payload(cfg)
    cells = [(token, seed) for token in cfg.losses for seed in cfg.seeds]
    reports: list[RunReport] = []
    failures: list[tuple[str, int, str]] = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [
                pool.submit(_cell_worker, (cfg, payload, token, seed))
                for token, seed in cells
            ]
            for (token, seed), future in zip(cells, futures):
                try:
                    reports.append(future.result())
                except Exception as exc:  # noqa: BLE001 - matrix must continue
                    logger.error("run %s seed %d failed: %s", token, seed, exc)
                    failures.append((token, seed, str(exc)))
    else:
        for token, seed in cells:
            try:
                reports.append(_execute_cell(cfg, payload, token, seed))
            except Exception as exc:  # noqa: BLE001
                logger.error("run %s seed %d failed: %s", token, seed, exc)
                failures.append((token, seed, str(exc)))
    return reports, failures


def _atomic_writer(path):
    tmp = f"{path}.tmp.{os.getpid()}"
    return tmp


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    tmp = _atomic_writer(path)
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def summarize_reports(reports: list[RunReport], out_dir) -> tuple[str, str]:
    """Write per-cell summary and per-session trace CSVs; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    groups: dict[tuple[str, str], list[RunReport]] = {}
    for r in reports:
        groups.setdefault((r.paradigm, r.loss), []).append(r)

    def _stats(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return float(arr.mean()), std

    summary_rows = []
    for (paradigm, loss), members in groups.items():
        dcf_m, dcf_s = _stats([r.dcf for r in members])
        fnr_m, fnr_s = _stats([r.fnr for r in members])
        fpr_m, fpr_s = _stats([r.fpr for r in members])
        summary_rows.append(
            [
                paradigm,
                loss,
                len(members),
                repr(dcf_m),
                repr(dcf_s),
                repr(fnr_m),
                repr(fnr_s),
                repr(fpr_m),
                repr(fpr_s),
            ]
        )
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_csv(
        summary_path,
        [
            "paradigm",
            "loss",
            "runs",
            "dcf_mean",
            "dcf_std",
            "fnr_mean",
            "fnr_std",
            "fpr_mean",
            "fpr_std",
        ],
        summary_rows,
    )

    trace_rows = []
    for r in reports:
        for t in r.per_session:
            trace_rows.append(
                [
                    r.run_id,
                    r.paradigm,
                    r.loss,
                    r.seed,
                    t.session,
                    t.env or "",
                    len(t.queried_ids),
                    repr(t.dcf_so_far),
                ]
            )
    trace_path = os.path.join(out_dir, "trace.csv")
    _write_csv(
        trace_path,
        ["run_id", "paradigm", "loss", "seed", "session", "env", "n_queried", "dcf_so_far"],
        trace_rows,
    )
    return summary_path, trace_path


def _overrides_from_args(args: argparse.Namespace) -> dict[str, str]:
    overrides: dict[str, str] = {}
    mapping = {
        "out": "out_dir",
        "jobs": "jobs",
        "budget": "budget",
        "session_len": "session_len",
        "bootstrap": "bootstrap",
        "lam": "lambda",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "seed", None):
        overrides["seeds"] = ",".join(str(s) for s in args.seed)
    if getattr(args, "loss", None):
        overrides["losses"] = ",".join(args.loss)
    return overrides


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, action="append", help="run seed (repeatable)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, help="parallel matrix cells")
    parser.add_argument("--paradigm", help="must match the subcommand when given")
    parser.add_argument("--loss", action="append", help="loss token (repeatable)")
    parser.add_argument("--lambda", dest="lam", type=float, help="d-argmax sharpness")
    parser.add_argument("--budget", type=int, help="per-session query budget")
    parser.add_argument("--session-len", dest="session_len", type=int, help="samples per session")
    parser.add_argument("--bootstrap", type=int, help="bootstrap corpus size")


def _cmd_matrix(args: argparse.Namespace, paradigm: str) -> int:
    if args.paradigm is not None and args.paradigm != paradigm:
        raise ConfigError(
            f"--paradigm {args.paradigm!r} contradicts the {paradigm!r} subcommand"
        )
    overrides = _overrides_from_args(args)
    overrides["paradigm"] = paradigm
    cfg = parse_config(args.config, overrides)
    reports, failures = run_matrix(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    results_path = os.path.join(cfg.out_dir, "results.jsonl")
    write_reports(reports, results_path)
    summary_path, trace_path = summarize_reports(reports, cfg.out_dir)
    print(f"wrote {len(reports)} run(s) to {results_path}")
    print(f"summary: {summary_path}")
    print(f"trace:   {trace_path}")
    for token, seed, message in failures:
        print(f"FAILED {token} seed {seed}: {message}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_synth(args: argparse.Namespace) -> int:
    overrides = _overrides_from_args(args)
    cfg = parse_config(args.config, overrides)
    envs = generate_synthetic_stream(cfg.drift)
    flat = [s for env in envs for s in env.samples]
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = os.path.join(cfg.out_dir, "manifest.jsonl")
    features = os.path.join(cfg.out_dir, "features.oalf")
    write_manifest(flat, manifest, features)
    print(f"wrote {len(flat)} samples over {len(envs)} environments")
    print(f"manifest: {manifest}")
    print(f"features: {features}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    samples = load_manifest(args.manifest, args.features)
    posts, _ = predict(params, samples)
    truth = np.stack([s.label.flags for s in samples])
    rates = error_rates(
        confusion_counts(posts[:, args.target_class], truth[:, args.target_class])
    )
    out = {
        "dcf": dcf(rates.fnr, rates.fpr),
        "fnr": rates.fnr,
        "fpr": rates.fpr,
        "n": len(samples),
    }
    if posts.shape[1] > 1:
        macro = macro_auprc(
            [pr_curve(posts[:, c], truth[:, c]) for c in range(posts.shape[1])]
        )
        out["macro_auprc"] = macro.value
        out["auprc_skipped_classes"] = macro.skipped
    else:
        curve = pr_curve(posts[:, 0], truth[:, 0])
        area = None
        if curve:
            from .metrics import auprc

            area = auprc(curve)
        out["auprc"] = area
    print(json.dumps(out, indent=2))
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradcheck(corrupt=getattr(args, "corrupt", None))
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max relative error {r.max_rel_err:.3e}")
        for name, err in r.per_parameter:
            print(f"    {name}: {err:.3e}")
    return 1 if failed else 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    reports = read_reports(args.results)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.results))
    summary_path, trace_path = summarize_reports(reports, out_dir)
    print(f"summary: {summary_path}")
    print(f"trace:   {trace_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oalsed",
        description="Online active learning experiments over feature-vector streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("supervised", "al", "oal"):
        p = sub.add_parser(name, help=f"run the {name} experiment matrix")
        _add_common_flags(p)
        p.set_defaults(func=lambda a, n=name: _cmd_matrix(a, n))

    p = sub.add_parser("synth", help="materialize a synthetic stream to disk")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="score a checkpoint against a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--target-class", dest="target_class", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients by finite differences")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("summarize", help="rebuild summary tables from results")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
