"""Command-line entry point.

Every subcommand writes into a fresh run directory under ``--out``:
``manifest.json`` (config, master seed, versions; deterministic),
``timing.json`` (wall-clock data, kept apart so manifests compare
byte-for-byte) and the experiment CSVs. Progress goes to stderr; stdout
carries a single JSON summary, or an error object on failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config
from .evaluation import (
    SWEEP_COLUMNS,
    experiment_fig4a,
    experiment_fig4b,
    run_oracle_checks,
    snr_sweep,
)
from .jointopt import RunResult, run_joint, run_random_baseline

MANIFEST_VERSION = 1
COMMANDS = ("sweep", "joint", "baseline", "fig4a", "fig4b", "oracle-check")


class CliError(RuntimeError):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from err


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risbo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (or a manifest.json from an earlier run)")
        p.add_argument("--preset", choices=("desk", "paper"))
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--seeds", type=_int_list, help="comma-separated seed list for replicated runs")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--out", help="parent directory for run directories")
        if name != "oracle-check":
            p.add_argument("--snr-db", type=_float_list,
                           help="SNR list in dB (sweep, fig4a) or the fixed BO SNR (joint, baseline, fig4b)")
            p.add_argument("--n-bo", type=int, help="number of BO iterations")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides: dict = {}
    path = args.config
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError):
            doc = None  # let parse_config raise the specific error
        if isinstance(doc, dict) and "manifest_version" in doc:
            overrides = doc["config"]
            path = None
    if args.seed is not None:
        overrides["seed"] = args.seed
    snr = getattr(args, "snr_db", None)
    if snr is not None:
        if args.command in ("sweep", "fig4a"):
            overrides.setdefault("eval", {})["snr_db"] = snr
        else:
            if len(snr) != 1:
                raise CliError(f"{args.command} takes a single --snr-db value, got {len(snr)}")
            overrides.setdefault("bo", {})["snr_db"] = snr[0]
    if getattr(args, "n_bo", None) is not None:
        overrides.setdefault("bo", {})["n_bo"] = args.n_bo
    if args.seeds is not None:
        if not args.seeds:
            raise CliError("--seeds must not be empty")
        overrides.setdefault("eval", {})["seeds"] = args.seeds
    if args.out is not None:
        overrides["out_dir"] = args.out
    return parse_config(path, preset=args.preset, overrides=overrides)


def seeds_of(cfg: ExperimentConfig, args: argparse.Namespace) -> list[int]:
    if args.seeds is not None:
        return list(cfg.eval.seeds)
    return [cfg.seed]


def make_run_dir(out: str | Path, command: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = Path(out) / f"{command}-{stamp}"
    run_dir, n = base, 1
    while True:
        try:
            run_dir.mkdir(parents=True)
            return run_dir
        except FileExistsError:
            n += 1
            run_dir = base.with_name(f"{base.name}-{n}")


def manifest(command: str, cfg: ExperimentConfig, seeds: list[int], files: list[str]) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "seed": cfg.seed,
        "seeds": seeds,
        "config": cfg.to_json(),
        "files": sorted(files),
        "versions": {
            "risbo": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def sweep_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in records:
        writer.writerow(r.to_row())
    return buf.getvalue()


def _map_seeds(fn, cfg: ExperimentConfig, seeds: list[int], jobs: int | None) -> list:
    """Run ``fn(cfg, seed)`` per seed; results come back in seed-list order."""
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(seeds) == 1:
        out = []
        for s in seeds:
            _log(f"seed {s}: running")
            out.append(fn(cfg, s))
        return out
    with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
        return list(pool.map(fn, [cfg] * len(seeds), seeds))


def _sweep_task(cfg, seed):
    return snr_sweep(cfg, seed=seed)


def _fig4a_task(cfg, seed):
    return experiment_fig4a(cfg, seed).records


def _fig4b_task(cfg, seed):
    return experiment_fig4b(cfg, seed)


def _joint_task(cfg, seed):
    return run_joint(cfg, seed)


def _baseline_task(cfg, seed):
    return run_random_baseline(cfg, seed)


def _run_summary(run: RunResult) -> dict:
    return {
        "seed": run.seed,
        "strategy": run.strategy,
        "min_ber": run.min_ber,
        "best_iter": run.best_entry.t,
        "best_phase_indices": list(run.best_phi.indices),
        "confirmation_ber": run.confirmation.ber,
        "pilot_transmissions": run.pilot_transmissions,
    }


def _trace_files(runs: list[RunResult], name: str, multi: bool) -> dict[str, str]:
    if not multi:
        return {f"{name}.csv": runs[0].trace_csv()}
    return {f"seed_{r.seed}/{name}.csv": r.trace_csv() for r in runs}


def execute(command: str, cfg: ExperimentConfig, seeds: list[int], jobs: int | None) -> tuple[dict, dict]:
    """Run one subcommand; returns ``(files, summary)`` with file contents as strings."""
    multi = len(seeds) > 1
    if command == "oracle-check":
        results = [(n, bool(ok), d) for n, ok, d in run_oracle_checks(cfg.seed)]
        for name, ok, detail in results:
            _log(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        rows = [{"name": n, "passed": ok, "detail": d} for n, ok, d in results]
        summary = {"checks": rows, "all_passed": all(ok for _, ok, _ in results)}
        return {"oracle_checks.json": _dump(rows)}, summary
    if command in ("sweep", "fig4a"):
        task = _sweep_task if command == "sweep" else _fig4a_task
        records = [r for rs in _map_seeds(task, cfg, seeds, jobs) for r in rs]
        return {"sweep.csv": sweep_csv(records)}, {"rows": len(records)}
    if command in ("joint", "baseline"):
        task = _joint_task if command == "joint" else _baseline_task
        runs = _map_seeds(task, cfg, seeds, jobs)
        files = _trace_files(runs, "trace", multi)
        files["result.json"] = _dump([r.to_json() for r in runs] if multi else runs[0].to_json())
        return files, {"runs": [_run_summary(r) for r in runs]}
    if command == "fig4b":
        pairs = _map_seeds(_fig4b_task, cfg, seeds, jobs)
        bo, rnd = [p[0] for p in pairs], [p[1] for p in pairs]
        files = {**_trace_files(bo, "bo_trace", multi), **_trace_files(rnd, "random_trace", multi)}
        rows = [{"seed": b.seed, "bo_min_ber": b.min_ber, "random_min_ber": r.min_ber,
                 "bo_not_worse": bool(b.min_ber <= r.min_ber)} for b, r in zip(bo, rnd)]
        files["summary.json"] = _dump(rows)
        return files, {"pairs": rows, "bo_not_worse": sum(r["bo_not_worse"] for r in rows)}
    raise CliError(f"unknown command {command!r}")


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args)
        seeds = seeds_of(cfg, args)
        files, summary = execute(args.command, cfg, seeds, args.jobs)
        run_dir = make_run_dir(cfg.out_dir, args.command)
        for name, text in files.items():
            target = run_dir / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text)
        (run_dir / "manifest.json").write_text(_dump(manifest(args.command, cfg, seeds, list(files))))
        wall = time.time() - started
        (run_dir / "timing.json").write_text(_dump({
            "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "wall_time_s": wall,
        }))
        _log(f"wrote {run_dir} in {wall:.1f} s")
        print(json.dumps({"status": "ok", "command": args.command, "run_dir": str(run_dir), **summary},
                         sort_keys=True))
        if args.command == "oracle-check" and not summary["all_passed"]:
            return 1
        return 0
    except Exception as err:  # noqa: BLE001 - every failure becomes a diagnostic
        kind = type(err).__name__
        print(json.dumps({"status": "error", "command": args.command, "kind": kind, "message": str(err)},
                         sort_keys=True))
        _log(f"error: {kind}: {err}".splitlines()[0])
        return 2 if isinstance(err, (ConfigError, CliError)) else 1


def main() -> None:
    sys.exit(run())
