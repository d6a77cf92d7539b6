"""Command-line harness: train, evaluate, table1, curves, sample.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.  On
failure one JSON line ``{"error": ..., "message": ...}`` goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .. import search
from ..grad import rollout
from ..lp import NumericalBreakdown
from ..policy import AssemblyError, FallbackUsed, Theta
from .config import EVAL, TRAIN, VARIANT_ORDER, ConfigError, ExperimentConfig

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": str(message), "exit_code": code}), file=sys.stderr)
    return code


# csv output ---------------------------------------------------------------

def csv_text(cfg: ExperimentConfig, header, rows, master_seed=None):
    buf = io.StringIO()
    seed = cfg.master_seed if master_seed is None else master_seed
    buf.write(f"# config_hash={cfg.config_hash} master_seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Rows of a CSV written by this harness, skipping the comment line."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_manifest(out_dir, cfg, command, extra):
    import numba
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash,
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
        "seed_rule": "SeedSequence([master_seed, purpose, variant_index, round(1000*sigma_f)])",
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "numba": numba.__version__},
        **extra,
    }
    search.atomic_write(Path(out_dir) / f"manifest_{command}.json",
                        json.dumps(manifest, indent=2, sort_keys=True))


# building blocks -----------------------------------------------------------

def _cell_name(variant, sigma_f):
    return f"{variant}_sf{float(sigma_f):g}"


def train_cell(cfg, variant, sigma_f, out_dir, resume=None):
    if variant == "benchmark":
        raise ValidationError("Benchmark has no parameters")
    if variant not in VARIANT_ORDER:
        raise ValidationError(f"unknown variant {variant!r}")
    cell = Path(out_dir) / _cell_name(variant, sigma_f)
    cell.mkdir(parents=True, exist_ok=True)
    ckpt_path = cell / "checkpoint.json"
    ckpt = None
    if resume is not None:
        try:
            ckpt = search.Checkpoint.load(resume)
        except (OSError, ValueError, KeyError) as e:
            raise ValidationError(f"cannot read checkpoint {resume}: {e}") from None
        if ckpt.kind != variant:
            raise ValidationError(f"checkpoint holds {ckpt.kind}, not {variant}")
    problem = cfg.problem(sigma_f)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FallbackUsed)
        theta, trace = search.run(
            cfg.initial_theta(variant), problem, cfg.N, cfg.batch_size,
            cfg.rng(TRAIN, variant, sigma_f), eta=cfg.eta,
            checkpoint_path=ckpt_path, checkpoint_every=cfg.checkpoint_every or cfg.N,
            resume=ckpt)
    runtime = time.perf_counter() - t0
    header = ["n"] + [f"theta_{i}" for i in range(theta.size)] + ["F_bar", "grad_norm"]
    rows = [[it.n, *it.theta, it.F_bar, it.grad_norm] for it in trace.iterates]
    search.atomic_write(cell / "trace.csv", csv_text(cfg, header, rows))
    return theta, trace, runtime


def load_theta(path):
    try:
        ck = search.Checkpoint.load(path)
    except (OSError, ValueError, KeyError) as e:
        raise ValidationError(f"cannot read checkpoint {path}: {e}") from None
    return Theta.make(ck.kind, ck.theta)


def evaluate_cell(cfg, theta, sigma_f, n_paths, bench_cache=None):
    problem = cfg.problem(sigma_f)
    seeds = cfg.rng(EVAL, None, sigma_f).integers(0, search.SEED_HIGH, size=n_paths).tolist()
    key = (float(sigma_f), n_paths)
    bench = None if bench_cache is None else bench_cache.get(key)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FallbackUsed)
        ev = search.evaluate(theta, problem, n_paths, seeds=seeds, benchmark_rewards=bench)
    if bench_cache is not None:
        bench_cache[key] = ev.benchmark_rewards
    return ev


# subcommands ---------------------------------------------------------------

def cmd_train(cfg, args):
    sigma_f = _require(args.sigma_f, "--sigma-f")
    variant = _require(args.variant, "--variant")
    theta, trace, runtime = train_cell(cfg, variant, sigma_f, args.out_dir, args.resume)
    write_manifest(args.out_dir, cfg, "train", {"variant": variant, "sigma_f": sigma_f,
                                                "theta": theta.values.tolist(), "runtime_s": runtime})
    print(json.dumps({"variant": variant, "sigma_f": sigma_f, "theta": theta.values.tolist()}))


def cmd_evaluate(cfg, args):
    sigma_f = _require(args.sigma_f, "--sigma-f")
    if args.checkpoint:
        theta = load_theta(args.checkpoint)
        if args.variant and args.variant != theta.kind:
            raise ValidationError(f"checkpoint holds {theta.kind}, not {args.variant}")
    else:
        variant = args.variant or "benchmark"
        if variant != "benchmark":
            raise ValidationError("evaluating a parameterized variant needs --checkpoint")
        theta = Theta.benchmark()
    n = args.n_paths or cfg.n_eval_paths
    if n < 2:
        raise ValidationError("--n-paths must be at least 2")
    ev = evaluate_cell(cfg, theta, sigma_f, n)
    header = ["variant", "sigma_f", "mean_F", "delta_F", "paired_std_error"]
    text = csv_text(cfg, header, [[theta.kind, float(sigma_f), ev.mean, ev.delta_F, ev.delta_F_se]])
    out = Path(args.out_dir) / f"evaluate_{_cell_name(theta.kind, sigma_f)}.csv"
    search.atomic_write(out, text)
    sys.stdout.write(text)


def run_table(cfg, out_dir):
    """Train and evaluate every (variant, sigma_f) cell; returns ``{cell_name: cell}``.

    Each finished cell is written atomically to ``<cell>/cell.json`` and is
    reused by a later run with the same config, so an interrupted table
    resumes where it stopped.  Failed cells carry ``status = "failed: ..."``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, cells = [], {}
    bench_cache = {}
    for sigma_f in cfg.sigma_f_grid:
        for variant in cfg.variants:
            cell_file = out / _cell_name(variant, sigma_f) / "cell.json"
            cell = _finished_cell(cell_file, cfg)
            if cell is None:
                cell = run_table_cell(cfg, variant, sigma_f, out, bench_cache)
                cell["config_hash"] = cfg.config_hash
                search.atomic_write(cell_file, json.dumps(cell, sort_keys=True))
            cells[_cell_name(variant, sigma_f)] = cell
            rows.append([variant, float(sigma_f), cell["delta_F"], cell["delta_F_se"], cell["mean_F"],
                         cell["benchmark_F"], " ".join(repr(v) for v in cell["theta"]),
                         cell["runtime_s"], cell["status"]])
    header = ["variant", "sigma_f", "delta_F", "delta_F_se", "mean_F", "benchmark_F", "theta",
              "runtime_s", "status"]
    search.atomic_write(out / "table1.csv", csv_text(cfg, header, rows))
    write_manifest(out, cfg, "table1", {"cells": cells})
    return cells


def cmd_table1(cfg, args):
    out = Path(args.out_dir)
    cells = run_table(cfg, out)
    failed = [k for k, c in cells.items() if c["status"] != "ok"]
    print(json.dumps({"table": str(out / "table1.csv"), "failed_cells": failed}))
    if failed:
        raise NumericalBreakdown(f"{len(failed)} table cells failed: {', '.join(failed)}")


def _finished_cell(path, cfg):
    """A completed cell from an earlier run with the same config, else None."""
    if not path.exists():
        return None
    cell = json.loads(path.read_text())
    if cell.get("config_hash") != cfg.config_hash or cell.get("status") != "ok":
        return None
    return cell


def run_table_cell(cfg, variant, sigma_f, out, bench_cache):
    t0 = time.perf_counter()
    try:
        if variant == "benchmark":
            theta = Theta.benchmark()
        else:
            theta, _, _ = train_cell(cfg, variant, sigma_f, out)
        ev = evaluate_cell(cfg, theta, sigma_f, cfg.n_eval_paths, bench_cache)
    except (NumericalBreakdown, search.DivergenceDetected, AssemblyError) as e:
        nan = float("nan")
        return {"variant": variant, "sigma_f": float(sigma_f), "delta_F": nan, "delta_F_se": nan,
                "mean_F": nan, "benchmark_F": nan, "theta": [], "runtime_s": time.perf_counter() - t0,
                "status": f"failed: {e}"}
    return {"variant": variant, "sigma_f": float(sigma_f), "delta_F": ev.delta_F,
            "delta_F_se": ev.delta_F_se, "mean_F": ev.mean, "benchmark_F": ev.benchmark_mean,
            "theta": theta.values.tolist(), "runtime_s": time.perf_counter() - t0, "status": "ok"}


def cmd_curves(cfg, args):
    sigma_f = _require(args.sigma_f, "--sigma-f")
    src = Path(args.checkpoint_dir or args.out_dir)
    H = cfg.H
    theta_rows = []
    tuned = {}
    for variant in ("constant", "lookup", "exponential"):
        path = src / _cell_name(variant, sigma_f) / "checkpoint.json"
        if not path.exists():
            raise ValidationError(f"missing checkpoint {path}")
        theta = load_theta(path)
        tuned[variant] = theta
        for tau, v in enumerate(theta.forecast_curve(H)[1:], start=1):
            theta_rows.append([variant, tau, float(v)])
    out = Path(args.out_dir)
    search.atomic_write(out / f"theta_curves_sf{float(sigma_f):g}.csv",
                        csv_text(cfg, ["variant", "tau", "theta"], theta_rows))

    # storage and cumulative profit on one evaluation path
    seed = int(cfg.rng(EVAL, None, sigma_f).integers(0, search.SEED_HIGH))
    problem = cfg.problem(sigma_f)
    path = problem.path(seed)
    policies = {"benchmark": Theta.benchmark(), "capacity_0.3_0": Theta.capacity(0.3, 0.0),
                "capacity_1_0.05": Theta.capacity(1.0, 0.05), **tuned}
    traj_rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FallbackUsed)
        for name, theta in policies.items():
            res, _ = rollout(theta, path, problem.horizon, problem.params)
            cum = 0.0
            for t, (s, _x, c) in enumerate(res.per_period):
                cum += c
                traj_rows.append([name, t, float(s.R), float(c), cum])
    search.atomic_write(out / f"trajectories_sf{float(sigma_f):g}.csv",
                        csv_text(cfg, ["policy", "t", "R", "contribution", "cumulative"], traj_rows))
    write_manifest(out, cfg, "curves", {"sigma_f": sigma_f, "path_seed": seed})


def cmd_sample(cfg, args):
    sigma_f = args.sigma_f if args.sigma_f is not None else 0.0
    seed = cfg.master_seed
    path = cfg.problem(sigma_f).path(seed)
    d = path.to_csv_bundle(Path(args.out_dir) / f"path_seed{seed}_sf{float(sigma_f):g}")
    print(json.dumps({"bundle": str(d)}))


def _require(v, flag):
    if v is None:
        raise UsageError(f"{flag} is required")
    return v


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "table1": cmd_table1,
            "curves": cmd_curves, "sample": cmd_sample}


def build_parser():
    p = _Parser(prog="cfa", description="Tune and evaluate parametric lookahead policies.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML experiment config (defaults apply when omitted)")
        s.add_argument("--seed", type=int, help="override master_seed")
        s.add_argument("--out-dir", default="results")
        s.add_argument("--variant")
        s.add_argument("--sigma-f", type=float, dest="sigma_f")
        s.add_argument("--n-paths", type=int, dest="n_paths")
        s.add_argument("--resume", help="checkpoint to resume training from")
        s.add_argument("--checkpoint", help="trained checkpoint to evaluate")
        s.add_argument("--checkpoint-dir", dest="checkpoint_dir",
                       help="directory holding per-cell checkpoints (curves)")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_overrides(master_seed=args.seed)
        if args.sigma_f is not None and (math.isnan(args.sigma_f) or args.sigma_f < 0):
            raise ValidationError("--sigma-f must be non-negative")
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except UsageError as e:
        return _fail("usage", e, EXIT_USAGE)
    except (ConfigError, ValidationError) as e:
        return _fail("validation", e, EXIT_VALIDATION)
    except (NumericalBreakdown, search.DivergenceDetected, AssemblyError) as e:
        return _fail("numerical", e, EXIT_NUMERICAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
