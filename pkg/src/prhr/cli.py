"""``prhr`` command line: gen, solve, saa, compare and failure-sim.

Every command writes its outputs into ``--out`` plus a ``manifest.json`` with
the fully resolved configuration, its digest and the package versions, so a
run can be replayed exactly.  The exit status is 0 only when every requested
file was written.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .benders import BendersConfig
from .instances import FailureSimConfig, GeneratorParams, generate_instance, load_instance, save_instance
from .lagrangian import LagrangianConfig
from .report import (SOLVE_STRATEGIES, compare_strategies, failure_comparison, median_iterations, paper_defaults,
                     saa_sweep, solve_instance, worker_count)

log = logging.getLogger("prhr")

COMPARE_COLUMNS = ["strategy", "seed", "iterations", "final_gap", "cuts", "wall_ms"]


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------
def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> Path:
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in columns})
    return path


def digest(doc) -> str:
    return hashlib.sha256(json.dumps(_clean(doc), sort_keys=True).encode()).hexdigest()[:16]


def environment() -> dict:
    return {"prhr": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "platform": platform.platform(), "threads": worker_count()}


def write_manifest(out: Path, command: str, config: dict, outputs: list[Path], argv: list[str]) -> Path:
    doc = {"command": command, "argv": argv, "config": config, "config_digest": digest(config),
           "seed": config.get("seed"), "versions": environment(), "defaults": paper_defaults(),
           "outputs": sorted(p.name for p in outputs), "created_unix": time.time()}
    return write_json(out / "manifest.json", doc)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------
def _int_list(text: str) -> list[int]:
    """``"5,10,15"`` or ``"1-20"`` (or a mix) as a list of ints."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return out


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _generator_flags(p: argparse.ArgumentParser, scenarios: int = 5) -> None:
    g = p.add_argument_group("instance generator")
    g.add_argument("--nodes", type=int, default=5)
    g.add_argument("--periods", type=int, default=3)
    g.add_argument("--scenarios", type=int, default=scenarios)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--distribution", choices=("uniform", "truncated-normal"), default="uniform")
    g.add_argument("--degenerate", action="store_true",
                   help="zero-width ranges for every scenario-dependent family (identical scenarios)")


def _weight_flags(p: argparse.ArgumentParser) -> None:
    d = paper_defaults()
    p.add_argument("--theta1", type=float, default=d["theta1"])
    p.add_argument("--theta2", type=float, default=None, help="defaults to 1 - theta1")
    p.add_argument("--tau", type=float, default=d["tau"])


def _solver_flags(p: argparse.ArgumentParser) -> None:
    d = paper_defaults()
    p.add_argument("--eps-lr", type=_positive(float), default=d["eps_lr"])
    p.add_argument("--eps-bd", type=_positive(float), default=d["eps_bd"])
    p.add_argument("--iter1-max", type=_positive(int), default=d["iter1_max"])
    p.add_argument("--iter2-max", type=_positive(int), default=d["iter2_max"])
    p.add_argument("--time-max", type=_positive(float), default=d["time_max"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prhr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic instance file")
    _generator_flags(p)
    _weight_flags(p)
    p.add_argument("--out", required=True, help="output file (or directory for instance.json)")

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", help="instance JSON file (otherwise the generator flags are used)")
    _generator_flags(p)
    _weight_flags(p)
    _solver_flags(p)
    p.add_argument("--strategy", choices=SOLVE_STRATEGIES, default="mpbd")
    p.add_argument("--out", required=True)

    p = sub.add_parser("saa", help="sample average approximation grid sweep")
    _generator_flags(p)
    p.add_argument("--samples", type=_int_list, default=[10, 15, 20, 25, 30], help="sample sizes |S|")
    p.add_argument("--replications", type=_int_list, default=[10, 20, 30, 40, 50], help="replication counts |M|")
    p.add_argument("--reference", type=_positive(int), default=500, help="reference sample size |S'|")
    p.add_argument("--seeds", type=_int_list, default=None, help="study seeds (default: --seed)")
    p.add_argument("--vss", action="store_true", help="also compute EEV, RP and VSS per cell")
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="compare the four inner strategies")
    _generator_flags(p)
    _solver_flags(p)
    p.add_argument("--seeds", type=_int_list, default=None, help="seed list such as 1-20 (default: --seed)")
    p.add_argument("--warm", type=int, default=3, help="classical subgradient steps that fix the multipliers")
    p.add_argument("--out", required=True)

    p = sub.add_parser("failure-sim", help="link-failure comparison of PRH-R and the risk-free model")
    p.add_argument("--instance")
    _generator_flags(p)
    _weight_flags(p)
    _solver_flags(p)
    p.add_argument("--strategy", choices=SOLVE_STRATEGIES, default="exact")
    p.add_argument("--failure-prob", type=float, default=0.1)
    p.add_argument("--sim-scenarios", type=_positive(int), default=1000)
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--uniform-failures", action="store_true",
                   help="same failure probability on every link (default: tilted by link risk)")
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------
def generator_params(args) -> GeneratorParams:
    kw = dict(n_nodes=args.nodes, n_periods=args.periods, n_scenarios=args.scenarios, seed=args.seed,
              distribution_kind=args.distribution)
    if hasattr(args, "tau"):
        kw["tau"] = args.tau
        kw["theta"] = _weights(args)
    if args.degenerate:
        kw.update(cost_range=(15.0, 15.0), flow_range=(0.65, 0.65), risk_range=(5.0, 5.0))
        ht = args.nodes * args.periods
        kw["threshold_range"] = (5.0 * ht, 5.0 * ht)
    return GeneratorParams(**kw)


def _weights(args) -> tuple[float, float]:
    th1 = float(args.theta1)
    th2 = 1.0 - th1 if args.theta2 is None else float(args.theta2)
    return th1, th2


def load_or_generate(args):
    if getattr(args, "instance", None):
        inst = load_instance(args.instance)
        th1, th2 = _weights(args)
        inst = inst.with_(theta1=th1, theta2=th2, tau=args.tau)
        return inst, {"instance": str(args.instance)}
    params = generator_params(args)
    return generate_instance(params), {"generator": asdict(params)}


def lagrangian_config(args, strategy: str) -> LagrangianConfig:
    bd = BendersConfig(eps_bd=args.eps_bd, iter2_max=args.iter2_max)
    return LagrangianConfig(strategy=strategy if strategy != "exact" else "mpbd", eps_lr=args.eps_lr,
                            iter1_max=args.iter1_max, time_max=args.time_max, benders=bd)


def _lr_dict(cfg: LagrangianConfig) -> dict:
    doc = {k: v for k, v in cfg.__dict__.items() if k != "benders"}
    doc["benders"] = asdict(cfg.benders)
    return doc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_gen(args) -> list[Path]:
    params = generator_params(args)
    out = Path(args.out)
    if out.suffix.lower() != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "instance.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(generate_instance(params), out)
    print(f"{out}  digest={params.digest()}")
    return [out]


def cmd_solve(args, out: Path) -> tuple[list[Path], dict]:
    inst, source = load_or_generate(args)
    lr = lagrangian_config(args, args.strategy)
    rep = solve_instance(inst, args.strategy, lr)
    summary = {"command": "solve", "prhr_version": __version__, "instance": {"H": inst.H, "T": inst.T, "S": inst.S},
               "result": rep.summary(), "environment": environment()}
    files = [write_json(out / "summary.json", summary),
             write_csv(out / "trace_outer.csv", rep.trace_outer),
             write_csv(out / "trace_inner.csv", rep.trace_inner,
                       ["it_LR", "it_BD", "LB_BD", "UB_BD", "gap", "cuts_added", "cuts_total", "strategy", "wall_ms"])]
    config = {**source, "strategy": args.strategy, "seed": args.seed, "theta1": inst.theta1, "theta2": inst.theta2,
              "tau": inst.tau, "lagrangian": _lr_dict(lr)}
    flag = " (limit reached)" if rep.limit_reached else ""
    print(f"{args.strategy}: LB={rep.lb:.6g} UB={rep.ub:.6g} gap={100 * rep.gap:.4g}%{flag}")
    return files, config


def cmd_saa(args, out: Path) -> tuple[list[Path], dict]:
    params = generator_params(args)
    seeds = args.seeds or [args.seed]
    rows = saa_sweep(params, args.samples, args.replications, args.reference, seeds, with_vss=args.vss)
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {"command": "saa", "prhr_version": __version__, "result": {
        "cells": len(rows), "failed_cells": len(rows) - len(ok),
        "median_gap_percent_by_size": {str(s): float(np.median([r["gap_percent"] for r in ok if r["sample_size"] == s]))
                                       for s in args.samples if any(r["sample_size"] == s for r in ok)},
    }, "environment": environment()}
    files = [write_csv(out / "saa_grid.csv", rows), write_json(out / "summary.json", summary)]
    config = {"generator": asdict(params), "samples": args.samples, "replications": args.replications,
              "reference": args.reference, "seeds": seeds, "seed": args.seed, "vss": args.vss}
    for r in rows:
        if r["status"] == "ok":
            print(f"|S|={r['sample_size']:>3} |M|={r['replications']:>3} seed={r['seed']}: "
                  f"gap={r['gap_percent']:.3f}% sd_lb={r['sd_lb']:.4g} cpu={r['cpu_s']:.1f}s")
        else:
            print(f"|S|={r['sample_size']:>3} |M|={r['replications']:>3} seed={r['seed']}: failed ({r['error']})")
    return files, config


def cmd_compare(args, out: Path) -> tuple[list[Path], dict]:
    params = generator_params(args)
    seeds = args.seeds or [args.seed]
    bd = BendersConfig(eps_bd=args.eps_bd, iter2_max=args.iter2_max)
    rows, traces = compare_strategies(params, seeds, bd, warm=args.warm)
    med = median_iterations(rows)
    summary = {"command": "compare", "prhr_version": __version__,
               "result": {"median_iterations": med, "seeds": seeds}, "environment": environment()}
    files = [write_csv(out / "compare.csv", rows, COMPARE_COLUMNS),
             write_csv(out / "trace_inner.csv", traces,
                       ["seed", "strategy", "it_BD", "LB_BD", "UB_BD", "gap", "cuts_added", "cuts_total", "wall_ms"]),
             write_json(out / "summary.json", summary)]
    config = {"generator": asdict(params), "seeds": seeds, "seed": args.seed, "warm": args.warm,
              "benders": asdict(bd)}
    print("median inner iterations: " + ", ".join(f"{k}={v:g}" for k, v in med.items()))
    return files, config


def cmd_failure_sim(args, out: Path) -> tuple[list[Path], dict]:
    inst, source = load_or_generate(args)
    sim = FailureSimConfig(n_scenarios=args.sim_scenarios, failure_probability=args.failure_prob,
                           seed=args.sim_seed, risk_weighted=not args.uniform_failures)
    lr = lagrangian_config(args, args.strategy)
    rows = failure_comparison(inst, sim, args.strategy, lr)
    prh, rfm = rows
    summary = {"command": "failure-sim", "prhr_version": __version__, "result": {
        "rows": rows, "prhr_unserved_le_rfm": prh["unserved_total"] <= rfm["unserved_total"],
        "prhr_hubs_ge_rfm": prh["open_hubs"] >= rfm["open_hubs"]}, "environment": environment()}
    files = [write_csv(out / "failure.csv", rows), write_json(out / "summary.json", summary)]
    config = {**source, "seed": args.seed, "strategy": args.strategy, "failure": asdict(sim),
              "theta1": inst.theta1, "theta2": inst.theta2, "tau": inst.tau}
    for r in rows:
        print(f"{r['model']}: hubs={r['open_hubs']} unserved={r['unserved_total']:.6g}")
    return files, config


COMMANDS = {"solve": cmd_solve, "saa": cmd_saa, "compare": cmd_compare, "failure-sim": cmd_failure_sim}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            files = cmd_gen(args)
            return 0 if all(p.exists() for p in files) else 1
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files, config = COMMANDS[args.command](args, out)
        files.append(write_manifest(out, args.command, config, files, argv))
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"prhr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    missing = [p for p in files if not p.exists()]
    if missing:
        print(f"prhr {args.command}: missing outputs {[str(p) for p in missing]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":       # pragma: no cover
    sys.exit(main())
