"""Command line front end.

Subcommands cover the experiment surface: simulate (synthetic streams),
replay (recorded traces), mc-safety (coverage studies), sweep (risk
budget sensitivity), compare (methods head to head on shared streams),
and ablate (preset design sweeps). Outputs are deterministic given the
flags, so reruns are byte-identical. Errors print one JSON line to
stderr naming the offending key; exit code 2 means bad input, 3 means a
run died midway.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    ConfigError,
    ConstantSchedule,
    RouterConfig,
    TwoStageSchedule,
    config_digest,
    config_to_dict,
    load_config,
    validate_config,
)
from .engine import LossGateViolation, OutOfOrderObservation, WagerOutOfRange
from .metrics import TokenDivisionByZero
from .records import (
    write_summary_json,
    write_trajectory,
    write_wealth_snapshots,
)
from .simulation import (
    Method,
    NonStationarySpec,
    SpecError,
    StreamExhausted,
    UnknownMethod,
    load_stream_spec,
    mc_safety,
    parse_method,
    replay_trace,
    run_replication,
    spec_to_dict,
)
from .traces import TraceFormatError, load_trace

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _emit_error(kind: str, message: str, key: str | None = None,
                violations=None) -> None:
    doc: dict[str, Any] = {"error": {"kind": kind, "message": message}}
    if key is not None:
        doc["error"]["key"] = key
    if violations:
        doc["error"]["violations"] = [
            {"code": v.code, "key": v.key, "message": v.message} for v in violations]
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def _load_config_arg(args) -> RouterConfig:
    config = load_config(args.config) if args.config else RouterConfig()
    return validate_config(config)


def _resolve_seeds(args, config: RouterConfig) -> list[int]:
    if getattr(args, "seeds", None):
        return [int(part) for part in args.seeds.split(",") if part]
    if getattr(args, "n_seeds", None) is not None:
        base = args.base_seed
        return list(range(base, base + args.n_seeds))
    return [config.seed]


def _resolve_workers(requested: int | None) -> int:
    """Default serial; BPAC_THREADS caps whatever was asked for."""
    want = requested if requested is not None else 1
    env = os.environ.get("BPAC_THREADS")
    if env:
        want = min(want, max(1, int(env)))
    return max(1, want)


def _ensure_out(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _clean(x: float | None) -> float | None:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return float(x)


def _final_row(traj, seed: int) -> dict[str, Any]:
    return {
        "seed": seed,
        "final_ecp": _clean(traj.final("ecp")),
        "final_tp": _clean(traj.final("tp")),
        "final_er": _clean(traj.final("er")),
        "final_u_hat": _clean(traj.final("u_hat")),
        "final_deploy_risk": _clean(traj.final("deploy_risk")),
        "final_weighted_risk": _clean(traj.final("weighted_risk")),
        "final_mean_cond_risk": _clean(traj.final("mean_cond_risk")),
        "escalations": int(traj.xi.sum()),
        "gate_accesses": traj.gate_accesses,
        "digest": traj.digest(),
    }


def _aggregate(rows: list[dict[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key in ("final_ecp", "final_tp", "final_er", "final_u_hat",
                "final_deploy_risk", "final_weighted_risk",
                "final_mean_cond_risk"):
        values = [row[key] for row in rows if row[key] is not None]
        out["mean_" + key] = float(np.mean(values)) if values else None
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    config = _load_config_arg(args)
    spec = load_stream_spec(args.spec)
    method = parse_method(args.method)
    seeds = _resolve_seeds(args, config)
    out = _ensure_out(args.out)

    rows = []
    for seed in seeds:
        traj = run_replication(method, config, spec, args.horizon, seed,
                               fixed_wager=args.fixed_wager,
                               hoeff_variant=args.hoeff_variant,
                               emit_wealth_every=args.emit_wealth_every)
        write_trajectory(out / f"trajectory_{method.value}_seed{seed}.csv", traj)
        if traj.wealth_snapshots:
            write_wealth_snapshots(out / f"wealth_{method.value}_seed{seed}.csv",
                                   traj, config.grid.values)
        rows.append(_final_row(traj, seed))

    summary = {
        "command": "simulate",
        "method": method.value,
        "spec": spec_to_dict(spec),
        "horizon": args.horizon,
        "seeds": seeds,
        "config": config_to_dict(config),
        "config_hash": config_digest(config),
        "replications": rows,
        "aggregate": _aggregate(rows),
    }
    write_summary_json(out / "simulate_summary.json", summary)
    print(json.dumps({"command": "simulate", "out": str(out),
                      "replications": len(rows)}, sort_keys=True))
    return EXIT_OK


def cmd_replay(args) -> int:
    config = _load_config_arg(args)
    events = load_trace(args.trace)
    method = parse_method(args.method)
    out = _ensure_out(args.out)

    traj = replay_trace(method, config, events, coin_seed=args.coin_seed,
                        fixed_wager=args.fixed_wager,
                        hoeff_variant=args.hoeff_variant,
                        emit_wealth_every=args.emit_wealth_every)
    write_trajectory(out / f"replay_{method.value}.csv", traj)
    if traj.wealth_snapshots:
        write_wealth_snapshots(out / f"replay_wealth_{method.value}.csv",
                               traj, config.grid.values)
    row = _final_row(traj, traj.seed)
    summary = {
        "command": "replay",
        "method": method.value,
        "trace": str(args.trace),
        "events": len(events),
        "config": config_to_dict(config),
        "config_hash": config_digest(config),
        "result": row,
    }
    write_summary_json(out / "replay_summary.json", summary)
    print(json.dumps({"command": "replay", "out": str(out),
                      "events": len(events),
                      "escalations": row["escalations"],
                      "gate_accesses": row["gate_accesses"]}, sort_keys=True))
    return EXIT_OK


def cmd_mc_safety(args) -> int:
    config = _load_config_arg(args)
    spec = load_stream_spec(args.spec)
    criterion = None if args.criterion == "auto" else args.criterion
    report = mc_safety(args.method, config, spec, args.horizon, args.n_reps,
                       base_seed=args.base_seed, criterion=criterion,
                       workers=_resolve_workers(args.workers),
                       hoeff_variant=args.hoeff_variant,
                       fixed_wager=args.fixed_wager)
    if args.out is not None:
        out = _ensure_out(args.out)
        write_summary_json(out / "mc_safety_summary.json", report)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base_config = _load_config_arg(args)
    spec = load_stream_spec(args.spec)
    method = parse_method(args.method)
    seeds = _resolve_seeds(args, base_config)
    epsilons = [float(part) for part in args.epsilons.split(",") if part]
    out = _ensure_out(args.out)

    cells = []
    for eps in epsilons:
        config = validate_config(dataclasses.replace(base_config, epsilon=eps))
        subdir = _ensure_out(out / f"epsilon_{eps:g}")
        rows = []
        for seed in seeds:
            traj = run_replication(method, config, spec, args.horizon, seed,
                                   hoeff_variant=args.hoeff_variant)
            write_trajectory(subdir / f"trajectory_{method.value}_seed{seed}.csv", traj)
            rows.append(_final_row(traj, seed))
        cells.append({"epsilon": eps, "config_hash": config_digest(config),
                      "replications": rows, "aggregate": _aggregate(rows)})

    summary = {"command": "sweep", "method": method.value,
               "spec": spec_to_dict(spec), "horizon": args.horizon,
               "seeds": seeds, "epsilons": epsilons,
               "base_config": config_to_dict(base_config), "cells": cells}
    write_summary_json(out / "sweep_summary.json", summary)
    print(json.dumps({"command": "sweep", "out": str(out),
                      "epsilons": epsilons}, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _load_config_arg(args)
    spec = load_stream_spec(args.spec)
    seeds = _resolve_seeds(args, config)
    out = _ensure_out(args.out)
    methods = [Method.BPAC, Method.O_NAIVE, Method.IPS_HOEFF]

    per_method: dict[str, dict[str, Any]] = {}
    curve_sums: dict[str, dict[str, np.ndarray]] = {}
    for method in methods:
        rows = []
        sums = {name: np.zeros(args.horizon) for name in ("ecp", "er", "u_hat")}
        for seed in seeds:
            # Same seed split for every method: identical queries, losses,
            # and exploration uniforms, so differences are method-only.
            traj = run_replication(method, config, spec, args.horizon, seed,
                                   hoeff_variant=args.hoeff_variant)
            write_trajectory(out / f"trajectory_{method.value}_seed{seed}.csv", traj)
            for name in sums:
                sums[name] += getattr(traj, name)
            rows.append(_final_row(traj, seed))
        per_method[method.value] = {"replications": rows,
                                    "aggregate": _aggregate(rows)}
        curve_sums[method.value] = sums

    n = len(seeds)
    curve_lines = ["t,method,mean_ecp,mean_er,mean_u_hat"]
    for method in methods:
        sums = curve_sums[method.value]
        for i in range(args.horizon):
            curve_lines.append(
                f"{i + 1},{method.value},{sums['ecp'][i] / n!r},"
                f"{sums['er'][i] / n!r},{sums['u_hat'][i] / n!r}")
    (out / "compare_curves.csv").write_text("\n".join(curve_lines) + "\n")

    summary = {"command": "compare", "spec": spec_to_dict(spec),
               "horizon": args.horizon, "seeds": seeds,
               "config": config_to_dict(config),
               "config_hash": config_digest(config), "methods": per_method}
    write_summary_json(out / "compare_summary.json", summary)
    print(json.dumps({"command": "compare", "out": str(out),
                      "methods": [m.value for m in methods]}, sort_keys=True))
    return EXIT_OK


ABLATE_PRESETS = ("lambda", "rho", "twarm")


def _ablate_variants(preset: str, base: RouterConfig):
    """Named config/kwarg variants for each preset sweep."""
    if preset == "lambda":
        return [("adaptive", base, {}),
                ("fixed_0.05", base, {"fixed_wager": 0.05})]
    if preset == "rho":
        variants = [("two_stage_default",
                     dataclasses.replace(base, schedule=TwoStageSchedule()), {})]
        for rho in (0.05, 0.2, 0.3, 0.7):
            variants.append((f"constant_{rho:g}",
                             dataclasses.replace(base, schedule=ConstantSchedule(rho)),
                             {}))
        return variants
    if preset == "twarm":
        sched = base.schedule if isinstance(base.schedule, TwoStageSchedule) \
            else TwoStageSchedule()
        return [(f"twarm_{tw}",
                 dataclasses.replace(base, schedule=dataclasses.replace(sched, t_warm=tw)),
                 {})
                for tw in (10, 50, 100, 200, 300, 500)]
    raise ValueError(f"unknown ablation preset {preset!r}; expected one of {ABLATE_PRESETS}")


def cmd_ablate(args) -> int:
    base = _load_config_arg(args)
    spec = load_stream_spec(args.spec)
    seeds = _resolve_seeds(args, base)
    out = _ensure_out(args.out)

    variants = []
    for name, config, kwargs in _ablate_variants(args.preset, base):
        config = validate_config(config)
        rows = []
        exceed = 0
        for seed in seeds:
            traj = run_replication(Method.BPAC, config, spec, args.horizon, seed,
                                   **kwargs)
            rows.append(_final_row(traj, seed))
            risky = traj.deploy_risk if spec.is_iid else traj.weighted_risk
            if np.any(risky > config.epsilon):
                exceed += 1
        variants.append({
            "name": name,
            "config": config_to_dict(config),
            "config_hash": config_digest(config),
            "aggregate": _aggregate(rows),
            "violation_fraction": exceed / len(seeds) if seeds else 0.0,
            "replications": rows,
        })

    summary = {"command": "ablate", "preset": args.preset,
               "spec": spec_to_dict(spec), "horizon": args.horizon,
               "seeds": seeds, "variants": variants}
    write_summary_json(out / "ablate_summary.json", summary)
    print(json.dumps({"command": "ablate", "preset": args.preset,
                      "out": str(out),
                      "variants": [v["name"] for v in variants]}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpac",
        description="Streaming risk-controlled router: simulate, replay, study.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, default_out: str | None) -> None:
        p.add_argument("--config", type=Path, default=None,
                       help="router config JSON (defaults apply when omitted)")
        default = Path(default_out) if default_out is not None else None
        p.add_argument("--out", type=Path, default=default,
                       help="output directory")

    def seed_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seeds", default=None,
                       help="comma-separated replication seeds; wins over --n-seeds")
        p.add_argument("--n-seeds", type=int, default=None,
                       help="run seeds base..base+K-1")
        p.add_argument("--base-seed", type=int, default=0)

    def stream_flags(p: argparse.ArgumentParser, default_horizon: int) -> None:
        p.add_argument("--spec", default="uniform_linear",
                       help="built-in stream name or spec JSON path")
        p.add_argument("--horizon", type=int, default=default_horizon)

    def method_flags(p: argparse.ArgumentParser, default: str = "bpac") -> None:
        p.add_argument("--method", default=default,
                       help="bpac, o_naive, or ips_hoeff")
        p.add_argument("--hoeff-variant", default="per_point",
                       help="per_point or union_over_grid")
        p.add_argument("--fixed-wager", type=float, default=None,
                       help="freeze the wager instead of the adaptive rule (engine only)")

    p = sub.add_parser("simulate", help="run a method over a synthetic stream")
    common(p, default_out="runs/simulate")
    stream_flags(p, 1000)
    method_flags(p)
    seed_flags(p)
    p.add_argument("--emit-wealth-every", type=int, default=100,
                   help="log-wealth snapshot cadence; 0 disables")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="run a method over a recorded trace")
    common(p, default_out="runs/replay")
    p.add_argument("--trace", type=Path, required=True, help="trace CSV path")
    method_flags(p)
    p.add_argument("--coin-seed", type=int, default=None,
                   help="seed for exploration coins (default: config seed)")
    p.add_argument("--emit-wealth-every", type=int, default=0)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("mc-safety", help="risk-coverage frequency over replications")
    common(p, default_out=None)
    stream_flags(p, 2000)
    method_flags(p)
    p.add_argument("--n-reps", type=int, default=200)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--criterion", default="auto",
                   help="auto, deployment, or weighted")
    p.add_argument("--workers", type=int, default=None,
                   help="process pool size; BPAC_THREADS caps it")
    p.set_defaults(func=cmd_mc_safety)

    p = sub.add_parser("sweep", help="sensitivity of outcomes to the risk budget")
    common(p, default_out="runs/sweep")
    stream_flags(p, 2000)
    method_flags(p)
    seed_flags(p)
    p.add_argument("--epsilons", default="0.05,0.08,0.1",
                   help="comma-separated risk budgets")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="all methods on shared streams")
    common(p, default_out="runs/compare")
    stream_flags(p, 2000)
    seed_flags(p)
    p.add_argument("--hoeff-variant", default="per_point")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", help="preset design sweeps")
    common(p, default_out="runs/ablate")
    stream_flags(p, 2000)
    seed_flags(p)
    p.add_argument("--preset", required=True,
                   help="lambda, rho, or twarm")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        key = exc.violations[0].key if exc.violations else None
        _emit_error("config", str(exc), key=key, violations=exc.violations)
        return EXIT_INVALID
    except SpecError as exc:
        _emit_error("spec", str(exc), key=exc.key)
        return EXIT_INVALID
    except TraceFormatError as exc:
        key = None if exc.row is None else f"row:{exc.row}"
        _emit_error("trace", str(exc), key=key)
        return EXIT_INVALID
    except UnknownMethod as exc:
        _emit_error("method", str(exc), key="method")
        return EXIT_INVALID
    except FileNotFoundError as exc:
        _emit_error("io", str(exc), key=str(exc.filename))
        return EXIT_INVALID
    except (StreamExhausted, NonStationarySpec, WagerOutOfRange,
            OutOfOrderObservation, LossGateViolation, TokenDivisionByZero) as exc:
        _emit_error("runtime", str(exc))
        return EXIT_RUNTIME
    except ValueError as exc:
        _emit_error("args", str(exc))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
