#!/usr/bin/env python3
"""Risk-coverage study across methods.

Runs the Monte Carlo safety harness for each requested method on one
stream spec and prints a violation-frequency table with Wilson
intervals. The engine should sit near or below alpha; the naive
baseline should blow through it.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path

from bpac.core import Prior, RouterConfig, SelectionMode, load_config, validate_config
from bpac.records import write_summary_json
from bpac.simulation import load_stream_spec, mc_safety


def main() -> None:
    p = argparse.ArgumentParser(description="Violation frequency per method")
    p.add_argument("--spec", default="uniform_linear")
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--n-reps", type=int, default=200)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--methods", default="bpac,o_naive,ips_hoeff")
    p.add_argument("--mixture", action="store_true",
                   help="run the engine in mixture mode with a uniform prior")
    p.add_argument("--criterion", default="auto",
                   help="auto, deployment, or weighted")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=None,
                   help="also write the reports as JSON here")
    args = p.parse_args()

    config = validate_config(load_config(args.config) if args.config else RouterConfig())
    if args.mixture:
        config = validate_config(dataclasses.replace(
            config, selection_mode=SelectionMode.MIXTURE,
            prior=Prior.uniform(config.grid.n)))
    spec = load_stream_spec(args.spec)
    criterion = None if args.criterion == "auto" else args.criterion

    reports = []
    print(f"spec={spec.name} T={args.horizon} n={args.n_reps} "
          f"eps={config.epsilon} alpha={config.alpha}")
    print(f"{'method':<12} {'criterion':<11} {'freq':>7} {'95% Wilson':>18}")
    for method in args.methods.split(","):
        rep = mc_safety(method, config, spec, args.horizon, args.n_reps,
                        base_seed=args.base_seed, criterion=criterion,
                        workers=args.workers)
        reports.append(rep)
        print(f"{rep['method']:<12} {rep['criterion']:<11} "
              f"{rep['frequency']:>7.3f} "
              f"[{rep['ci_low']:.3f}, {rep['ci_high']:.3f}]".rjust(18))

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_summary_json(args.out / "safety_study.json",
                           {"reports": reports})
        print(f"wrote {args.out / 'safety_study.json'}")


if __name__ == "__main__":
    main()
