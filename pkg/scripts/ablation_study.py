#!/usr/bin/env python3
"""Drive the preset ablations and print compact result tables.

Thin wrapper over the ablate subcommand; see `bpac ablate --help` for
the underlying flags. Presets: lambda (adaptive vs frozen wager), rho
(exploration schedules), twarm (warmup length).
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from bpac.cli import main as bpac_main


def run_preset(preset: str, horizon: int, n_seeds: int, spec: str,
               out_root: Path) -> dict:
    out = out_root / preset
    code = bpac_main(["ablate", "--preset", preset, "--horizon", str(horizon),
                      "--n-seeds", str(n_seeds), "--spec", spec,
                      "--out", str(out)])
    if code != 0:
        sys.exit(code)
    return json.loads((out / "ablate_summary.json").read_text())


def main() -> None:
    p = argparse.ArgumentParser(description="Preset design ablations")
    p.add_argument("--presets", default="lambda,rho,twarm")
    p.add_argument("--spec", default="uniform_linear")
    p.add_argument("--horizon", type=int, default=2000)
    p.add_argument("--n-seeds", type=int, default=20)
    p.add_argument("--out", type=Path, default=None,
                   help="keep outputs here instead of a temp dir")
    args = p.parse_args()

    out_root = args.out or Path(tempfile.mkdtemp(prefix="bpac_ablate_"))
    out_root.mkdir(parents=True, exist_ok=True)

    for preset in args.presets.split(","):
        summary = run_preset(preset, args.horizon, args.n_seeds, args.spec,
                             out_root)
        print(f"\npreset={preset} spec={args.spec} T={args.horizon} "
              f"seeds={args.n_seeds}")
        print(f"{'variant':<20} {'ecp':>7} {'er':>7} {'u_hat':>7} {'viol':>6}")
        for variant in summary["variants"]:
            agg = variant["aggregate"]
            ecp = agg["mean_final_ecp"]
            er = agg["mean_final_er"]
            u = agg["mean_final_u_hat"]
            print(f"{variant['name']:<20} "
                  f"{ecp if ecp is None else f'{ecp:.3f}':>7} "
                  f"{er if er is None else f'{er:.3f}':>7} "
                  f"{u if u is None else f'{u:.3f}':>7} "
                  f"{variant['violation_fraction']:>6.2f}")
    print(f"\noutputs under {out_root}")


if __name__ == "__main__":
    main()
