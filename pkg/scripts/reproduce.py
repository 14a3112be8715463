"""Headline numbers for the planar example in one run.

Uncontrolled GGW^2, the lambda = 1 DCA solution and its rotation angle, the
Wasserstein theta sweep and its argmin, and the line-target reduction.

    python3 scripts/reproduce.py [--grid 64]
"""

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from gwsteer import compare_gw_vs_wasserstein, files, ggw_squared, solve_gw_steering, sweep_lambda
from gwsteer.baseline import nonconvexity_witness
from gwsteer.system import uncontrolled_plan

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--out", default=str(ROOT / "runs" / "reproduce"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    t0 = time.perf_counter()

    ellipse = files.load_problem(ROOT / "problems" / "ellipse.json")
    line = files.load_problem(ROOT / "problems" / "line.json")
    params = ellipse.params
    summary = {}

    summary["uncontrolled_ggw_squared"] = ggw_squared(uncontrolled_plan(params).terminal, ellipse.target.sigma)
    report = compare_gw_vs_wasserstein(params, ellipse.target, 1.0, grid=args.grid, config=ellipse.config)
    summary.update(theta_gw=report.theta_gw, theta_star=report.theta_star, angle_gap=report.angle_gap,
                   gw_energy=report.gw_energy, gw_ggw_squared=report.gw_ggw_squared, w_opt_star=report.w_opt_star,
                   wasserstein_solves=report.wasserstein_solves, gw_subproblem_solves=report.gw_subproblem_solves)
    witness = nonconvexity_witness(report.sweep.energies)
    summary["w_opt_nonconvex"] = witness is not None

    table = sweep_lambda(params, ellipse.target, [1.0, 100.0, 10000.0], ellipse.config)
    summary["lambda_sweep"] = [{"lambda": r.value, "energy": r.energy, "ggw_squared": r.terminal_cost} for r in table.rows]

    before = ggw_squared(uncontrolled_plan(line.params).terminal, line.target.sigma)
    after = solve_gw_steering(line.params, line.target, line.lam, line.config).ggw_squared
    summary["line_target"] = {"uncontrolled": before, "optimized": after, "ratio": after / before}
    summary["seconds"] = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files.dump_json(summary, out / "summary.json")
    with open(out / "sweep_theta.csv", "w") as fh:
        report.sweep.to_csv(fh)
    with open(out / "sweep_lambda.csv", "w") as fh:
        table.to_csv(fh)
    print(json.dumps(summary, indent=2, default=lambda x: float(x) if isinstance(x, np.floating) else x))


if __name__ == "__main__":
    main()
