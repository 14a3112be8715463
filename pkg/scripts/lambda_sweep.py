"""Energy / shape trade-off of the GW steering problem over a range of lambda.

    python3 scripts/lambda_sweep.py problems/ellipse.json --values 1,10,100,1000,10000 --out runs/lambda
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from gwsteer import files, sweep_lambda


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem")
    ap.add_argument("--values", default="1,10,100,1000,10000")
    ap.add_argument("--out", default="runs/lambda")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    problem = files.load_problem(args.problem)
    lams = [float(x) for x in args.values.split(",")]
    table = sweep_lambda(problem.params, problem.target, lams, problem.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep_lambda.csv", "w") as fh:
        table.to_csv(fh)

    print(f"{'lambda':>10} {'energy':>12} {'GGW^2':>12} {'theta_gw':>9} {'iters':>6}")
    for r in table.rows:
        theta = r.extra.get("theta_gw") or "n/a"
        theta = f"{float(theta):.4f}" if theta != "n/a" else theta
        print(f"{r.value:>10g} {r.energy:>12.5g} {r.terminal_cost:>12.5g} {theta:>9} {r.extra.get('iterations', ''):>6}")
    ok = np.all(np.diff(table.energies) <= 0) and np.all(np.diff(table.terminal_costs) >= 0)
    print(f"monotone trade-off: {bool(ok)}")


if __name__ == "__main__":
    main()
