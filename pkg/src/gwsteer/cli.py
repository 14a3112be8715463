"""Command-line entry point: ``gwsteer {solve,uncontrolled,rollout,sweep,compare}``.

Exit codes: 0 success, 2 unreadable or invalid input, 3 solver failure.
Every JSON output carries ``schema_version``; wall-clock numbers live under
``timings`` and are the only non-deterministic content.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import baseline, files
from .dca import solve_gw_steering
from .errors import InvalidInputError, SingularCovarianceError, SolverFailure
from .gaussian import ggw_squared
from .system import (
    Policy,
    covariance_standard_error,
    empirical_covariance,
    empirical_energy,
    propagate_policy,
    rollout,
    uncontrolled_plan,
)

log = logging.getLogger("gwsteer")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


class InputError(Exception):
    """Bad command-line input (maps to exit code 2)."""


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _policy_doc(policy):
    return {"K": [files.tolist(K) for K in policy.K], "Q": [files.tolist(Q) for Q in policy.Q]}


def _base_doc(kind, problem, **flags):
    return {
        "schema_version": files.SCHEMA_VERSION,
        "kind": kind,
        "inputs_hash": files.canonical_hash({"problem": problem.raw, "flags": flags}),
    }


def cmd_solve(args):
    problem = files.load_problem(args.problem)
    lam = problem.lam if args.lam is None else args.lam
    if not lam > 0:
        raise InputError("--lambda must be positive")
    t0 = time.perf_counter()
    result = solve_gw_steering(problem.params, problem.target, lam, problem.config)
    elapsed = time.perf_counter() - t0
    doc = _base_doc("solve", problem, lam=lam)
    doc.update(
        {
            "lambda": lam,
            "policy": _policy_doc(result.policy),
            "covariance_trajectory": [files.tolist(S) for S in result.plan.Sigma],
            "M": [files.tolist(M) for M in result.plan.M],
            "P": [files.tolist(P) for P in result.plan.P],
            "energy": result.energy,
            "ggw_squared": result.ggw_squared,
            "J": result.J,
            "theta_gw": result.theta_gw,
            "objective_history": [float(j) for j in result.objective_history],
            "iterations": result.iterations,
            "converged": result.converged,
            "warnings": [] if result.converged else ["max_iters reached before the stopping tolerance"],
            "timings": {"total_s": elapsed},
        }
    )
    out = _outdir(args.out)
    files.dump_json(doc, out / "result.json")
    files.write_trajectory_csv(result.plan.Sigma, out / "trajectory.csv")
    theta = "n/a" if result.theta_gw is None else f"{result.theta_gw:.4f} rad"
    print(f"J={result.J:.6g} energy={result.energy:.6g} ggw^2={result.ggw_squared:.6g} "
          f"theta_gw={theta} iterations={result.iterations} converged={result.converged}")
    return EXIT_OK


def cmd_uncontrolled(args):
    problem = files.load_problem(args.problem)
    t0 = time.perf_counter()
    plan = uncontrolled_plan(problem.params)
    ggw = ggw_squared(plan.terminal, problem.target.sigma)
    doc = _base_doc("uncontrolled", problem)
    doc.update(
        {
            "policy": _policy_doc(Policy.zero(problem.params)),
            "covariance_trajectory": [files.tolist(S) for S in plan.Sigma],
            "energy": 0.0,
            "ggw_squared": ggw,
            "timings": {"total_s": time.perf_counter() - t0},
        }
    )
    out = _outdir(args.out)
    files.dump_json(doc, out / "uncontrolled.json")
    files.write_trajectory_csv(plan.Sigma, out / "trajectory.csv")
    print(f"uncontrolled ggw^2={ggw:.6f}")
    return EXIT_OK


def _load_policy(path, params):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read policy file {path}: {exc}") from None
    K, Q = files.policy_from_json(doc)
    policy = Policy(K, Q)
    if policy.K.shape != (params.N, params.nu, params.nx):
        raise InputError(f"policy in {path} does not match the problem dimensions")
    return policy


def cmd_rollout(args):
    problem = files.load_problem(args.problem)
    params = problem.params
    if args.uncontrolled:
        policy, source = Policy.zero(params), "uncontrolled"
    elif args.policy:
        policy, source = _load_policy(args.policy, params), str(args.policy)
    else:
        raise InputError("rollout needs --policy RESULT_JSON or --uncontrolled")
    seed = problem.seed if args.seed is None else args.seed
    if args.samples < 2:
        raise InputError("--samples must be at least 2")
    t0 = time.perf_counter()
    batch = rollout(params, policy, args.samples, seed)
    predicted = propagate_policy(params, policy)[-1]
    empirical = empirical_covariance(batch, params.N)
    se = covariance_standard_error(predicted) / np.sqrt(args.samples - 1)
    z = np.abs(empirical - predicted) / np.where(se > 0, se, np.inf)
    energy_pred = float(sum(np.trace(params.R[k] @ (policy.K[k] @ S @ policy.K[k].T + policy.Q[k]))
                            for k, S in enumerate(propagate_policy(params, policy)[:-1])))
    out = _outdir(args.out)
    with open(out / "paths.csv", "w") as fh:
        fh.write("sample,k," + ",".join(f"x{i}" for i in range(params.nx)) + "\n")
        for n in range(batch.n_samples):
            for k in range(params.N + 1):
                fh.write(f"{n},{k}," + ",".join(repr(float(x)) for x in batch.samples[n, k]) + "\n")
    doc = _base_doc("rollout", problem, seed=seed, samples=args.samples, policy=source)
    doc.update(
        {
            "n_samples": args.samples,
            "seed": seed,
            "policy_source": source,
            "predicted_terminal_covariance": files.tolist(predicted),
            "empirical_terminal_covariance": files.tolist(empirical),
            "max_abs_discrepancy": float(np.abs(empirical - predicted).max()),
            "max_standard_errors": float(z.max()),
            "within_5_standard_errors": bool(z.max() <= 5.0),
            "predicted_energy": energy_pred,
            "empirical_energy": empirical_energy(params, batch),
            "timings": {"total_s": time.perf_counter() - t0},
        }
    )
    files.dump_json(doc, out / "rollout_summary.json")
    print(f"empirical vs predicted terminal covariance: max |diff|={doc['max_abs_discrepancy']:.4g} "
          f"({doc['max_standard_errors']:.2f} standard errors)")
    return EXIT_OK


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list {text!r}") from None


def cmd_sweep(args):
    problem = files.load_problem(args.problem)
    out = _outdir(args.out)
    if args.mode == "lambda":
        lams = _floats(args.values) if args.values else [1.0, 100.0, 10000.0]
        table = baseline.sweep_lambda(problem.params, problem.target, lams, problem.config)
    else:
        grid = _floats(args.values) if args.values else args.grid
        lam = args.lam if args.lam is not None else baseline.THETA_LAMBDA
        table = baseline.sweep_theta(problem.params, problem.target.sigma, lam, grid, refine=not args.no_refine,
                                     backend=problem.config.backend)
    table.metadata["inputs_hash"] = problem.inputs_hash
    with open(out / f"sweep_{args.mode}.csv", "w") as fh:
        table.to_csv(fh)
    failed = [r for r in table.rows if r.status not in baseline.ACCEPTED]
    for r in failed:
        print(f"warning: row {r.value!r} failed with status {r.status}", file=sys.stderr)
    print(f"{len(table.rows) - len(failed)}/{len(table.rows)} rows solved; wrote {out / f'sweep_{args.mode}.csv'}")
    if "theta_star" in table.metadata:
        print(f"theta* = {table.metadata['theta_star']:.4f} rad, W_opt(theta*) = {table.metadata['w_opt_star']:.6g}")
    return EXIT_SOLVER if len(failed) == len(table.rows) else EXIT_OK


def cmd_compare(args):
    problem = files.load_problem(args.problem)
    out = _outdir(args.out)
    t0 = time.perf_counter()
    report = baseline.compare_gw_vs_wasserstein(
        problem.params, problem.target, problem.lam, grid=args.grid, config=problem.config,
        backend=problem.config.backend,
    )
    doc = _base_doc("compare", problem, grid=args.grid)
    doc.update(report.to_dict())
    doc["timings"] = {"total_s": time.perf_counter() - t0}
    files.dump_json(doc, out / "compare.json")
    if report.sweep is not None:
        with open(out / "sweep_theta.csv", "w") as fh:
            report.sweep.to_csv(fh)
    if report.comparable:
        print(f"theta_gw={report.theta_gw:.4f} theta*={report.theta_star:.4f} gap={report.angle_gap:.4f} rad; "
              f"solves: GW 1 problem ({report.gw_subproblem_solves} SDPs) vs Wasserstein {report.wasserstein_solves} SDPs")
    else:
        print(f"incomparable: {report.reason}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gwsteer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="DCA solve of the GW steering problem")
    p.add_argument("problem")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override solver.lambda")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("uncontrolled", help="covariance propagation with zero input")
    p.add_argument("problem")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_uncontrolled)

    p = sub.add_parser("rollout", help="Monte Carlo sample paths under a policy")
    p.add_argument("problem")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=None, help="defaults to the problem file's seed")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--policy", help="result.json written by 'solve'")
    group.add_argument("--uncontrolled", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("sweep", help="lambda trade-off or Wasserstein theta sweep")
    p.add_argument("problem")
    p.add_argument("--mode", choices=("lambda", "theta"), required=True)
    p.add_argument("--values", help="comma-separated lambda or theta values")
    p.add_argument("--grid", type=int, default=baseline.THETA_GRID, help="theta grid size over [0, pi)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="starting lambda for the theta sweep")
    p.add_argument("--no-refine", action="store_true", help="skip the refinement of theta*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="GW rotation angle vs. Wasserstein theta sweep")
    p.add_argument("problem")
    p.add_argument("--grid", type=int, default=baseline.THETA_GRID)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverFailure, SingularCovarianceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
