"""Wasserstein-terminal-cost baseline and the experiment sweeps built on it.

``sweep_theta`` computes the energy ``W_opt(theta)`` needed to reach each
rotation of a planar target under a small lambda, ``sweep_lambda`` traces
the energy / shape trade-off of the GW problem, and
``compare_gw_vs_wasserstein`` checks that the single GW solve lands on the
rotation that the Wasserstein sweep finds by brute force.
"""

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .dca import DCAConfig, solve_gw_steering
from .errors import DegenerateShapeError, InvalidInputError, SolverFailure
from .files import problem_hash
from .gaussian import (
    GAP_RTOL,
    TargetShape,
    angle_distance,
    rotate_covariance,
    wasserstein2_squared,
)
from .subproblem import ACCEPTED, NEAR_OPTIMAL, NUMERICAL_FAILURE, OPTIMAL, Backend, build_wasserstein_problem, solve_conic
from .system import control_energy, recover_policy

log = logging.getLogger(__name__)

THETA_LAMBDA = 1e-3
THETA_GRID = 64
THETA_XTOL = 1e-3
W2_ACCEPT_RTOL = 1e-3
MAX_HALVINGS = 6
MONOTONE_RTOL = 1e-4

def n_workers():
    """Worker processes for row-parallel sweeps, from ``GWSTEER_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GWSTEER_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class WassersteinResult:
    plan: object
    policy: object
    energy: float
    w2: float
    status: str
    lam: float


def solve_wasserstein_steering(params, target, lam, backend=None, program=None):
    """Single SDP solve of the Wasserstein-terminal-cost steering problem.

    The returned ``w2`` is recomputed in closed form at the optimal terminal
    covariance. ``program`` may be a previously built program for the same
    ``(params, lam)``; its target parameter is overwritten.
    """
    backend = backend or Backend()
    if program is None:
        program = build_wasserstein_problem(params, target, lam)
    else:
        program.set_target(target)
    sol = solve_conic(program, backend)
    if sol.status not in ACCEPTED:
        raise SolverFailure(f"Wasserstein solve ended with status {sol.status}", sol.status, sol.extras)
    T = program.target
    return WassersteinResult(
        plan=sol.plan,
        policy=recover_policy(sol.plan),
        energy=control_energy(params, sol.plan.M),
        w2=wasserstein2_squared(sol.plan.terminal, T),
        status=sol.status,
        lam=float(lam),
    )


@dataclass
class SweepRow:
    value: float
    energy: float
    terminal_cost: float
    status: str
    wall_time: float
    extra: dict = field(default_factory=dict)


@dataclass
class SweepTable:
    """Rows sorted by the swept parameter, plus metadata for the CSV header."""

    parameter: str
    unit: str
    terminal_cost_name: str
    terminal_cost_unit: str
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.value)

    @property
    def values(self):
        return np.array([r.value for r in self.rows])

    @property
    def energies(self):
        return np.array([r.energy for r in self.rows])

    @property
    def terminal_costs(self):
        return np.array([r.terminal_cost for r in self.rows])

    @property
    def publishable(self):
        return all(r.status in ACCEPTED for r in self.rows)

    def argmin(self):
        ok = [i for i, r in enumerate(self.rows) if r.status in ACCEPTED]
        if not ok:
            raise SolverFailure("no successful rows in sweep")
        i = min(ok, key=lambda i: self.rows[i].energy)
        return i, self.rows[i]

    def to_csv(self, fh):
        extra_keys = sorted({k for r in self.rows for k in r.extra})
        fh.write("# gwsteer sweep table, schema_version 1\n")
        fh.write(f"# parameter: {self.parameter} [{self.unit}]\n")
        fh.write("# energy: sum_k E[u_k^T R_k u_k], unweighted by lambda [input units^2]\n")
        fh.write(f"# terminal_cost: {self.terminal_cost_name} [{self.terminal_cost_unit}]\n")
        fh.write("# wall_time_s: seconds\n")
        for key in sorted(self.metadata):
            fh.write(f"# {key}: {self.metadata[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"{self.parameter}", "energy", "terminal_cost", "status", "wall_time_s"] + extra_keys)
        for r in self.rows:
            writer.writerow(
                [repr(float(r.value)), repr(float(r.energy)), repr(float(r.terminal_cost)), r.status, f"{r.wall_time:.6f}"]
                + [r.extra.get(k, "") for k in extra_keys]
            )


class _ThetaSolver:
    """Caches one compiled Wasserstein program per lambda; one instance per worker process."""

    def __init__(self, params, base, lam, backend):
        self.params = params
        self.base = base
        self.lam = lam
        self.backend = backend
        self.programs = {}
        self.solves = 0

    def _program(self, lam, target):
        if lam not in self.programs:
            self.programs[lam] = build_wasserstein_problem(self.params, target, lam)
        return self.programs[lam]

    def row(self, theta):
        theta = float(np.mod(theta, np.pi))
        target = rotate_covariance(self.base, theta)
        lam = self.lam
        t0 = time.perf_counter()
        res = None
        try:
            for _ in range(MAX_HALVINGS + 1):
                res = solve_wasserstein_steering(self.params, target, lam, self.backend, self._program(lam, target))
                self.solves += 1
                if res.w2 <= W2_ACCEPT_RTOL * np.trace(target):
                    break
                lam /= 2.0
        except SolverFailure as exc:
            self.solves += 1
            return SweepRow(theta, float("nan"), float("nan"), exc.status or NUMERICAL_FAILURE,
                            time.perf_counter() - t0, {"lambda_used": lam})
        reached = bool(res.w2 <= W2_ACCEPT_RTOL * np.trace(target))
        if not reached:
            log.info("theta=%.4f: W^2=%.3g still above %.3g after %d halvings", theta, res.w2,
                     W2_ACCEPT_RTOL * np.trace(target), MAX_HALVINGS)
        return SweepRow(theta, res.energy, res.w2, res.status, time.perf_counter() - t0,
                        {"lambda_used": res.lam, "w2_reached": reached})

    def energy(self, theta):
        r = self.row(theta)
        if r.status not in ACCEPTED:
            raise SolverFailure(f"refinement solve failed at theta={theta}", r.status)
        return r.energy


def _planar_target(params, target):
    if params.nx != 2:
        raise InvalidInputError("the theta sweep is defined for planar systems (nx = 2)")
    T = TargetShape.coerce(target).embedded(2)
    if np.linalg.eigvalsh(T)[0] <= 0:
        raise InvalidInputError("theta sweep target must be positive definite")
    return T


def _theta_chunk(params, base, lam, backend, chunk):
    solver = _ThetaSolver(params, base, lam, Backend(**asdict(backend)))
    return [solver.row(t) for t in chunk], solver.solves


def theta_grid(n=THETA_GRID):
    return np.arange(n) * (np.pi / n)


def sweep_theta(params, target, lam=THETA_LAMBDA, grid=None, refine=True, backend=None, workers=None):
    """Tabulate ``W_opt(theta)``: energy to reach ``rotate_covariance(target, theta)``.

    Each row starts at ``lam`` and halves it (at most ``MAX_HALVINGS`` times)
    until the terminal Wasserstein cost is below ``1e-3 * tr(target)``. With
    ``refine`` the grid argmin is polished by a bounded scalar minimization
    (golden-section with parabolic steps) on its bracketing interval; the
    result lands in ``metadata['theta_star']``. Rows whose target stays out
    of reach after the halvings keep their solver status and are flagged
    ``w2_reached=False``.
    """
    base = _planar_target(params, target)
    grid = theta_grid() if grid is None else (theta_grid(grid) if np.isscalar(grid) else np.asarray(grid, float))
    if grid.size == 0:
        raise InvalidInputError("theta grid is empty")
    backend = backend or Backend()
    workers = workers or n_workers()

    chunks = [c for c in np.array_split(grid, workers) if c.size]
    if len(chunks) == 1:
        results = [_theta_chunk(params, base, lam, backend, chunks[0])]
    else:
        # processes, not threads: cvxpy keeps its DPP scope flag in a module global
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(_theta_chunk, *zip(*[(params, base, lam, backend, c) for c in chunks])))
    rows = [r for rs, _ in results for r in rs]
    solves = sum(n for _, n in results)
    for r in rows:
        if r.status not in ACCEPTED:
            log.warning("theta sweep row %.4f failed with status %s", r.value, r.status)

    table = SweepTable("theta_rad", "rad", "W2^2 (Bures-Wasserstein squared, closed form)",
                       "state units^2", rows)
    table.metadata.update(
        problem_hash=problem_hash(params, base),
        lambda_start=lam,
        grid_size=int(grid.size),
        rows_w2_reached=sum(bool(r.extra.get("w2_reached")) for r in rows),
    )
    i, best = table.argmin()
    theta_star, w_star = best.value, best.energy
    if refine and len(table.rows) >= 3:
        n = len(table.rows)
        vals = table.values
        lo = vals[i - 1] if i > 0 else vals[-1] - np.pi
        hi = vals[i + 1] if i < n - 1 else vals[0] + np.pi
        solver = _ThetaSolver(params, base, lam, Backend(**asdict(backend)))
        opt = minimize_scalar(solver.energy, bounds=(lo, hi), method="bounded", options={"xatol": THETA_XTOL})
        x, fx = float(opt.x), float(opt.fun)
        solves += solver.solves
        if fx < w_star:
            theta_star, w_star = float(np.mod(x, np.pi)), fx
    table.metadata.update(theta_star=theta_star, w_opt_star=w_star, solves=solves)
    return table


def interior_local_maxima(values):
    """Indices ``i`` (not the endpoints) with ``v[i-1] < v[i] > v[i+1]``."""
    v = np.asarray(values, dtype=float)
    return [i for i in range(1, v.size - 1) if v[i] > v[i - 1] and v[i] > v[i + 1]]


def nonconvexity_witness(values):
    """``(left, peak, right)`` indices of an interior local maximum with a lower point on each side, or None.

    A convex function on an interval has no interior strict local maximum, so
    any such triple certifies non-convexity of the sampled curve. Among the
    candidates the most prominent peak (largest drop to the lower of its two
    side minima) is returned.
    """
    v = np.asarray(values, dtype=float)
    best, best_drop = None, 0.0
    for i in interior_local_maxima(v):
        left, right = int(np.argmin(v[:i])), i + 1 + int(np.argmin(v[i + 1 :]))
        drop = min(v[i] - v[left], v[i] - v[right])
        if drop > best_drop:
            best, best_drop = (left, i, right), drop
    return best


def _lambda_row(params, target, lam, config):
    t0 = time.perf_counter()
    cfg = DCAConfig(config.max_iters, config.tol_abs, config.tol_rel, config.init_strategy, Backend(**asdict(config.backend)))
    try:
        res = solve_gw_steering(params, target, lam, cfg)
    except SolverFailure as exc:
        return SweepRow(lam, float("nan"), float("nan"), exc.status or NUMERICAL_FAILURE, time.perf_counter() - t0)
    extra = {"iterations": res.iterations, "converged": res.converged,
             "theta_gw": "" if res.theta_gw is None else repr(res.theta_gw)}
    status = NEAR_OPTIMAL if any(r.status != OPTIMAL for r in res.records) else OPTIMAL
    return SweepRow(lam, res.energy, res.ggw_squared, status, time.perf_counter() - t0, extra)


def sweep_lambda(params, target, lams, config=None, workers=None):
    """One DCA solve per lambda; rows hold unweighted energy and full GGW^2."""
    lams = [float(x) for x in lams]
    if not lams or any(x <= 0 for x in lams) or len(set(lams)) != len(lams):
        raise InvalidInputError("lambda values must be positive and distinct")
    config = config or DCAConfig()
    target = TargetShape.coerce(target)

    workers = workers or n_workers()
    if workers == 1:
        rows = [_lambda_row(params, target, x, config) for x in lams]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_lambda_row, *zip(*[(params, target, x, config) for x in lams])))
    table = SweepTable("lambda", "dimensionless", "GGW^2 (Gaussian Gromov-Wasserstein squared)",
                       "state units^4", rows)
    table.metadata["problem_hash"] = problem_hash(params, target.sigma)
    violations = monotonicity_violations(table)
    table.metadata["monotonicity_violations"] = len(violations)
    for v in violations:
        log.warning("lambda sweep monotonicity violated: %s", v)
    return table


def monotonicity_violations(table, rtol=MONOTONE_RTOL):
    """Pairs of consecutive rows where energy rises or GGW^2 falls as lambda grows."""
    out = []
    rows = [r for r in table.rows if r.status in ACCEPTED]
    for a, b in zip(rows, rows[1:]):
        if a.energy < b.energy - rtol * (1 + abs(b.energy)):
            out.append(("energy", a.value, b.value, a.energy, b.energy))
        if a.terminal_cost > b.terminal_cost + rtol * (1 + abs(b.terminal_cost)):
            out.append(("ggw_squared", a.value, b.value, a.terminal_cost, b.terminal_cost))
    return out


@dataclass
class ComparisonReport:
    comparable: bool
    theta_gw: float = None
    theta_star: float = None
    angle_gap: float = None
    w_opt_star: float = None
    gw_energy: float = None
    gw_ggw_squared: float = None
    gw_problems_solved: int = 1
    gw_subproblem_solves: int = 0
    wasserstein_solves: int = 0
    grid_size: int = 0
    reason: str = ""
    sweep: object = None

    def to_dict(self):
        d = asdict(self)
        d.pop("sweep")
        return d


def compare_gw_vs_wasserstein(params, target, lam, grid=None, theta_lam=THETA_LAMBDA, config=None, backend=None):
    """Run the GW problem once and the Wasserstein theta sweep; compare the angles."""
    if params.nx != 2:
        raise InvalidInputError("comparison is defined for planar systems (nx = 2)")
    target = TargetShape.coerce(target)
    evals = target.eigenvalues(2)
    if evals[0] - evals[1] <= GAP_RTOL * max(evals.sum(), np.finfo(float).tiny):
        return ComparisonReport(False, reason="isotropic target: rotation angle undefined")
    gw = solve_gw_steering(params, target, lam, config)
    report = ComparisonReport(
        comparable=gw.theta_gw is not None,
        theta_gw=gw.theta_gw,
        gw_energy=gw.energy,
        gw_ggw_squared=gw.ggw_squared,
        gw_subproblem_solves=gw.iterations,
    )
    if gw.theta_gw is None:
        report.reason = "GW terminal covariance is isotropic: rotation angle undefined"
        return report
    try:
        table = sweep_theta(params, target.embedded(2), theta_lam, grid, backend=backend)
    except DegenerateShapeError as exc:
        report.comparable = False
        report.reason = str(exc)
        return report
    report.sweep = table
    report.theta_star = table.metadata["theta_star"]
    report.w_opt_star = table.metadata["w_opt_star"]
    report.angle_gap = angle_distance(report.theta_gw, report.theta_star)
    report.wasserstein_solves = table.metadata["solves"]
    report.grid_size = table.metadata["grid_size"]
    return report
