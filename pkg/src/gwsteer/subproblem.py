"""Conic programs for the convexified steering subproblem and the Wasserstein baseline.

Both programs share the same scaffolding over decision variables
``Sigma_1..Sigma_N``, ``M_0..M_{N-1}``, ``P_0..P_{N-1}``:

* the covariance recursion as scalar equalities on the upper triangle, and
* one block ``[[M_k, P_k], [P_k^T, Sigma_k]] >= 0`` per step.

Quadratic terms are lowered to PSD epigraph blocks (Schur complements), so a
program only needs the PSD cone, equalities and a linear objective. Programs
are modelled with cvxpy; the linearization matrix and the Wasserstein target
are cvxpy parameters so that a program is compiled once and re-solved.
"""

import logging
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import InvalidInputError
from .gaussian import TargetShape, as_symmetric, check_psd
from .system import TransformedPlan, control_energy, propagate_transformed

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"
ACCEPTED = (OPTIMAL, NEAR_OPTIMAL)

FEAS_TOL = 1e-6


def svec(X):
    """Norm-preserving vectorization of a symmetric matrix.

    Lower-triangle entries in column-major order with off-diagonals scaled by
    ``sqrt(2)``, so ``||svec(X)||_2 == ||X||_F``. Works on numpy arrays and on
    cvxpy expressions.
    """
    n = X.shape[0]
    r2 = np.sqrt(2.0)
    entries = [X[i, j] if i == j else r2 * X[i, j] for j in range(n) for i in range(j, n)]
    if isinstance(X, cp.Expression):
        return cp.hstack(entries)
    return np.array(entries, dtype=float)


def _triu(X):
    n = X.shape[0]
    return cp.hstack([X[i, j] for i in range(n) for j in range(i, n)])


def _scalar(x):
    return cp.reshape(x, (1, 1), order="C")


def square_epigraph(s, c):
    """PSD block ``[[s, c], [c, 1]]``: feasible iff ``s >= c**2``."""
    return cp.bmat([[_scalar(s), _scalar(c)], [_scalar(c), np.ones((1, 1))]])


def frobenius_epigraph(u, X):
    """PSD block ``[[u, svec(X)^T], [svec(X), I]]``: feasible iff ``u >= ||X||_F^2``."""
    v = cp.reshape(svec(X), (-1, 1), order="C")
    m = v.shape[0]
    return cp.bmat([[_scalar(u), v.T], [v, np.eye(m)]])


def cross_block(Sa, Y, Sb):
    """PSD block ``[[Sa, Y], [Y^T, Sb]]``; ``max tr Y`` over it is the Bures cross term."""
    return cp.bmat([[Sa, Y], [Y.T, Sb]])


@dataclass
class ConicProgram:
    """A cvxpy problem plus the bookkeeping needed to read back a plan.

    ``psd_blocks`` lists ``(label, size)`` for every PSD constraint and
    ``n_equalities`` counts scalar equality rows.
    """

    kind: str
    problem: cp.Problem
    params: object
    lam: float
    Sigma: list
    M: list
    P: list
    psd_blocks: list
    n_equalities: int
    parameters: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    target: object = None

    @property
    def n_matrix_variables(self):
        return len(self.M) + len(self.P) + len(self.Sigma) - 1

    def set_linearization(self, G):
        """Set the matrix ``G`` of the linear reward ``-16 <G, Sigma_N>``."""
        if self.kind != "gw":
            raise InvalidInputError("only the GW subproblem has a linearization")
        G = check_psd(G, "linearization matrix")
        if G.shape != (self.params.nx, self.params.nx):
            raise InvalidInputError(f"linearization must be {self.params.nx}x{self.params.nx}")
        self.parameters["G"].value = G

    def set_target(self, target):
        if self.kind != "wasserstein":
            raise InvalidInputError("only the Wasserstein program has a target parameter")
        T = _check_pd_target(target, self.params.nx)
        self.parameters["target"].value = T
        self.target = T


def _scaffold(params):
    nx, nu, N = params.nx, params.nu, params.N
    Sigma = [params.Sigma0] + [cp.Variable((nx, nx), symmetric=True, name=f"Sigma_{k}") for k in range(1, N + 1)]
    M = [cp.Variable((nu, nu), symmetric=True, name=f"M_{k}") for k in range(N)]
    P = [cp.Variable((nu, nx), name=f"P_{k}") for k in range(N)]
    constraints, blocks = [], []
    n_eq = 0
    for k in range(N):
        A, B, W = params.A[k], params.B[k], params.W[k]
        rhs = A @ Sigma[k] @ A.T + A @ P[k].T @ B.T + B @ P[k] @ A.T + B @ M[k] @ B.T + W
        constraints.append(_triu(Sigma[k + 1] - rhs) == 0)
        n_eq += nx * (nx + 1) // 2
        constraints.append(cp.bmat([[M[k], P[k]], [P[k].T, Sigma[k]]]) >> 0)
        blocks.append((f"lmi_{k}", nu + nx))
    energy = sum(cp.trace(params.R[k] @ M[k]) for k in range(N))
    return Sigma, M, P, constraints, blocks, n_eq, energy


def build_gw_subproblem(params, target, lam, G=None):
    """Convex majorant of the steering objective linearized at ``G``.

    minimize ``lam * sum tr(R_k M_k) + 4 s + 8 u - 16 <G, Sigma_N>`` with
    ``s >= (tr Sigma_N - tr Sigma_r)^2`` and ``u >= ||Sigma_N||_F^2`` as
    PSD epigraph blocks.
    """
    target = TargetShape.coerce(target)
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    Sigma, M, P, constraints, blocks, n_eq, energy = _scaffold(params)
    nx = params.nx
    SN = Sigma[-1]
    s = cp.Variable(name="s")
    u = cp.Variable(name="u")
    Gp = cp.Parameter((nx, nx), symmetric=True, name="G")
    constraints.append(square_epigraph(s, cp.trace(SN) - target.trace) >> 0)
    blocks.append(("epi_trace", 2))
    constraints.append(frobenius_epigraph(u, SN) >> 0)
    blocks.append(("epi_frobenius", 1 + nx * (nx + 1) // 2))
    objective = lam * energy + 4 * s + 8 * u - 16 * cp.trace(Gp @ SN)
    program = ConicProgram(
        kind="gw",
        problem=cp.Problem(cp.Minimize(objective), constraints),
        params=params,
        lam=float(lam),
        Sigma=Sigma,
        M=M,
        P=P,
        psd_blocks=blocks,
        n_equalities=n_eq,
        parameters={"G": Gp},
        extras={"s": s, "u": u},
        target=target,
    )
    program.set_linearization(np.zeros((nx, nx)) if G is None else G)
    return program


def _check_pd_target(target, nx):
    T = check_psd(target, "target covariance")
    if T.shape != (nx, nx):
        raise InvalidInputError(f"target must be {nx}x{nx}, got {T.shape}")
    if np.linalg.eigvalsh(T)[0] <= 0:
        raise InvalidInputError("Wasserstein target must be positive definite")
    return T


def build_wasserstein_problem(params, target, lam):
    """Steering with a Bures-Wasserstein terminal cost as one SDP.

    minimize ``lam * sum tr(R_k M_k) + tr Sigma_N - 2 tr Y`` subject to
    ``[[Sigma_N, Y], [Y^T, target]] >= 0``. The constant ``tr target`` is
    left out of the solver objective.
    """
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    T = _check_pd_target(target, params.nx)
    Sigma, M, P, constraints, blocks, n_eq, energy = _scaffold(params)
    nx = params.nx
    Y = cp.Variable((nx, nx), name="Y")
    Tp = cp.Parameter((nx, nx), symmetric=True, name="target")
    constraints.append(cross_block(Sigma[-1], Y, Tp) >> 0)
    blocks.append(("cross", 2 * nx))
    objective = lam * energy + cp.trace(Sigma[-1]) - 2 * cp.trace(Y)
    program = ConicProgram(
        kind="wasserstein",
        problem=cp.Problem(cp.Minimize(objective), constraints),
        params=params,
        lam=float(lam),
        Sigma=Sigma,
        M=M,
        P=P,
        psd_blocks=blocks,
        n_equalities=n_eq,
        parameters={"target": Tp},
        extras={"Y": Y},
    )
    program.set_target(T)
    return program


@dataclass
class SubproblemSolution:
    plan: TransformedPlan
    objective_value: float
    status: str
    s: float = None
    u: float = None
    extras: dict = field(default_factory=dict)

    @property
    def accepted(self):
        return self.status in ACCEPTED


def plan_residuals(params, Sigma, M, P):
    """Relative dynamics residual and worst block PSD violation of a raw solver plan."""
    dyn, lmi = 0.0, 0.0
    for k in range(params.N):
        A, B, W = params.A[k], params.B[k], params.W[k]
        rhs = A @ Sigma[k] @ A.T + A @ P[k].T @ B.T + B @ P[k] @ A.T + B @ M[k] @ B.T + W
        dyn = max(dyn, np.linalg.norm(Sigma[k + 1] - rhs, "fro") / (1.0 + np.linalg.norm(Sigma[k + 1], "fro")))
        block = as_symmetric(np.block([[M[k], P[k]], [P[k].T, Sigma[k]]]))
        lmi = max(lmi, -np.linalg.eigvalsh(block)[0] / (1.0 + np.linalg.norm(block, "fro")))
    return dyn, lmi


_STATUS_MAP = {
    cp.OPTIMAL: OPTIMAL,
    cp.OPTIMAL_INACCURATE: NEAR_OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
}


@dataclass
class Backend:
    """Interior-point backend settings and the solve entry point.

    One instance serves one solve at a time; use separate instances for
    concurrent solves.
    """

    solver: str = "CLARABEL"
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    verbose: bool = False

    def solver_options(self):
        if self.solver == "CLARABEL":
            return dict(tol_feas=self.tol_feas, tol_gap_abs=self.tol_gap, tol_gap_rel=self.tol_gap, max_iter=self.max_iter)
        if self.solver == "SCS":
            return dict(eps_abs=self.tol_feas, eps_rel=self.tol_gap, max_iters=max(self.max_iter, 10000))
        return {}

    def solve(self, program):
        return solve_conic(program, self)


def solve_conic(program, backend=None):
    """Solve ``program`` and classify the outcome.

    The solver status is cross-checked against recomputed residuals: a claimed
    optimum whose plan violates the dynamics or block constraints by more than
    ``FEAS_TOL`` is downgraded, never reported as optimal. The returned plan's
    covariances are re-propagated from ``(M, P)`` so they satisfy the
    recursion to machine precision.
    """
    backend = backend or Backend()
    params = program.params
    t0 = time.perf_counter()
    diagnostics = {"solver": backend.solver}
    try:
        program.problem.solve(solver=backend.solver, verbose=backend.verbose, **backend.solver_options())
    except cp.error.SolverError as exc:
        diagnostics["error"] = str(exc)
        diagnostics["solve_time"] = time.perf_counter() - t0
        return SubproblemSolution(None, float("nan"), NUMERICAL_FAILURE, extras=diagnostics)
    diagnostics["solve_time"] = time.perf_counter() - t0
    diagnostics["solver_status"] = program.problem.status
    status = _STATUS_MAP.get(program.problem.status, NUMERICAL_FAILURE)
    if status not in ACCEPTED or program.Sigma[-1].value is None:
        if status == OPTIMAL:
            status = NUMERICAL_FAILURE
        return SubproblemSolution(None, float("nan"), status, extras=diagnostics)

    Sigma = [params.Sigma0] + [as_symmetric(S.value) for S in program.Sigma[1:]]
    M = np.array([as_symmetric(m.value) for m in program.M])
    P = np.array([p.value for p in program.P])
    dyn, lmi = plan_residuals(params, Sigma, M, P)
    diagnostics.update(dynamics_residual=dyn, lmi_violation=lmi)
    worst = max(dyn, lmi)
    if worst > 10 * FEAS_TOL:
        status = NUMERICAL_FAILURE
    elif worst > FEAS_TOL:
        status = NEAR_OPTIMAL
    if status == NEAR_OPTIMAL:
        log.warning("%s solve accepted as near-optimal (residual %.2e, solver status %s)",
                    program.kind, worst, program.problem.status)
    if status == NUMERICAL_FAILURE:
        return SubproblemSolution(None, float("nan"), status, extras=diagnostics)

    plan = TransformedPlan(propagate_transformed(params, M, P), M, P)
    solution = SubproblemSolution(plan, float(program.problem.value), status, extras=diagnostics)
    if program.kind == "gw":
        solution.s = float(program.extras["s"].value)
        solution.u = float(program.extras["u"].value)
    else:
        Y = np.asarray(program.extras["Y"].value)
        solution.extras["Y"] = Y
        solution.extras["trace_Y"] = float(np.trace(Y))
    return solution


def gw_subproblem_objective(plan, params, target, lam, G):
    """Majorant value at ``plan`` with tight epigraphs:
    ``lam E + 4 (tr S_N - tr S_r)^2 + 8 ||S_N||_F^2 - 16 <G, S_N>``."""
    target = TargetShape.coerce(target)
    SN = plan.terminal
    return float(
        lam * control_energy(params, plan.M)
        + 4.0 * (np.trace(SN) - target.trace) ** 2
        + 8.0 * np.sum(SN * SN)
        - 16.0 * np.sum(G * SN)
    )


def max_cross_term(Sa, Sb, backend=None):
    """Maximize ``tr Y`` subject to ``[[Sa, Y], [Y^T, Sb]] >= 0`` by SDP.

    For PSD inputs with one side definite the optimum is
    ``tr (Sa^{1/2} Sb Sa^{1/2})^{1/2}``.
    """
    Sa = check_psd(Sa, "Sa")
    Sb = check_psd(Sb, "Sb")
    if Sa.shape != Sb.shape:
        raise InvalidInputError("dimension mismatch")
    backend = backend or Backend()
    Y = cp.Variable(Sa.shape)
    problem = cp.Problem(cp.Maximize(cp.trace(Y)), [cross_block(Sa, Y, Sb) >> 0])
    problem.solve(solver=backend.solver, **backend.solver_options())
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise InvalidInputError(f"cross-term SDP ended with status {problem.status}")
    return float(problem.value)


def dump_program(program, fh, solver="CLARABEL"):
    """Write the compiled program in a plain sparse text format.

    The data are those handed to the conic solver: minimize ``c^T x`` subject
    to ``A x + s = b`` with ``s`` in a product of cones (zero cone first, then
    PSD cones in scaled lower-triangle form). Lines::

        program <kind> <n_vars> <objective_offset>
        objective <n_vars> j:v ...
        zero <rows> r,j,v ... | r:b ...
        psd <dim> r,j,v ... | r:b ...

    Row indices are local to each block.
    """
    data, _, _ = program.problem.get_problem_data(solver)
    c = np.asarray(data["c"]).ravel()
    A = data["A"].tocsr()
    b = np.asarray(data["b"]).ravel()
    dims = data["dims"]
    offset = float(data.get("offset", 0.0) or 0.0)
    fh.write(f"program {program.kind} {c.size} {offset!r}\n")
    fh.write("objective %d %s\n" % (c.size, " ".join(f"{j}:{float(c[j])!r}" for j in np.flatnonzero(c))))

    def block(kind, size, start, stop):
        sub = A[start:stop].tocoo()
        trip = " ".join(f"{r},{j},{float(v)!r}" for r, j, v in zip(sub.row, sub.col, sub.data))
        rhs = " ".join(f"{r}:{float(b[start + r])!r}" for r in np.flatnonzero(b[start:stop]))
        fh.write(f"{kind} {size} {trip} | {rhs}\n")

    row = 0
    if dims.zero:
        block("zero", dims.zero, row, row + dims.zero)
        row += dims.zero
    if dims.nonneg:
        block("nonneg", dims.nonneg, row, row + dims.nonneg)
        row += dims.nonneg
    for d in dims.psd:
        m = d * (d + 1) // 2
        block("psd", d, row, row + m)
        row += m
    if row != A.shape[0]:
        raise InvalidInputError("program uses cones outside the zero/PSD dump format")


def load_dump(fh):
    """Parse :func:`dump_program` output into ``(c, A, b, cones, offset)`` with dense arrays."""
    lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    head = lines[0].split()
    n = int(head[2])
    offset = float(head[3])
    c = np.zeros(n)
    for tok in lines[1].split()[2:]:
        j, v = tok.split(":")
        c[int(j)] = float(v)
    rows, rhs, cones = [], [], []
    for ln in lines[2:]:
        left, _, right = ln.partition("|")
        parts = left.split()
        kind, size = parts[0], int(parts[1])
        m = size * (size + 1) // 2 if kind == "psd" else size
        Ablk = np.zeros((m, n))
        for tok in parts[2:]:
            r, j, v = tok.split(",")
            Ablk[int(r), int(j)] = float(v)
        bblk = np.zeros(m)
        for tok in right.split():
            r, v = tok.split(":")
            bblk[int(r)] = float(v)
        rows.append(Ablk)
        rhs.append(bblk)
        cones.append((kind, size))
    return c, np.vstack(rows), np.concatenate(rhs), cones, offset
