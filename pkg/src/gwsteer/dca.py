"""DC algorithm for covariance steering with a Gaussian Gromov-Wasserstein terminal cost.

The objective over transformed plans is

    J = lam * sum tr(R_k M_k) + 4 (tr S_N - tr S_r)^2 + 8 ||S_N||_F^2 - 16 g(S_N)

with ``g(S) = tr(D_N D_r)`` convex. Each iteration replaces ``g`` by its
linearization ``<G, S_N>`` at the current terminal covariance, where
``G = V_N D_r V_N^T``, and solves the resulting SDP. Because
``g(S) >= <G, S>`` everywhere, each SDP objective upper-bounds ``J`` and the
iterates descend.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AbortedRunError, DegenerateShapeError, InvalidInputError
from .gaussian import TargetShape, ggw_squared, gw_alignment_gain, principal_angle, sorted_eigendecomposition
from .subproblem import ACCEPTED, Backend, build_gw_subproblem, solve_conic
from .system import control_energy, recover_policy, uncontrolled_plan

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("uncontrolled_spectrum", "identity")


@dataclass
class DCAConfig:
    """Outer-loop settings.

    ``init_strategy`` is ``"uncontrolled_spectrum"``, ``"identity"`` or an
    orthogonal matrix whose columns are used as the initial eigenvectors.
    The loop stops once ``|J_{n+1} - J_n| <= tol_abs + tol_rel |J_n|``.
    """

    max_iters: int = 50
    tol_abs: float = 1e-7
    tol_rel: float = 1e-6
    init_strategy: object = "uncontrolled_spectrum"
    backend: Backend = field(default_factory=Backend)

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if not (self.tol_abs > 0 and self.tol_rel > 0):
            raise InvalidInputError("tolerances must be positive")
        if isinstance(self.init_strategy, str):
            if self.init_strategy not in INIT_STRATEGIES:
                raise InvalidInputError(f"unknown init strategy {self.init_strategy!r}")
        else:
            V = np.asarray(self.init_strategy, dtype=float)
            if V.ndim != 2 or V.shape[0] != V.shape[1] or not np.allclose(V.T @ V, np.eye(V.shape[0]), atol=1e-8):
                raise InvalidInputError("given init strategy must be an orthogonal matrix")
            self.init_strategy = V


@dataclass
class IterationRecord:
    J: float
    energy: float
    ggw_squared: float
    linearization: np.ndarray
    subproblem_value: float
    status: str


@dataclass
class DCAResult:
    plan: object
    policy: object
    objective_history: np.ndarray
    energy: float
    ggw_squared: float
    iterations: int
    converged: bool
    theta_gw: float = None
    records: list = field(default_factory=list)

    @property
    def J(self):
        return float(self.objective_history[-1])


def evaluate_objective(plan, params, target, lam):
    """Return ``(J, energy, ggw_squared)`` at ``plan``.

    ``J`` uses the exact concave term. ``ggw_squared`` is the full squared
    distance, i.e. ``J = lam * energy + ggw_squared - 8 ||D_r||_F^2``.
    """
    target = TargetShape.coerce(target)
    SN = plan.terminal
    energy = control_energy(params, plan.M)
    J = (
        lam * energy
        + 4.0 * (np.trace(SN) - target.trace) ** 2
        + 8.0 * np.sum(SN * SN)
        - 16.0 * gw_alignment_gain(SN, target.sigma)
    )
    return float(J), float(energy), ggw_squared(SN, target.sigma)


def linearization(V, target, dim):
    """``V diag(d_r) V^T`` with the target spectrum padded/truncated to ``dim``."""
    dr = TargetShape.coerce(target).eigenvalues(dim)
    return (V * dr) @ V.T


def _initial_vectors(config, params):
    if isinstance(config.init_strategy, np.ndarray):
        V = config.init_strategy
        if V.shape != (params.nx, params.nx):
            raise InvalidInputError(f"initial eigenvectors must be {params.nx}x{params.nx}")
        return V
    if config.init_strategy == "identity":
        return np.eye(params.nx)
    return sorted_eigendecomposition(uncontrolled_plan(params).terminal).eigenvectors


def terminal_angle(SN):
    """Rotation angle of a 2x2 terminal covariance, or None when undefined."""
    if SN.shape != (2, 2):
        return None
    try:
        return principal_angle(SN)
    except DegenerateShapeError:
        return None


def solve_gw_steering(params, target, lam, config=None, callback=None):
    """Run DCA from the configured initial eigenvectors until the objective settles.

    ``callback(iteration, record, solution)`` is invoked after every accepted
    subproblem; tests use it to inspect linearizations.
    """
    config = config or DCAConfig()
    target = TargetShape.coerce(target)
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    program = build_gw_subproblem(params, target, lam)
    V = _initial_vectors(config, params)

    history, records = [], []
    plan = None
    converged = False
    for it in range(int(config.max_iters)):
        G = linearization(V, target, params.nx)
        program.set_linearization(G)
        solution = solve_conic(program, config.backend)
        if solution.status not in ACCEPTED:
            raise AbortedRunError(
                f"subproblem {it} ended with status {solution.status}",
                history=np.array(history),
                status=solution.status,
                diagnostics=solution.extras,
            )
        J, energy, ggw = evaluate_objective(solution.plan, params, target, lam)
        record = IterationRecord(J, energy, ggw, G, solution.objective_value, solution.status)
        records.append(record)
        if history and J > history[-1] + 1e-6 * (1.0 + abs(history[-1])):
            log.warning("DCA objective increased at iteration %d: %.10g -> %.10g", it, history[-1], J)
        if callback is not None:
            callback(it, record, solution)
        history.append(J)
        plan = solution.plan
        V = sorted_eigendecomposition(plan.terminal).eigenvectors
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= config.tol_abs + config.tol_rel * abs(history[-2]):
            converged = True
            break
    if not converged:
        log.warning("DCA stopped at max_iters=%d without meeting the tolerance", config.max_iters)

    J, energy, ggw = evaluate_objective(plan, params, target, lam)
    return DCAResult(
        plan=plan,
        policy=recover_policy(plan),
        objective_history=np.array(history),
        energy=energy,
        ggw_squared=ggw,
        iterations=len(history),
        converged=converged,
        theta_gw=terminal_angle(plan.terminal),
        records=records,
    )
