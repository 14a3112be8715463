"""Discrete-time linear Gaussian dynamics under linear Gaussian policies.

State ``x_{k+1} = A_k x_k + B_k u_k + w_k`` with ``x_0 ~ N(0, Sigma0)``,
``w_k ~ N(0, W_k)`` and ``u_k ~ N(K_k x_k, Q_k)``. The transformed
coordinates ``P_k = K_k Sigma_k`` and ``M_k = P_k Sigma_k^{-1} P_k^T + Q_k``
make the covariance recursion affine.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SingularCovarianceError
from .gaussian import as_symmetric, check_psd, clip_psd, psd_sqrt

INV_RTOL = 1e-10
LMI_SLACK = 1e-6


def _sequence(value, N, name, square=False):
    """Broadcast a single matrix (or scalar) to ``(N, r, c)``; validate a length-N list."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (N,) + arr.shape).copy()
    elif arr.ndim == 1 and square:
        # list of scalars, one per step
        arr = arr.reshape(-1, 1, 1)
    if arr.ndim != 3:
        raise InvalidInputError(f"{name} must be a matrix or a length-{N} sequence of matrices")
    if arr.shape[0] != N:
        raise InvalidInputError(f"{name} has {arr.shape[0]} entries, expected {N}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if square:
        if arr.shape[1] != arr.shape[2]:
            raise InvalidInputError(f"{name} entries must be square")
        arr = 0.5 * (arr + arr.transpose(0, 2, 1))
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Time-indexed system matrices; constant matrices are broadcast over the horizon."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    R: np.ndarray
    N: int
    Sigma0: np.ndarray

    def __post_init__(self):
        N = int(self.N)
        if N < 1:
            raise InvalidInputError("horizon N must be a positive integer")
        A = _sequence(self.A, N, "A")
        B = _sequence(self.B, N, "B")
        W = _sequence(self.W, N, "W", square=True)
        R = _sequence(self.R, N, "R", square=True)
        Sigma0 = as_symmetric(self.Sigma0, "Sigma0")
        nx = Sigma0.shape[0]
        nu = B.shape[2]
        if A.shape[1:] != (nx, nx):
            raise InvalidInputError(f"A must be {nx}x{nx}, got {A.shape[1:]}")
        if B.shape[1] != nx:
            raise InvalidInputError(f"B must have {nx} rows, got {B.shape[1]}")
        if W.shape[1:] != (nx, nx):
            raise InvalidInputError(f"W must be {nx}x{nx}, got {W.shape[1:]}")
        if R.shape[1:] != (nu, nu):
            raise InvalidInputError(f"R must be {nu}x{nu} (input dimension), got {R.shape[1:]}")
        for k in range(N):
            check_psd(W[k], f"W[{k}]")
            if np.linalg.eigvalsh(R[k])[0] <= 0:
                raise InvalidInputError(f"R[{k}] must be positive definite")
        if np.linalg.eigvalsh(Sigma0)[0] <= 0:
            raise InvalidInputError("Sigma0 must be positive definite")
        for name, val in dict(A=A, B=B, W=W, R=R, N=N, Sigma0=Sigma0).items():
            object.__setattr__(self, name, val)

    @property
    def nx(self):
        return self.Sigma0.shape[0]

    @property
    def nu(self):
        return self.B.shape[2]


@dataclass(frozen=True)
class Policy:
    """Gains ``K_k`` (nu x nx) and input noise covariances ``Q_k`` (nu x nu)."""

    K: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if K.ndim != 3 or Q.ndim != 3 or K.shape[0] != Q.shape[0]:
            raise InvalidInputError("K and Q must be equal-length sequences of matrices")
        if Q.shape[1:] != (K.shape[1], K.shape[1]):
            raise InvalidInputError("Q entries must be nu x nu")
        Q = 0.5 * (Q + Q.transpose(0, 2, 1))
        for k, Qk in enumerate(Q):
            check_psd(Qk, f"Q[{k}]")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Q", Q)

    @property
    def N(self):
        return self.K.shape[0]

    @property
    def deterministic(self):
        return bool(np.all(self.Q == 0))

    @classmethod
    def zero(cls, params):
        return cls(np.zeros((params.N, params.nu, params.nx)), np.zeros((params.N, params.nu, params.nu)))


@dataclass(frozen=True)
class TransformedPlan:
    """Covariances ``Sigma_0..Sigma_N`` with transformed inputs ``M_k``, ``P_k``."""

    Sigma: np.ndarray
    M: np.ndarray
    P: np.ndarray

    @property
    def N(self):
        return self.M.shape[0]

    @property
    def terminal(self):
        return self.Sigma[-1]


@dataclass
class RolloutBatch:
    samples: np.ndarray  # (n_samples, N + 1, nx)
    seed: int
    deterministic: bool = True
    inputs: np.ndarray = field(default=None, repr=False)  # (n_samples, N, nu)

    @property
    def n_samples(self):
        return self.samples.shape[0]


def _check_policy(params, policy):
    if policy.N != params.N or policy.K.shape[1:] != (params.nu, params.nx):
        raise InvalidInputError(
            f"policy shapes {policy.K.shape} do not match system (N={params.N}, nu={params.nu}, nx={params.nx})"
        )


def propagate_policy(params, policy):
    """Covariance trajectory ``Sigma_0..Sigma_N`` under ``u_k ~ N(K_k x_k, Q_k)``."""
    _check_policy(params, policy)
    out = np.empty((params.N + 1, params.nx, params.nx))
    S = params.Sigma0
    out[0] = S
    for k in range(params.N):
        A, B, K = params.A[k], params.B[k], policy.K[k]
        Acl = A + B @ K
        S = as_symmetric(Acl @ S @ Acl.T + B @ policy.Q[k] @ B.T + params.W[k])
        out[k + 1] = S
    return out


def _step_transformed(A, B, W, S, M, P):
    return as_symmetric(A @ S @ A.T + A @ P.T @ B.T + B @ P @ A.T + B @ M @ B.T + W)


def propagate_transformed(params, M, P):
    """Covariance trajectory from the affine recursion in ``(M_k, P_k)``."""
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    if M.shape != (params.N, params.nu, params.nu) or P.shape != (params.N, params.nu, params.nx):
        raise InvalidInputError(f"M/P shapes {M.shape}, {P.shape} do not match system")
    out = np.empty((params.N + 1, params.nx, params.nx))
    out[0] = params.Sigma0
    for k in range(params.N):
        out[k + 1] = _step_transformed(params.A[k], params.B[k], params.W[k], out[k], M[k], P[k])
    return out


def plan_from_policy(params, policy):
    """Map a policy to transformed coordinates: ``P = K Sigma``, ``M = K Sigma K^T + Q``."""
    Sigma = propagate_policy(params, policy)
    P = np.einsum("kij,kjl->kil", policy.K, Sigma[:-1])
    M = np.einsum("kij,klj->kil", P, policy.K) + policy.Q
    M = 0.5 * (M + M.transpose(0, 2, 1))
    return TransformedPlan(Sigma, M, P)


def uncontrolled_plan(params):
    return plan_from_policy(params, Policy.zero(params))


def recover_policy(plan):
    """Invert the variable transform: ``K = P Sigma^{-1}``, ``Q = M - P Sigma^{-1} P^T``.

    ``Q`` is symmetrized and slightly negative eigenvalues (from solver
    round-off) are clipped. A numerically singular ``Sigma_k`` raises
    :class:`SingularCovarianceError` rather than being pseudo-inverted.
    """
    N = plan.N
    nu, nx = plan.P.shape[1:]
    K = np.empty((N, nu, nx))
    Q = np.empty((N, nu, nu))
    for k in range(N):
        S = as_symmetric(plan.Sigma[k])
        w = np.linalg.eigvalsh(S)
        if w[0] <= INV_RTOL * max(np.trace(S), 0.0) or w[0] <= 0:
            raise SingularCovarianceError(f"Sigma[{k}] is singular (smallest eigenvalue {w[0]:.3e})")
        Kk = np.linalg.solve(S, plan.P[k].T).T
        Qk = as_symmetric(plan.M[k] - Kk @ plan.P[k].T)
        qmin = np.linalg.eigvalsh(Qk)[0]
        if qmin < -LMI_SLACK * (1.0 + np.linalg.norm(plan.M[k], "fro")):
            raise InvalidInputError(f"plan violates the block PSD condition at step {k} (min eig {qmin:.3e})")
        if qmin < 0:
            Qk = clip_psd(Qk)
        K[k] = Kk
        Q[k] = Qk
    return Policy(K, Q)


def control_energy(params, M):
    """Expected input energy ``sum_k tr(R_k M_k)`` (unweighted by lambda)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (params.N, params.nu, params.nu):
        raise InvalidInputError(f"M has shape {M.shape}, expected {(params.N, params.nu, params.nu)}")
    return float(np.einsum("kij,kji->", params.R, M))


def _normals(seed, step, stream, shape):
    # one counter-based stream per (seed, step, stream); rows index samples
    ss = np.random.SeedSequence([int(seed), int(step), int(stream)])
    return np.random.Generator(np.random.Philox(ss)).standard_normal(shape)


def rollout(params, policy, n_samples, seed):
    """Monte Carlo sample paths of the closed loop.

    Randomness for time step ``k`` comes from a Philox stream keyed by
    ``(seed, k, source)``, so the batch is a deterministic function of the
    seed. Covariances are factored by spectral square roots, so singular
    ``Sigma0``, ``W_k`` or ``Q_k`` are fine.
    """
    _check_policy(params, policy)
    if int(n_samples) < 1:
        raise InvalidInputError("n_samples must be positive")
    if int(seed) < 0:
        raise InvalidInputError("seed must be non-negative")
    n, N, nx, nu = int(n_samples), params.N, params.nx, params.nu
    X = np.empty((n, N + 1, nx))
    U = np.empty((n, N, nu))
    X[:, 0] = _normals(seed, 0, 0, (n, nx)) @ psd_sqrt(params.Sigma0)
    for k in range(N):
        x = X[:, k]
        u = x @ policy.K[k].T
        if np.any(policy.Q[k]):
            u = u + _normals(seed, k, 1, (n, nu)) @ psd_sqrt(policy.Q[k])
        w = _normals(seed, k, 2, (n, nx)) @ psd_sqrt(params.W[k])
        U[:, k] = u
        X[:, k + 1] = x @ params.A[k].T + u @ params.B[k].T + w
    return RolloutBatch(X, int(seed), policy.deterministic, U)


def empirical_energy(params, batch):
    """Sample mean of ``sum_k u_k^T R_k u_k`` over the batch."""
    return float(np.einsum("nki,kij,nkj->n", batch.inputs, params.R, batch.inputs).mean())


def empirical_covariance(batch, k):
    """Unbiased sample covariance of the states at time ``k``."""
    samples = batch.samples
    if not 0 <= k < samples.shape[1]:
        raise InvalidInputError(f"time index {k} out of range [0, {samples.shape[1] - 1}]")
    if samples.shape[0] < 2:
        raise InvalidInputError("need at least two samples")
    return as_symmetric(np.cov(samples[:, k, :], rowvar=False, ddof=1).reshape(samples.shape[2], samples.shape[2]))


def covariance_standard_error(S):
    """Elementwise standard error of an unbiased sample covariance under Gaussian data,
    per sample: ``sqrt(S_ii S_jj + S_ij^2)``; divide by ``sqrt(n - 1)``."""
    d = np.diag(S)
    return np.sqrt(np.outer(d, d) + S**2)
