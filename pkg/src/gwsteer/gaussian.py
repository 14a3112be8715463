"""Gaussian geometry: sorted spectra, the Gaussian Gromov-Wasserstein distance,
its convex alignment term and subgradient, orthogonal trace maximization,
the Bures-Wasserstein distance and planar rotations of covariances.

Symmetric matrices are plain ``numpy`` arrays. Functions that accept them
symmetrize on entry via :func:`as_symmetric`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateShapeError, InvalidInputError, UnsupportedDimensionError

PSD_RTOL = 1e-9
TIE_RTOL = 1e-10
GAP_RTOL = 1e-8


def as_symmetric(S, name="matrix"):
    """Return ``(S + S.T) / 2`` as a float array after shape and finiteness checks."""
    S = np.asarray(S, dtype=float)
    if S.ndim == 0:
        S = S.reshape(1, 1)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return 0.5 * (S + S.T)


def psd_tolerance(S):
    return PSD_RTOL * np.linalg.norm(S, "fro")


def check_psd(S, name="matrix"):
    """Symmetrize ``S`` and raise unless its smallest eigenvalue is >= -tol_psd."""
    S = as_symmetric(S, name)
    if S.size and np.linalg.eigvalsh(S)[0] < -psd_tolerance(S):
        raise InvalidInputError(f"{name} is not positive semidefinite")
    return S


def clip_psd(S):
    """Project a nearly-PSD symmetric matrix onto the PSD cone by zeroing negative eigenvalues."""
    S = as_symmetric(S)
    w, V = np.linalg.eigh(S)
    if w.size == 0 or w[0] >= 0:
        return S
    w = np.clip(w, 0.0, None)
    return as_symmetric((V * w) @ V.T)


def psd_sqrt(S):
    """Spectral square root with negative eigenvalues clipped at zero."""
    w, V = np.linalg.eigh(as_symmetric(S))
    return as_symmetric((V * np.sqrt(np.clip(w, 0.0, None))) @ V.T)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending with paired orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T

    def padded(self, dim):
        """Eigenvalues zero-padded (or truncated) to length ``dim``."""
        out = np.zeros(dim)
        k = min(dim, self.dim)
        out[:k] = self.eigenvalues[:k]
        return out


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = check_psd(self.cov, "cov")
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if mean.shape[0] != cov.shape[0]:
            raise InvalidInputError("mean and covariance dimensions differ")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def centered(cls, cov):
        cov = np.atleast_2d(cov)
        return cls(np.zeros(cov.shape[0]), cov)


def _canonical_sign(V):
    # first nonzero component of each column made positive
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def _canonical_basis(Vc):
    """Deterministic orthonormal basis of span(Vc): Gram-Schmidt over the
    projector's columns taken in input (coordinate) order."""
    k = Vc.shape[1]
    proj = Vc @ Vc.T
    basis = []
    for j in range(proj.shape[1]):
        v = proj[:, j].copy()
        for b in basis:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
        if len(basis) == k:
            break
    return np.column_stack(basis)


def sorted_eigendecomposition(S):
    """Symmetric eigendecomposition with eigenvalues in descending order.

    Eigenvectors of repeated eigenvalues are replaced by a canonical basis of
    their eigenspace (coordinate order), and every column is sign-normalized so
    its first nonzero component is positive. The result is therefore a
    deterministic function of ``S``.
    """
    S = as_symmetric(S)
    w, V = np.linalg.eigh(S)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]

    tol = TIE_RTOL * max(1.0, np.abs(w).max(initial=0.0))
    start = 0
    n = w.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and w[start] - w[stop] <= tol:
            stop += 1
        if stop - start > 1:
            V[:, start:stop] = _canonical_basis(V[:, start:stop])
        start = stop
    return Spectrum(w, _canonical_sign(V))


def _psd_spectra(Sa, Sb):
    Sa = check_psd(Sa, "first covariance")
    Sb = check_psd(Sb, "second covariance")
    n = max(Sa.shape[0], Sb.shape[0])
    da = np.clip(sorted_eigendecomposition(Sa).padded(n), 0.0, None)
    db = np.clip(sorted_eigendecomposition(Sb).padded(n), 0.0, None)
    return da, db


def ggw_squared(Sa, Sb):
    """Squared Gaussian Gromov-Wasserstein distance between centered Gaussians.

    ``4 (tr Sa - tr Sb)^2 + 8 ||Da - Db||_F^2`` where ``Da``, ``Db`` are the
    descending spectra, the shorter one zero-padded. Dimensions may differ.
    """
    da, db = _psd_spectra(Sa, Sb)
    return float(4.0 * (da.sum() - db.sum()) ** 2 + 8.0 * np.sum((da - db) ** 2))


def gw_alignment_gain(SN, Sr):
    """``tr(D_N D_r)``: inner product of the descending (zero-padded) spectra.

    Convex in ``SN``; it is the maximum over orthogonal ``U`` of
    ``tr(U SN U^T Sr)``.
    """
    dn, dr = _psd_spectra(SN, Sr)
    return float(dn @ dr)


def gw_subgradient(SN, Sr):
    """Subgradient ``V_N D_r V_N^T`` of :func:`gw_alignment_gain` at ``SN``.

    ``D_r`` is padded with zeros or truncated to the dimension of ``SN``.
    """
    SN = check_psd(SN, "SN")
    Sr = check_psd(Sr, "Sr")
    spec = sorted_eigendecomposition(SN)
    dr = np.clip(sorted_eigendecomposition(Sr).padded(spec.dim), 0.0, None)
    V = spec.eigenvectors
    return as_symmetric((V * dr) @ V.T)


def trace_max_orthogonal(A, B):
    """Maximize ``tr(U A U^T B)`` over orthogonal ``U``.

    Returns ``(U, value)`` with ``U = W V^T`` for ``A = V Lambda V^T`` and
    ``B = W Xi W^T`` (both descending) and ``value = tr(Lambda Xi)``.
    """
    A = as_symmetric(A, "A")
    B = as_symmetric(B, "B")
    if A.shape != B.shape:
        raise InvalidInputError(f"dimension mismatch: {A.shape} vs {B.shape}")
    sa = sorted_eigendecomposition(A)
    sb = sorted_eigendecomposition(B)
    U = sb.eigenvectors @ sa.eigenvectors.T
    return U, float(sa.eigenvalues @ sb.eigenvalues)


def wasserstein2_squared(Sa, Sb):
    """Squared 2-Wasserstein (Bures) distance between centered Gaussians.

    ``tr Sa + tr Sb - 2 tr (Sb^{1/2} Sa Sb^{1/2})^{1/2}``; singular inputs allowed.
    """
    Sa = check_psd(Sa, "first covariance")
    Sb = check_psd(Sb, "second covariance")
    if Sa.shape != Sb.shape:
        raise InvalidInputError(f"dimension mismatch: {Sa.shape} vs {Sb.shape}")
    rb = psd_sqrt(Sb)
    cross = np.sqrt(np.clip(np.linalg.eigvalsh(as_symmetric(rb @ Sa @ rb)), 0.0, None)).sum()
    return float(max(np.trace(Sa) + np.trace(Sb) - 2.0 * cross, 0.0))


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate_covariance(S, theta):
    """``R(theta)^T S R(theta)`` with ``R`` the planar counter-clockwise rotation."""
    S = check_psd(S, "covariance")
    if S.shape != (2, 2):
        raise UnsupportedDimensionError("rotate_covariance is defined for 2x2 covariances only")
    R = rotation(theta)
    return as_symmetric(R.T @ S @ R)


def principal_angle(S):
    """Angle ``theta`` in ``[0, pi)`` with ``S = R(theta)^T diag(l1, l2) R(theta)``, ``l1 > l2``.

    This inverts :func:`rotate_covariance` for anisotropic inputs. The leading
    eigenvector of ``S`` is ``(cos theta, -sin theta)``.
    """
    S = check_psd(S, "covariance")
    if S.shape != (2, 2):
        raise UnsupportedDimensionError("principal_angle is defined for 2x2 covariances only")
    spec = sorted_eigendecomposition(S)
    gap = spec.eigenvalues[0] - spec.eigenvalues[1]
    if gap <= GAP_RTOL * max(np.trace(S), np.finfo(float).tiny):
        raise DegenerateShapeError("isotropic covariance has no principal angle")
    v = spec.eigenvectors[:, 0]
    theta = float(np.mod(np.arctan2(-v[1], v[0]), np.pi))
    # fold values that round up to pi back to 0
    return 0.0 if np.isclose(theta, np.pi, atol=1e-15) else theta


def angle_distance(a, b):
    """Distance between two angles modulo pi."""
    d = np.mod(a - b, np.pi)
    return float(min(d, np.pi - d))


@dataclass(frozen=True)
class TargetShape:
    """Target covariance, possibly of a different dimension than the state."""

    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_psd(self.sigma, "target covariance"))
        object.__setattr__(self, "_spectrum", sorted_eigendecomposition(self.sigma))

    @classmethod
    def coerce(cls, target):
        return target if isinstance(target, cls) else cls(target)

    @property
    def dim(self):
        return self.sigma.shape[0]

    @property
    def spectrum(self):
        return self._spectrum

    @property
    def trace(self):
        return float(np.clip(self._spectrum.eigenvalues, 0.0, None).sum())

    def eigenvalues(self, dim):
        """Descending eigenvalues zero-padded or truncated to ``dim``."""
        return np.clip(self._spectrum.padded(dim), 0.0, None)

    def embedded(self, dim):
        """Zero-pad the covariance into ``dim`` dimensions (top-left block)."""
        if dim < self.dim:
            raise InvalidInputError(f"cannot embed a {self.dim}-dimensional target into {dim} dimensions")
        out = np.zeros((dim, dim))
        out[: self.dim, : self.dim] = self.sigma
        return out
