import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gwsteer.errors import DegenerateShapeError, InvalidInputError, UnsupportedDimensionError
from gwsteer.gaussian import (
    TargetShape,
    angle_distance,
    ggw_squared,
    gw_alignment_gain,
    gw_subgradient,
    principal_angle,
    rotate_covariance,
    rotation,
    sorted_eigendecomposition,
    trace_max_orthogonal,
    wasserstein2_squared,
)

# entries on a 1e-3 grid: keeps products away from the subnormal range
finite = st.integers(-3000, 3000).map(lambda i: i / 1000.0)


@st.composite
def psd(draw, n=None, floor=0.0):
    n = n or draw(st.integers(1, 4))
    L = draw(arrays(float, (n, n), elements=finite))
    return L @ L.T + floor * np.eye(n)


@st.composite
def psd_pair(draw):
    n = draw(st.integers(1, 4))
    return draw(psd(n)), draw(psd(n))


@st.composite
def psd_triple(draw):
    n = draw(st.integers(1, 4))
    return draw(psd(n)), draw(psd(n)), draw(psd(n))


def bures_oracle(Sa, Sb):
    # scipy's sqrtm as an independent square root
    from scipy.linalg import sqrtm

    ra = np.real(sqrtm(Sa))
    cross = np.real(np.trace(sqrtm(ra @ Sb @ ra)))
    return np.trace(Sa) + np.trace(Sb) - 2 * cross


# ggw_squared


def test_ggw_same_spectrum_is_zero():
    assert ggw_squared(np.diag([2.0, 0.5]), np.diag([0.5, 2.0])) == pytest.approx(0.0, abs=1e-12)


def test_ggw_hand_value():
    # traces 5 vs 3, spectra (3,2) vs (2,1): 4*4 + 8*(1+1)
    assert ggw_squared(np.diag([3.0, 2.0]), np.diag([1.0, 2.0])) == pytest.approx(32.0)


def test_ggw_cross_dimension_pads_with_zeros():
    # (10) padded to (10, 0) against (3, 1): 4*(4-10)^2 + 8*(49 + 1)
    assert ggw_squared(np.diag([3.0, 1.0]), np.array([[10.0]])) == pytest.approx(4 * 36 + 8 * 50)
    assert ggw_squared(np.array([[10.0]]), np.diag([3.0, 1.0])) == pytest.approx(4 * 36 + 8 * 50)


def test_ggw_rejects_non_psd():
    with pytest.raises(InvalidInputError):
        ggw_squared(np.diag([1.0, -1.0]), np.eye(2))


def test_ggw_symmetrizes_input():
    S = np.array([[1.0, 0.5], [0.0, 1.0]])
    assert ggw_squared(S, np.eye(2)) == ggw_squared(0.5 * (S + S.T), np.eye(2))


def test_ggw_rejects_non_square():
    with pytest.raises(InvalidInputError):
        ggw_squared(np.ones((2, 3)), np.eye(2))


@settings(max_examples=60, deadline=None)
@given(psd_pair(), st.floats(0, 2 * np.pi))
def test_ggw_invariant_under_rotation(pair, theta):
    Sa, Sb = pair
    if Sa.shape != (2, 2):
        return
    assert ggw_squared(rotate_covariance(Sa, theta), Sb) == pytest.approx(ggw_squared(Sa, Sb), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(psd_pair())
def test_ggw_symmetric_nonnegative_identity(pair):
    Sa, Sb = pair
    d = ggw_squared(Sa, Sb)
    assert d >= 0
    assert d == pytest.approx(ggw_squared(Sb, Sa), rel=1e-12, abs=1e-12)
    assert ggw_squared(Sa, Sa) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(psd_pair())
def test_ggw_equals_expanded_objective(pair):
    # 4(trA - trB)^2 + 8||A||^2 + 8||B||^2 - 16 g(A)  (Frobenius norm = spectral 2-norm of eigenvalues)
    Sa, Sb = pair
    expanded = (
        4 * (np.trace(Sa) - np.trace(Sb)) ** 2 + 8 * np.sum(Sa * Sa) + 8 * np.sum(Sb * Sb)
        - 16 * gw_alignment_gain(Sa, Sb)
    )
    assert ggw_squared(Sa, Sb) == pytest.approx(expanded, rel=1e-8, abs=1e-8)


# alignment gain and subgradient


@settings(max_examples=100, deadline=None)
@given(psd_triple(), st.floats(0, 1))
def test_alignment_gain_convex(triple, t):
    X, Y, Sr = triple
    mid = gw_alignment_gain(t * X + (1 - t) * Y, Sr)
    assert mid <= t * gw_alignment_gain(X, Sr) + (1 - t) * gw_alignment_gain(Y, Sr) + 1e-9 * (1 + abs(mid))


@settings(max_examples=100, deadline=None)
@given(psd_triple())
def test_subgradient_inequality(triple):
    X, Y, Sr = triple
    G = gw_subgradient(X, Sr)
    lhs = gw_alignment_gain(Y, Sr)
    rhs = gw_alignment_gain(X, Sr) + np.sum(G * (Y - X))
    assert lhs >= rhs - 1e-9 * (1 + abs(lhs))
    # touching at X
    assert np.sum(G * X) == pytest.approx(gw_alignment_gain(X, Sr), rel=1e-9, abs=1e-9)


def test_subgradient_truncates_larger_target():
    G = gw_subgradient(np.array([[2.0]]), np.diag([5.0, 1.0]))
    assert G.shape == (1, 1) and G[0, 0] == pytest.approx(5.0)


def test_alignment_gain_is_max_over_orthogonal():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((3, 3))
    X = X @ X.T
    Sr = np.diag([3.0, 1.0, 0.2])
    g = gw_alignment_gain(X, Sr)
    for _ in range(200):
        U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert np.trace(U @ X @ U.T @ Sr) <= g + 1e-9


# trace maximization over O(n)


def test_trace_max_diagonal_example():
    U, value = trace_max_orthogonal(np.diag([1.0, 3.0]), np.diag([2.0, 5.0]))
    assert value == pytest.approx(3 * 5 + 1 * 2)
    assert np.trace(U @ np.diag([1.0, 3.0]) @ U.T @ np.diag([2.0, 5.0])) == pytest.approx(17.0)
    assert np.allclose(U.T @ U, np.eye(2))


def test_trace_max_indefinite_inputs():
    A = np.diag([2.0, -1.0])
    B = np.diag([-3.0, 1.0])
    U, value = trace_max_orthogonal(A, B)
    assert value == pytest.approx(2 * 1 + (-1) * (-3))
    assert np.trace(U @ A @ U.T @ B) == pytest.approx(value)


def test_trace_max_shape_mismatch():
    with pytest.raises(InvalidInputError):
        trace_max_orthogonal(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(arrays(float, (2, 3, 3), elements=finite))
def test_trace_max_attains_and_bounds(mats):
    A, B = mats[0] + mats[0].T, mats[1] + mats[1].T
    U, value = trace_max_orthogonal(A, B)
    assert np.allclose(U @ U.T, np.eye(3), atol=1e-10)
    assert np.trace(U @ A @ U.T @ B) == pytest.approx(value, rel=1e-9, abs=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(20):
        V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert np.trace(V @ A @ V.T @ B) <= value + 1e-9 * (1 + abs(value))


# eigendecomposition


def test_sorted_eigendecomposition_descending_and_deterministic():
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    spec = sorted_eigendecomposition(S)
    assert np.allclose(spec.eigenvalues, [3.0, 1.0])
    assert np.allclose(spec.reconstruct(), S)
    again = sorted_eigendecomposition(S.copy())
    assert np.array_equal(spec.eigenvectors, again.eigenvectors)
    # sign convention: first nonzero component positive
    assert np.all(spec.eigenvectors[0] > 0)


def test_sorted_eigendecomposition_ties_use_coordinate_basis():
    spec = sorted_eigendecomposition(np.eye(3) * 2.0)
    assert np.allclose(spec.eigenvectors, np.eye(3))


@settings(max_examples=60, deadline=None)
@given(psd())
def test_sorted_eigendecomposition_reconstructs(S):
    spec = sorted_eigendecomposition(S)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    assert np.allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(S.shape[0]), atol=1e-9)
    assert np.allclose(spec.reconstruct(), S, atol=1e-8 * (1 + np.abs(S).max()))
    assert np.allclose(spec.padded(S.shape[0] + 2)[-2:], 0.0)


# Wasserstein


def test_wasserstein_scalar_case():
    assert wasserstein2_squared(np.eye(2), 4 * np.eye(2)) == pytest.approx(2.0)


def test_wasserstein_commuting_case():
    # commuting: sum (sqrt a - sqrt b)^2
    a, b = np.array([4.0, 1.0]), np.array([1.0, 9.0])
    expected = np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
    assert wasserstein2_squared(np.diag(a), np.diag(b)) == pytest.approx(expected)


def test_wasserstein_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        wasserstein2_squared(np.eye(2), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(psd_pair())
def test_wasserstein_matches_scipy_oracle(pair):
    Sa, Sb = pair
    Sa, Sb = Sa + 0.1 * np.eye(len(Sa)), Sb + 0.1 * np.eye(len(Sb))
    w = wasserstein2_squared(Sa, Sb)
    assert w >= 0
    assert w == pytest.approx(max(bures_oracle(Sa, Sb), 0.0), rel=1e-6, abs=1e-7)
    assert w == pytest.approx(wasserstein2_squared(Sb, Sa), rel=1e-7, abs=1e-8)


# rotations


def test_rotate_covariance_quarter_turn_swaps_axes():
    assert np.allclose(rotate_covariance(np.diag([2.0, 0.5]), np.pi / 2), np.diag([0.5, 2.0]))


def test_rotate_covariance_period_pi():
    S = np.diag([2.0, 0.5])
    assert np.allclose(rotate_covariance(S, 0.7), rotate_covariance(S, 0.7 + np.pi))


def test_rotate_covariance_2d_only():
    with pytest.raises(UnsupportedDimensionError):
        rotate_covariance(np.eye(3), 0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, np.pi - 1e-6), st.floats(0.1, 5), st.floats(0.01, 0.09))
def test_principal_angle_inverts_rotation(theta, big, small_frac):
    S = rotate_covariance(np.diag([big, big * small_frac]), theta)
    assert angle_distance(principal_angle(S), theta) <= 1e-8


def test_principal_angle_isotropic_is_degenerate():
    with pytest.raises(DegenerateShapeError):
        principal_angle(3.0 * np.eye(2))


def test_principal_angle_range():
    for theta in np.linspace(-4, 4, 17):
        a = principal_angle(rotate_covariance(np.diag([2.0, 0.5]), theta))
        assert 0.0 <= a < np.pi


def test_angle_distance_wraps():
    assert angle_distance(0.01, np.pi - 0.01) == pytest.approx(0.02)
    assert angle_distance(1.0, 1.0 + 3 * np.pi) == pytest.approx(0.0, abs=1e-12)


def test_rotation_is_orthogonal():
    R = rotation(0.3)
    assert np.allclose(R.T @ R, np.eye(2)) and np.linalg.det(R) == pytest.approx(1.0)


# target shapes


def test_target_shape_embedding_and_padding():
    t = TargetShape(np.array([[10.0]]))
    assert np.allclose(t.embedded(2), np.diag([10.0, 0.0]))
    assert np.allclose(t.eigenvalues(3), [10.0, 0.0, 0.0])
    assert t.trace == pytest.approx(10.0)


def test_target_shape_rejects_non_psd():
    with pytest.raises(InvalidInputError):
        TargetShape(np.diag([1.0, -0.5]))
