import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from imexbdf2.spatial import (
    IntegralOperator,
    SingularPivotError,
    SpatialGrid,
    TridiagonalMatrix,
    apply_integral_direct,
    apply_integral_fast,
    assemble_tridiagonal,
    gradient,
    h1_seminorm,
    inner,
    l2_norm,
    laplacian,
    seminorm_decomposition,
    thomas_solve,
)


def test_grid_basics():
    g = SpatialGrid(0.0, math.pi, 8)
    assert g.h == pytest.approx(math.pi / 8)
    assert g.x[0] == 0.0 and g.x[-1] == math.pi
    assert g.interior.size == 7
    with pytest.raises(ValueError):
        g.x[3] = 1.0
    for bad in [(1.0, 0.0, 4), (0.0, 1.0, 1), (0.0, 1.0, 2.5)]:
        with pytest.raises(ValueError):
            SpatialGrid(*bad)


# ---------------------------------------------------------------- differences

def test_differences_exact_on_quadratics():
    g = SpatialGrid(-1.0, 2.0, 30)
    u = 3 * g.x**2 - g.x + 5
    np.testing.assert_allclose(laplacian(g, u), 6.0, rtol=1e-9)
    np.testing.assert_allclose(gradient(g, u), 6 * g.interior - 1, rtol=1e-10, atol=1e-10)


def test_differences_second_order():
    errs_l, errs_g = [], []
    for M in (32, 64, 128):
        g = SpatialGrid(0.0, 1.0, M)
        u = np.exp(g.x) * np.sin(3 * g.x)
        xi = g.interior
        d1 = np.exp(xi) * (np.sin(3 * xi) + 3 * np.cos(3 * xi))
        d2 = np.exp(xi) * (-8 * np.sin(3 * xi) + 6 * np.cos(3 * xi))
        errs_l.append(np.max(np.abs(laplacian(g, u) - d2)))
        errs_g.append(np.max(np.abs(gradient(g, u) - d1)))
    for errs in (errs_l, errs_g):
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.1)


# ---------------------------------------------------------------- norms

def test_l2_norm_of_sine():
    g = SpatialGrid(0.0, math.pi, 64)
    # h * sum sin^2 over interior nodes is exactly pi/2 for this grid
    assert l2_norm(g, np.sin(g.x)) ** 2 == pytest.approx(math.pi / 2, abs=1e-12)


def test_inner_accepts_interior_arrays():
    g = SpatialGrid(0.0, 1.0, 10)
    u = np.arange(11.0)
    assert inner(g, u, u) == pytest.approx(inner(g, u[1:-1], u[1:-1]))
    with pytest.raises(ValueError):
        inner(g, np.ones(5), np.ones(5))


def test_h1_seminorm_matches_difference_sum(rng):
    g = SpatialGrid(0.0, 2.0, 40)
    u = rng.standard_normal(41)
    u[0] = u[-1] = 0.0
    # summation by parts: <-Lap u, u> = sum_{i=0}^{M-1} (u_{i+1} - u_i)^2 / h
    ref = np.sum(np.diff(u) ** 2) / g.h
    assert h1_seminorm(g, u) ** 2 == pytest.approx(ref, rel=1e-12)


def test_seminorm_decomposition(rng):
    for M in (5, 17, 64):
        g = SpatialGrid(-1.0, 1.0, M)
        u = rng.standard_normal(M + 1)
        a, b, c = seminorm_decomposition(g, u)
        assert a + b + c == pytest.approx(h1_seminorm(g, u) ** 2, rel=1e-13)


# ---------------------------------------------------------------- integral operator

def trapezoid_oracle(g, rho, u):
    return np.array([trapezoid(u * rho(g.x - xi), g.x) for xi in g.interior])


def test_integral_constant_kernel():
    g = SpatialGrid(0.0, math.pi, 64)
    op = IntegralOperator.stationary(g, lambda y: np.ones_like(y))
    u = np.sin(g.x)
    expected = trapezoid(u, g.x)
    np.testing.assert_allclose(op.apply_direct(u), expected, rtol=1e-13)
    np.testing.assert_allclose(op.apply_fast(u), expected, rtol=1e-12)
    assert abs(expected - 2.0) < 1e-3


def test_integral_matches_trapezoid_oracle(rng):
    g = SpatialGrid(-1.5, 1.5, 50)
    rho = lambda y: np.exp(-((y + 0.9) ** 2) / 0.405) * (y + 2.0)
    op = IntegralOperator.stationary(g, rho)
    u = rng.standard_normal(51)
    ref = trapezoid_oracle(g, rho, u)
    np.testing.assert_allclose(apply_integral_direct(op, u), ref, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(apply_integral_fast(op, u), ref, rtol=1e-10, atol=1e-12)


def test_integral_delta_like_kernel():
    g = SpatialGrid(0.0, 1.0, 20)
    h = g.h
    rho = lambda y: np.where(np.abs(y) < 0.5 * h, 1.0 / h, 0.0)
    op = IntegralOperator.stationary(g, rho)
    u = g.x**2
    np.testing.assert_allclose(op.apply(u), u[1:-1], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("M", [3, 31, 64, 255, 1000])
def test_fast_matches_direct(rng, M):
    g = SpatialGrid(-2.0, 1.0, M)
    op = IntegralOperator.stationary(g, lambda y: np.cos(3 * y) - y**2)
    u = rng.standard_normal(M + 1)
    direct = op.apply_direct(u)
    scale = op.sup_norm * g.length * np.max(np.abs(u))
    assert np.max(np.abs(op.apply_fast(u) - direct)) <= 1e-12 * scale


def test_from_matrix_is_direct_only(rng):
    g = SpatialGrid(0.0, 1.0, 6)
    R = rng.standard_normal((5, 7))
    op = IntegralOperator.from_matrix(g, R)
    u = rng.standard_normal(7)
    w = np.full(7, g.h)
    w[[0, -1]] *= 0.5
    np.testing.assert_allclose(op.apply(u), R @ (w * u))
    with pytest.raises(ValueError):
        op.apply_fast(u)
    with pytest.raises(ValueError):
        IntegralOperator(g)


def test_operator_norm_matches_svd():
    g = SpatialGrid(0.0, math.pi, 40)
    op = IntegralOperator.stationary(g, lambda y: np.exp(-y**2) + 0.3 * y)
    # interior columns of the weight matrix; the norm h-scaling cancels
    W = op.weights[:, 1:-1]
    ref = np.linalg.norm(W, 2)
    est = op.operator_norm()
    assert est == pytest.approx(ref, rel=1e-8)
    assert op.operator_norm() == est
    assert est <= op.sup_norm * g.length * (1 + 1e-12)


def test_operator_norm_constant_kernel():
    g = SpatialGrid(0.0, math.pi, 128)
    op = IntegralOperator.stationary(g, lambda y: np.ones_like(y))
    # rank one: h * ones(M-1) ones(M-1)^T has norm h (M-1)
    assert op.operator_norm() == pytest.approx(g.h * (g.M - 1), rel=1e-12)


# ---------------------------------------------------------------- tridiagonal

def test_assemble_small_example():
    g = SpatialGrid(0.0, 1.0, 3)
    A = assemble_tridiagonal(2.0, 1.0, 0.5, 0.25, g)
    h = 1 / 3
    # two interior nodes
    expected = np.array([
        [2.25 + 2 / h**2, -1 / h**2 + 0.25 / h],
        [-1 / h**2 - 0.25 / h, 2.25 + 2 / h**2],
    ])
    np.testing.assert_allclose(expected, [[20.25, -8.25], [-9.75, 20.25]], rtol=1e-14)
    np.testing.assert_allclose(A.todense(), expected, rtol=1e-14)
    with pytest.raises(ValueError):
        assemble_tridiagonal(2.0, 0.0, 0.5, 0.25, g)


def test_assembled_operator_matches_difference_operators(rng):
    g = SpatialGrid(-1.0, 1.0, 25)
    c1, c2, c3, b0 = 0.7, -1.3, 0.2, 15.0
    A = assemble_tridiagonal(b0, c1, c2, c3, g)
    u = rng.standard_normal(26)
    u[0] = u[-1] = 0.0
    ref = (b0 + c3) * u[1:-1] - c1 * laplacian(g, u) + c2 * gradient(g, u)
    np.testing.assert_allclose(A.matvec(u[1:-1]), ref, rtol=1e-12, atol=1e-10)


def test_diagonal_dominance_when_cell_peclet_small():
    g = SpatialGrid(-1.5, 1.5, 256)
    A = assemble_tridiagonal(100.0, 0.01125, 0.0, 0.15, g)
    off = np.abs(A.lower) + np.abs(A.upper)
    assert np.all(A.diag > off)


def test_thomas_identity_and_small_system():
    I = TridiagonalMatrix(np.zeros(4), np.ones(4), np.zeros(4))
    rhs = np.array([1.0, -2.0, 3.0, 0.5])
    np.testing.assert_array_equal(thomas_solve(I, rhs), rhs)
    A = TridiagonalMatrix(np.array([0.0, 1.0, 1.0]), np.array([4.0, 4.0, 4.0]),
                          np.array([1.0, 1.0, 0.0]))
    x = thomas_solve(A, np.array([5.0, 6.0, 5.0]))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0], rtol=1e-15)


def test_thomas_random_against_banded_solver(rng):
    n = 100
    lower, upper = rng.standard_normal(n), rng.standard_normal(n)
    diag = 3.0 + np.abs(lower) + np.abs(upper)
    A = TridiagonalMatrix(lower, diag, upper)
    rhs = rng.standard_normal(n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ref = solve_banded((1, 1), ab, rhs)
    np.testing.assert_allclose(thomas_solve(A, rhs), ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(A.todense() @ ref, rhs, atol=1e-12)


def test_thomas_singular_pivot():
    A = TridiagonalMatrix(np.array([0.0, 1.0, 1.0]), np.array([1.0, 1.0, 1.0]),
                          np.array([1.0, 1.0, 0.0]))
    with pytest.raises(SingularPivotError) as info:
        thomas_solve(A, np.ones(3))
    assert info.value.row == 1
    with pytest.raises(ValueError):
        thomas_solve(A, np.ones(4))


# ---------------------------------------------------------------- linearity

@settings(max_examples=40, deadline=None)
@given(M=st.integers(3, 80), a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**31))
def test_operators_are_linear(M, a, b, seed):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(0.0, 1.0, M)
    u, v = rng.standard_normal((2, M + 1))
    op = IntegralOperator.stationary(g, lambda y: np.exp(y))
    for f in (lambda w: laplacian(g, w), lambda w: gradient(g, w), op.apply_direct, op.apply_fast):
        lhs = f(a * u + b * v)
        rhs = a * f(u) + b * f(v)
        scale = 1 + np.max(np.abs(a * f(u))) + np.max(np.abs(b * f(v)))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale
