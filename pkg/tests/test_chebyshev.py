import numpy as np
import pytest

from dh2.chebyshev import (ChebGrid, apply_kron, cheb_nodes, lagrange_1d, lebesgue_constant,
                           transfer_matrix)


@pytest.mark.parametrize("m", [0, 1, 4, 9])
def test_nodes_are_chebyshev_roots(m):
    x = cheb_nodes(m)
    assert len(x) == m + 1
    np.testing.assert_allclose(np.polynomial.chebyshev.chebval(x, [0] * (m + 1) + [1]), 0, atol=1e-13)


@pytest.mark.parametrize("m", [1, 3, 7])
def test_lagrange_cardinal(m):
    L = lagrange_1d(m, cheb_nodes(m))
    np.testing.assert_allclose(L, np.eye(m + 1), atol=1e-14)
    x = np.linspace(-1, 1, 37)
    np.testing.assert_allclose(lagrange_1d(m, x).sum(axis=1), 1.0, atol=1e-13)


@pytest.mark.parametrize("m", [1, 2, 5, 10, 20])
def test_lebesgue_constant_bounds(m):
    lam = lebesgue_constant(m)
    assert 1.0 <= lam <= 2 / np.pi * np.log(m + 1) + 1.0 + 1e-9


def test_polynomial_reproduction_3d():
    rng = np.random.default_rng(0)
    m = 4
    g = ChebGrid(m, [0.5, -1.0, 2.0], [1.5, 0.0, 2.5])
    coef = rng.normal(size=(m + 1, m + 1, m + 1))

    def f(p):
        return np.polynomial.polynomial.polyval3d(p[:, 0], p[:, 1], p[:, 2], coef)

    x = g.lo + rng.random((100, 3)) * (g.hi - g.lo)
    np.testing.assert_allclose(g.interpolate(f(g.points), x), f(x), rtol=1e-10, atol=1e-10)


def test_transfer_identity():
    rng = np.random.default_rng(3)
    parent = ChebGrid(3, [0, 0, 0], [2, 1, 1])
    child = ChebGrid(4, [0, 0, 0], [1, 1, 1])
    T = transfer_matrix(parent, child).dense()
    x = child.lo + rng.random((50, 3)) * (child.hi - child.lo)
    np.testing.assert_allclose(child.lagrange_all(x) @ T, parent.lagrange_all(x), atol=1e-12)
    np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-13)


def test_transfer_rejects_lower_child_order():
    with pytest.raises(ValueError):
        transfer_matrix(ChebGrid(4, [0, 0, 0], [1, 1, 1]), ChebGrid(3, [0, 0, 0], [1, 1, 1]))


@pytest.mark.parametrize("transpose", [False, True])
def test_apply_kron_matches_dense(transpose):
    rng = np.random.default_rng(1)
    f = [rng.normal(size=(3, 4)), rng.normal(size=(2, 5)), rng.normal(size=(4, 3))]
    K = np.kron(np.kron(f[0], f[1]), f[2])
    if transpose:
        K = K.T
    x = rng.normal(size=(K.shape[1], 2))
    np.testing.assert_allclose(apply_kron(f, x, transpose=transpose), K @ x, rtol=1e-12)


def test_flat_box():
    g = ChebGrid(3, [0, 0, 1], [1, 1, 1])
    assert g.flat[2] and not g.flat[0]
    x = np.array([[0.3, 0.6, 1.0]])
    assert g.lagrange_all(x).sum() == pytest.approx(1.0)
