import math

import numpy as np
import pytest

from dh2.chebyshev import ChebGrid
from dh2.kernel import (ErrorBoundConstants, block_base_order, check_frequency, coupling_matrix,
                        fixed_schedule, green, green_modulated, interpolated_kernel,
                        local_error_bound, nearfield_only_threshold, select_orders,
                        variable_schedule)
from dh2.partition import AdmissibilityParams


def test_check_frequency():
    assert check_frequency(2) == 2 + 0j
    with pytest.raises(ValueError):
        check_frequency(-1 + 1j)
    with pytest.raises(ValueError):
        check_frequency(0)


def test_green_values():
    z = np.array([0.0, 3.0, 4.0])
    assert green(1j, z) == pytest.approx(np.exp(-5j) / (20 * np.pi))
    assert green(2.0, z) == pytest.approx(np.exp(-10.0) / (20 * np.pi))
    with pytest.raises(ValueError):
        green(1j, np.zeros(3))


def test_modulation_identity():
    rng = np.random.default_rng(0)
    zeta = 1.5 + 7j
    z = rng.normal(size=(100, 3))
    c = rng.normal(size=3)
    c /= np.linalg.norm(c)
    lhs = green(zeta, z)
    rhs = np.exp(-1j * zeta.imag * (z @ c)) * green_modulated(zeta, z, c)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-14)


def test_coupling_matrix_shape_and_values():
    gt = ChebGrid(2, [0, 0, 0], [1, 1, 1])
    gs = ChebGrid(3, [3, 0, 0], [4, 1, 1])
    c = np.array([-1.0, 0, 0])
    S = coupling_matrix(gt, gs, 1 + 2j, c)
    assert S.shape == (27, 64)
    assert S[5, 7] == pytest.approx(green_modulated(1 + 2j, gt.points[5] - gs.points[7], c))


def test_coupling_matrix_rejects_overlap():
    g = ChebGrid(2, [0, 0, 0], [1, 1, 1])
    with pytest.raises(ValueError):
        coupling_matrix(g, g, 1j, [1.0, 0, 0])


def test_interpolation_exact_at_nodes():
    gt = ChebGrid(3, [0, 0, 0], [1, 1, 1])
    gs = ChebGrid(3, [4, 0, 0], [5, 1, 1])
    zeta, c = 2 + 5j, np.array([-1.0, 0, 0])
    x, y = gt.points[:5], gs.points[10:15]
    np.testing.assert_allclose(interpolated_kernel(gt, gs, zeta, c, x, y), green(zeta, x - y), rtol=1e-12)


def test_constants():
    k = ErrorBoundConstants.from_eta(10, 2, 0.5)
    assert k.rho0 > 1 and k.alpha > 1 and k.C0 > k.C1 > 0
    assert k.sigma == pytest.approx(0.25)
    with pytest.raises(ValueError):
        ErrorBoundConstants.from_eta(10, 2, 1.0)


def test_local_error_bound_monotone():
    k = ErrorBoundConstants.from_eta(10, 2, 0.5)
    b = [local_error_bound(2.0, k, m, 2 + 2j) for m in range(6)]
    assert all(b1 < b0 for b0, b1 in zip(b, b[1:]))
    assert local_error_bound(2.0, k, 3, 4 + 2j) < local_error_bound(2.0, k, 3, 2 + 2j)


def test_block_base_order():
    # ceil(2 * ln(1e4) - 1 * 3 * 1) = ceil(15.42) = 16
    assert block_base_order(1.0, 3 + 1j, 1e-4, 2.0, 1.0) == 16
    assert block_base_order(100.0, 3 + 1j, 1e-4, 2.0, 1.0) == -1


class _FakePartition:
    def __init__(self, levels, dist, far, depth, zeta):
        self.level = np.asarray(levels)
        self.dist = np.asarray(dist, float)
        self.far = np.asarray(far, bool)
        self.depth = depth
        self.params = AdmissibilityParams(zeta=zeta)


def test_select_orders_monotone():
    P = _FakePartition([1, 2, 2, 3, 3], [2.0, 1.0, 0.5, 0.2, 0.4], [1, 1, 1, 1, 1], 4, 5 + 1j)
    S = select_orders(P, 1e-3, 1.0, 1.0)
    assert np.all(np.diff(S.level_orders) >= 0)
    assert S.level_orders[0] == -1
    expected = [math.ceil(math.log(1e3) - 5 * d) for d in (2.0, 0.5, 0.2)]
    assert S.level_orders[1] == -1 and S.level_orders[2] == expected[1] and S.level_orders[3] == expected[2]
    assert S.level_orders[4] == S.level_orders[3]


def test_select_orders_validates_eps():
    P = _FakePartition([1], [1.0], [1], 1, 1j)
    with pytest.raises(ValueError):
        select_orders(P, 0.5, 1.0, 1.0, h_min=0.1)
    with pytest.raises(ValueError):
        select_orders(P, 1e-3, -1.0, 1.0)


def test_threshold_zeroes_orders():
    h = 0.05
    thr = nearfield_only_threshold(h, 1e-6, 3.0, 0.5, 2.0)
    P = _FakePartition([2, 3], [h / 2.0, 0.3], [1, 1], 3, complex(thr * 1.01, 4))
    S = select_orders(P, 1e-6, 3.0, 0.5)
    assert np.all(S.level_orders == -1)


def test_variable_schedule_defaults():
    P = _FakePartition([2, 3], [0.5, 0.2], [1, 1], 3, 1 + 8j)
    S = variable_schedule(P, 0.05)
    assert S.mode == "variable" and S.eps == pytest.approx(1e-6)
    assert np.all(np.diff(S.level_orders) >= 0) and S.level_orders[-1] > 0


def test_fixed_schedule():
    S = fixed_schedule(3, 5)
    np.testing.assert_array_equal(S.level_orders, [5, 5, 5, 5])
    with pytest.raises(ValueError):
        fixed_schedule(3, -2)
