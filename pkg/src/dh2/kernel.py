"""Helmholtz kernel with complex frequency, directional modulation and orders.

The kernel is ``G(zeta, z) = exp(-zeta |z|) / (4 pi |z|)`` with
``Re zeta >= 0``. Splitting off the plane wave ``exp(-i Im(zeta) <z, c>)``
leaves the modulated kernel ``G_c``, which is smooth on directionally
admissible blocks and is interpolated by tensor Chebyshev polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .chebyshev import ChebGrid, lebesgue_table


def check_frequency(zeta) -> complex:
    """Validate a complex frequency (``Re zeta >= 0``, ``zeta != 0``)."""
    zeta = complex(zeta)
    if zeta.real < 0:
        raise ValueError(f"Re(zeta) must be non-negative, got {zeta.real}")
    if zeta == 0:
        raise ValueError("zeta = 0 is not supported")
    return zeta


def _norms(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("kernel evaluated at z = 0")
    return r


def green(zeta, z) -> np.ndarray | complex:
    """``exp(-zeta |z|) / (4 pi |z|)`` for vectors ``z`` (..., 3)."""
    zeta = complex(zeta)
    r = _norms(z)
    out = np.exp(-zeta * r) / (4.0 * np.pi * r)
    return out[()] if np.ndim(out) == 0 else out


def green_modulated(zeta, z, c) -> np.ndarray | complex:
    """``G_c(zeta, z) = exp(-Re(zeta) r) exp(-i Im(zeta) (r - <z, c>)) / (4 pi r)``."""
    zeta = complex(zeta)
    z = np.asarray(z, dtype=float)
    r = _norms(z)
    zc = z @ np.asarray(c, dtype=float)
    out = np.exp(-zeta.real * r - 1j * zeta.imag * (r - zc)) / (4.0 * np.pi * r)
    return out[()] if np.ndim(out) == 0 else out


def coupling_matrix(grid_t: ChebGrid, grid_s: ChebGrid, zeta, c) -> np.ndarray:
    """Expansion coefficients ``G_c(zeta, xi_{mu,t} - xi_{nu,s})``, shape (k_t, k_s)."""
    diff = grid_t.points[:, None, :] - grid_s.points[None, :, :]
    try:
        return green_modulated(zeta, diff, c)
    except ValueError:
        raise ValueError("interpolation points of the two boxes coincide; block is not admissible") from None


def interpolated_kernel(grid_t: ChebGrid, grid_s: ChebGrid, zeta, c, x, y,
                        gamma: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the block approximation ``exp(-i Im(zeta) <x - y, c>) I(G_c)(x - y)``."""
    zeta = complex(zeta)
    if gamma is None:
        gamma = coupling_matrix(grid_t, grid_s, zeta, c)
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    lt = grid_t.lagrange_all(x)
    ls = grid_s.lagrange_all(y)
    interp = ((lt @ gamma) * ls).sum(axis=1)
    return np.exp(-1j * zeta.imag * ((x - y) @ np.asarray(c, dtype=float))) * interp


# ---------------------------------------------------------------------------
# error bound constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorBoundConstants:
    """Constants of the local interpolation error bound for parameters ``eta``.

    ``C1`` and ``C0`` contain suprema over the order ``m``; they are taken
    over ``m = 1 .. m_scan`` with numerically measured Lebesgue constants.
    """

    eta1: float
    eta2: float
    eta3: float
    beta_hat: float
    rho0: float
    alpha: float
    sigma: float
    C1: float
    C0: float

    @classmethod
    def from_eta(cls, eta1: float, eta2: float, eta3: float, m_scan: int = 200) -> "ErrorBoundConstants":
        if not 0.0 < eta3 < 1.0:
            raise ValueError("eta3 must lie in (0, 1)")
        if eta1 <= 0 or eta2 <= 0:
            raise ValueError("eta1 and eta2 must be positive")
        beta = min(1.0, (math.sqrt(1.5) - 1.0) * 2.0 / eta2,
                   2.0 * (1.0 - eta3) / (eta2**2 * (2.0 * math.sqrt(6.0) + 5.0)))
        rho0 = 1.0 + beta
        alpha = (math.sqrt(beta**2 + 1.0) + beta) / (beta + 1.0)
        lam = lebesgue_table(m_scan)[1:]
        m = np.arange(1, m_scan + 1)
        decay = alpha ** (m / 2.0)
        C1 = math.exp(eta1) * float(np.max(8.0 * (lam + 1.0) / ((rho0 - 1.0) * decay)))
        C0 = float(np.max(6.0 * lam**5 / decay)) * C1
        return cls(eta1, eta2, eta3, beta, rho0, alpha, (1.0 - eta3) / 2.0, C1, C0)


def local_error_bound(dist: float, consts: ErrorBoundConstants, m: int, zeta) -> float:
    """Right-hand side ``C0 exp(-sigma Re(zeta) dist) / (4 pi dist) * rho0**(-m)``."""
    zeta = complex(zeta)
    if m < 0:
        raise ValueError("order must be non-negative")
    return (consts.C0 * math.exp(-consts.sigma * zeta.real * dist)
            / (4.0 * math.pi * dist) * consts.rho0 ** (-m))


# ---------------------------------------------------------------------------
# expansion orders
# ---------------------------------------------------------------------------

def block_base_order(dist, zeta, eps: float, c0: float, sigma_tilde: float) -> np.ndarray:
    """Target order per block: ``ceil(c0 log(1/eps) - sigma_tilde Re(zeta) dist)`` or -1."""
    zeta = complex(zeta)
    budget = c0 * math.log(1.0 / eps)
    damp = sigma_tilde * zeta.real * np.asarray(dist, dtype=float)
    # guard the ceiling against round-off in an otherwise integral budget
    val = np.ceil(np.round(budget - damp, 12)).astype(np.int64)
    return np.where(budget >= damp, val, -1)


@dataclass
class OrderSchedule:
    """Per-level interpolation degrees ``m_l`` (``-1`` means no expansion)."""

    level_orders: np.ndarray
    mode: Literal["fixed", "variable"] = "fixed"
    block_orders: np.ndarray | None = None     # base order per far block (variable mode)
    eps: float | None = None
    c0: float | None = None
    sigma_tilde: float | None = None
    meta: dict = field(default_factory=dict)

    def order(self, level: int) -> int:
        return int(self.level_orders[level])

    @property
    def max_order(self) -> int:
        return int(self.level_orders.max()) if len(self.level_orders) else -1


def fixed_schedule(depth: int, m: int) -> OrderSchedule:
    if m < -1:
        raise ValueError("order must be >= -1")
    return OrderSchedule(np.full(depth + 1, m, dtype=np.int64), mode="fixed")


def eps_upper_bound(h_min: float, eta2: float) -> float:
    return min(math.exp(-1.0), h_min / eta2)


def select_orders(partition, eps: float, c0: float, sigma_tilde: float,
                  h_min: float | None = None) -> OrderSchedule:
    """Variable-order schedule from the far blocks of ``partition``.

    Per block target orders are maximised per level and then made
    non-decreasing towards the leaves. When ``h_min`` is given, ``eps`` is
    checked against ``(0, min(1/e, h_min / eta2)]``.
    """
    params = partition.params
    if not eps > 0:
        raise ValueError("eps must be positive")
    if h_min is not None and eps > eps_upper_bound(h_min, params.eta2) * (1 + 1e-12):
        raise ValueError(f"eps={eps} exceeds min(1/e, h_min/eta2)={eps_upper_bound(h_min, params.eta2)}")
    if c0 <= 0 or sigma_tilde <= 0:
        raise ValueError("c0 and sigma_tilde must be positive")
    far = partition.far
    base = block_base_order(partition.dist[far], params.zeta, eps, c0, sigma_tilde)
    depth = partition.depth
    level_base = np.full(depth + 1, -1, dtype=np.int64)
    np.maximum.at(level_base, partition.level[far], base)
    level_orders = np.maximum.accumulate(level_base)
    return OrderSchedule(level_orders, mode="variable", block_orders=base,
                         eps=eps, c0=c0, sigma_tilde=sigma_tilde,
                         meta={"level_base": level_base})


def default_order_constants(consts: ErrorBoundConstants, eps: float,
                            delta_min: float) -> tuple[float, float]:
    """``(c0, sigma_tilde)`` that make the local bound equal ``eps`` on the closest far blocks.

    Solves ``C0 exp(-sigma Re(zeta) d) / (4 pi d) rho0**(-m) <= eps`` for ``m``
    with ``d`` bounded below by ``delta_min``.
    """
    log_rho = math.log(consts.rho0)
    total = math.log(consts.C0 / (4.0 * math.pi * eps * delta_min)) / log_rho
    c0 = total / math.log(1.0 / eps)
    return c0, consts.sigma / log_rho


def nearfield_only_threshold(h_min: float, eps: float, c0: float, sigma_tilde: float,
                             eta2: float) -> float:
    """``Re(zeta)`` above which every far block gets order -1."""
    return c0 * eta2 / sigma_tilde * math.log(1.0 / eps) / h_min


def default_eps(h_min: float, eta2: float) -> float:
    return min(1e-6, eps_upper_bound(h_min, eta2))


def variable_schedule(partition, h_min: float, eps: float | None = None, c0: float | None = None,
                      sigma_tilde: float | None = None,
                      consts: ErrorBoundConstants | None = None) -> OrderSchedule:
    """Variable-order schedule with defaults derived from the local error bound.

    Missing ``c0`` / ``sigma_tilde`` come from :func:`default_order_constants`
    with ``delta_min`` bounded below by ``h_min / eta2``.
    """
    p = partition.params
    if eps is None:
        eps = default_eps(h_min, p.eta2)
    if c0 is None or sigma_tilde is None:
        if consts is None:
            consts = ErrorBoundConstants.from_eta(p.eta1, p.eta2, p.eta3)
        d0, s0 = default_order_constants(consts, eps, h_min / p.eta2)
        c0 = d0 if c0 is None else c0
        sigma_tilde = s0 if sigma_tilde is None else sigma_tilde
    return select_orders(partition, eps, c0, sigma_tilde, h_min=h_min)


def default_threshold(h_min: float, eta: tuple[float, float, float],
                      eps: float | None = None) -> float:
    """Nearfield-only threshold for the default constants."""
    eta1, eta2, eta3 = eta
    eps = default_eps(h_min, eta2) if eps is None else eps
    consts = ErrorBoundConstants.from_eta(eta1, eta2, eta3)
    c0, st = default_order_constants(consts, eps, h_min / eta2)
    return nearfield_only_threshold(h_min, eps, c0, st, eta2)
