"""Tensor Chebyshev interpolation on axis-parallel boxes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

# box edges shorter than this (relative to the box size) are treated as flat
FLAT_TOL = 1e-13


@lru_cache(maxsize=None)
def cheb_nodes(m: int) -> np.ndarray:
    """The ``m + 1`` Chebyshev points ``cos((2i + 1) pi / (2m + 2))``, descending."""
    if m < 0:
        raise ValueError("order must be non-negative")
    i = np.arange(m + 1)
    x = np.cos((2 * i + 1) * np.pi / (2 * m + 2))
    x.setflags(write=False)
    return x


@lru_cache(maxsize=None)
def _bary_weights(m: int) -> np.ndarray:
    i = np.arange(m + 1)
    w = (-1.0) ** i * np.sin((2 * i + 1) * np.pi / (2 * m + 2))
    w.setflags(write=False)
    return w


def lagrange_1d(m: int, x) -> np.ndarray:
    """Values of all ``m + 1`` Lagrange polynomials at ``x``; shape ``x.shape + (m + 1,)``.

    Uses the second barycentric formula, exact at the nodes.
    """
    x = np.asarray(x, dtype=float)
    nodes = cheb_nodes(m)
    w = _bary_weights(m)
    diff = x[..., None] - nodes
    hit = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w / diff
        out = terms / terms.sum(axis=-1, keepdims=True)
    exact = hit.any(axis=-1)
    if np.any(exact):
        out[exact] = hit[exact].astype(float)
    return out


def lebesgue_constant(m: int, samples: int = 10_000) -> float:
    """Maximum of the Lebesgue function of ``m + 1`` Chebyshev points on [-1, 1]."""
    if m < 0:
        raise ValueError("order must be non-negative")
    x = np.linspace(-1.0, 1.0, samples)
    return float(np.abs(lagrange_1d(m, x)).sum(axis=1).max())


@lru_cache(maxsize=None)
def lebesgue_table(m_max: int, samples: int = 10_000) -> np.ndarray:
    t = np.array([lebesgue_constant(m, samples) for m in range(m_max + 1)])
    t.setflags(write=False)
    return t


@dataclass(frozen=True, eq=False)
class ChebGrid:
    """Tensor Chebyshev grid of order ``m`` (degree per axis) on the box ``[lo, hi]``.

    Tensor indices ``mu = (mu1, mu2, mu3)`` are flattened in C order,
    ``mu1 * (m+1)**2 + mu2 * (m+1) + mu3``. A box edge of zero width is
    mapped to the constant 0 and interpolated with a single node: along
    such an axis only ``mu_d = 0`` carries a non-zero Lagrange function.
    """

    m: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("grid order must be non-negative")
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(hi < lo):
            raise ValueError("box upper corner below lower corner")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self) -> int:
        return (self.m + 1) ** 3

    @cached_property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @cached_property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @cached_property
    def flat(self) -> np.ndarray:
        scale = max(float(np.abs(self.hi).max()), float(np.abs(self.lo).max()), 1.0)
        return self.half_width <= FLAT_TOL * scale

    def axis_nodes(self, d: int) -> np.ndarray:
        """Physical node coordinates along axis ``d``."""
        if self.flat[d]:
            return np.full(self.m + 1, self.center[d])
        return self.center[d] + self.half_width[d] * cheb_nodes(self.m)

    @cached_property
    def points(self) -> np.ndarray:
        """All tensor nodes, shape ((m+1)**3, 3)."""
        ax = [self.axis_nodes(d) for d in range(3)]
        g = np.meshgrid(*ax, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def to_reference(self, x) -> np.ndarray:
        """Affine pullback of points ``x`` (..., 3) to ``(-1, 1)**3``."""
        x = np.asarray(x, dtype=float)
        hw = np.where(self.flat, 1.0, self.half_width)
        return np.where(self.flat, 0.0, (x - self.center) / hw)

    def axis_lagrange(self, d: int, x) -> np.ndarray:
        """1D Lagrange values along axis ``d`` at coordinates ``x``; shape ``x.shape + (m+1,)``."""
        x = np.asarray(x, dtype=float)
        if self.flat[d]:
            out = np.zeros(x.shape + (self.m + 1,))
            out[..., 0] = 1.0
            return out
        return lagrange_1d(self.m, (x - self.center[d]) / self.half_width[d])

    def lagrange_all(self, x) -> np.ndarray:
        """All tensor Lagrange polynomials at points ``x`` (N, 3); shape (N, (m+1)**3)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        l0, l1, l2 = (self.axis_lagrange(d, x[:, d]) for d in range(3))
        return np.einsum("na,nb,nc->nabc", l0, l1, l2).reshape(len(x), -1)

    def lagrange_eval(self, mu, x) -> np.ndarray:
        """Value of the tensor Lagrange polynomial with index ``mu`` at points ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones(len(x))
        for d in range(3):
            out = out * self.axis_lagrange(d, x[:, d])[:, mu[d]]
        return out

    def flat_index(self, mu) -> int:
        k = self.m + 1
        return (mu[0] * k + mu[1]) * k + mu[2]

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Evaluate the interpolant with nodal ``values`` (k,) or (k, r) at points ``x``."""
        return self.lagrange_all(x) @ values


@dataclass(frozen=True)
class TransferMatrix:
    """Change of basis from a parent grid to a child grid.

    ``factors[d][nu_d, mu_d] = L^parent_{mu_d}(xi^child_{nu_d})`` along axis
    ``d``; the full matrix is their Kronecker product, indexed
    ``[child index nu, parent index mu]``. Each row of a factor sums to one.
    """

    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    parent_order: int
    child_order: int

    def dense(self) -> np.ndarray:
        f0, f1, f2 = self.factors
        return np.kron(np.kron(f0, f1), f2)

    def q(self, mu, nu) -> float:
        """Transfer coefficient ``q_{mu, nu} = L^parent_mu(xi^child_nu)``."""
        return float(np.prod([self.factors[d][nu[d], mu[d]] for d in range(3)]))


def transfer_matrix(parent: ChebGrid, child: ChebGrid) -> TransferMatrix:
    """Express the parent's Lagrange polynomials in the child's basis.

    Exact because the child order is at least the parent order, so every
    parent polynomial lies in the child's interpolation space.
    """
    if child.m < parent.m:
        raise ValueError(
            f"child order {child.m} below parent order {parent.m}; orders must increase towards the leaves")
    factors = tuple(parent.axis_lagrange(d, child.axis_nodes(d)) for d in range(3))
    for d in range(3):
        if child.flat[d]:
            # only the first child node carries a non-zero Lagrange function
            factors[d][1:] = 0.0
    return TransferMatrix(factors, parent.m, child.m)


def apply_kron(factors, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Apply ``kron(f0, f1, f2)`` (or its plain transpose) to ``x`` of shape (k_in, r)."""
    f0, f1, f2 = factors
    if transpose:
        f0, f1, f2 = f0.T, f1.T, f2.T
    r = x.shape[1]
    t = x.reshape(f0.shape[1], f1.shape[1], f2.shape[1], r)
    t = np.tensordot(f2, t, axes=([1], [2]))           # (c, a, b, r)
    t = np.tensordot(f1, t, axes=([1], [2]))           # (b, c, a, r)
    t = np.tensordot(f0, t, axes=([1], [2]))           # (a, b, c, r)
    return t.reshape(-1, r)
