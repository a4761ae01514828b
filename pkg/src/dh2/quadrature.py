"""Panel quadrature: regular triangle rules and singular panel-pair rules.

Touching panel pairs are mapped by relative-coordinate transformations to
integrands that are analytic on the unit hypercube, so a tensor
Gauss-Legendre rule of order ``q`` per direction converges exponentially.
Disjoint pairs use the product of two collapsed triangle rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .geometry import SurfaceMesh

ADJ_DISJOINT, ADJ_VERTEX, ADJ_EDGE, ADJ_IDENTICAL = 0, 1, 2, 3


@lru_cache(maxsize=None)
def gauss_legendre_01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if q < 1:
        raise ValueError("quadrature order q must be >= 1")
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle ``conv{(0,0), (1,0), (1,1)}``.

    ``points`` are reference coordinates, ``weights`` sum to 1/2 (the
    reference area). The collapsed rule of order ``q`` integrates polynomials
    of total degree ``2q - 2`` exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    q: int

    @property
    def degree(self) -> int:
        return 2 * self.q - 2

    @property
    def barycentric(self) -> np.ndarray:
        """Barycentric coordinates with respect to the reference corners."""
        u, v = self.points[:, 0], self.points[:, 1]
        return np.stack([1.0 - u, u - v, v], axis=1)


@lru_cache(maxsize=None)
def triangle_rule(q: int) -> QuadratureRule:
    """Collapsed (Duffy) tensor Gauss rule with ``q * q`` points."""
    g, w = gauss_legendre_01(q)
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.stack([u.ravel(), (u * v).ravel()], axis=1)
    wts = (wu * wv * u).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, q)


def panel_quadrature(mesh: SurfaceMesh, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points (n, k, 3) and weights (n, k) for every panel."""
    rule = triangle_rule(q)
    c = mesh.corners
    u = rule.points[None, :, 0:1]
    v = rule.points[None, :, 1:2]
    pts = c[:, None, 0] + u * (c[:, None, 1] - c[:, None, 0]) + v * (c[:, None, 2] - c[:, None, 1])
    wts = 2.0 * mesh.areas[:, None] * rule.weights[None, :]
    return pts, wts


# ---------------------------------------------------------------------------
# singular rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def singular_rule(kind: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference points ``(xhat, yhat)`` and weights for a touching pair.

    Returns arrays ``xhat`` and ``yhat`` of shape (K, 2) and ``w`` of shape
    (K,) such that ``sum(w * f(xhat, yhat))`` approximates the integral of
    ``f`` over the product of two reference triangles, where the shared
    vertex is the reference origin and a shared edge is ``u[1] = 0``.
    """
    g, wg = gauss_legendre_01(q)
    mesh4 = np.meshgrid(g, g, g, g, indexing="ij")
    xi, e1, e2, e3 = (a.ravel() for a in mesh4)
    wmesh = np.meshgrid(wg, wg, wg, wg, indexing="ij")
    w = wmesh[0].ravel() * wmesh[1].ravel() * wmesh[2].ravel() * wmesh[3].ravel()

    if kind == ADJ_IDENTICAL:
        jac = xi**3 * e1**2 * e2
        maps = [
            ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
            ((xi * (1 - e1 * e2 * e3), xi * (1 - e1)), (xi, xi * (1 - e1 + e1 * e2))),
            ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
            ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * (1 - e2 + e2 * e3))),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
            ((xi, xi * e1 * (1 - e2)), (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3))),
        ]
        jacs = [jac] * 6
    elif kind == ADJ_EDGE:
        jac = xi**3 * e1**2
        maps = [
            ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
            ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3))),
            ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3)),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1)),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2)),
        ]
        jacs = [jac] + [jac * e2] * 4
    elif kind == ADJ_VERTEX:
        jac = xi**3 * e2
        maps = [
            ((xi, xi * e1), (xi * e2, xi * e2 * e3)),
            ((xi * e2, xi * e2 * e3), (xi, xi * e1)),
        ]
        jacs = [jac, jac]
    else:
        raise ValueError(f"no singular rule for adjacency {kind}")

    xh = np.concatenate([np.stack(m[0], axis=1) for m in maps])
    yh = np.concatenate([np.stack(m[1], axis=1) for m in maps])
    ww = np.concatenate([w * j for j in jacs])
    for a in (xh, yh, ww):
        a.setflags(write=False)
    return xh, yh, ww


def classify_pairs(mesh: SurfaceMesh, i: np.ndarray, j: np.ndarray):
    """Adjacency kind of each pair plus vertex orderings for the singular rules.

    Returns ``kind`` and reordered vertex index arrays ``vi``, ``vj``
    (shape (N, 3)) such that shared vertices come first and in the same
    order in both panels.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    pi, pj = mesh.panels[i], mesh.panels[j]
    eq = pi[:, :, None] == pj[:, None, :]
    nshared = eq.sum(axis=(1, 2))
    kind = np.where(i == j, ADJ_IDENTICAL, np.minimum(nshared, 2))
    vi, vj = pi.copy(), pj.copy()
    for idx in np.flatnonzero((kind == ADJ_EDGE) | (kind == ADJ_VERTEX)):
        a, b = list(pi[idx]), list(pj[idx])
        common = [v for v in a if v in b]
        vi[idx] = common + [v for v in a if v not in common]
        vj[idx] = common + [v for v in b if v not in common]
    return kind, vi, vj


def _map(verts: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # verts (N, 3, 3), ref (K, 2) -> (N, K, 3)
    v0, v1, v2 = verts[:, None, 0], verts[:, None, 1], verts[:, None, 2]
    return v0 + ref[None, :, 0:1] * (v1 - v0) + ref[None, :, 1:2] * (v2 - v1)


def singular_integrals(kernel, mesh: SurfaceMesh, kind: int, vi: np.ndarray, vj: np.ndarray,
                       q: int, chunk: int = 256) -> np.ndarray:
    """Integrals of ``kernel(x, y)`` over touching pairs of one adjacency kind."""
    xh, yh, w = singular_rule(kind, q)
    out = np.empty(len(vi), dtype=complex)
    verts = mesh.vertices
    for start in range(0, len(vi), chunk):
        sl = slice(start, start + chunk)
        ti, tj = verts[vi[sl]], verts[vj[sl]]
        jac = 4.0 * _area(ti) * _area(tj)
        x = _map(ti, xh)
        y = _map(tj, yh)
        vals = kernel(x, y)
        out[sl] = jac * (vals @ w)
    return out


def _area(t: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)


def panel_pair_integral(kernel, mesh: SurfaceMesh, i: int, j: int, q: int = 5) -> complex:
    """Approximate the double surface integral of ``kernel`` over panels ``i`` and ``j``.

    ``kernel(x, y)`` receives broadcastable arrays of points with a trailing
    axis of length 3 and returns the kernel values.
    """
    if q < 1:
        raise ValueError("quadrature order q must be >= 1")
    kind, vi, vj = classify_pairs(mesh, np.array([i]), np.array([j]))
    if kind[0] != ADJ_DISJOINT:
        return complex(singular_integrals(kernel, mesh, int(kind[0]), vi, vj, q)[0])
    pts, wts = panel_quadrature(mesh, q)
    x = pts[i][:, None, :]
    y = pts[j][None, :, :]
    vals = kernel(x, y)
    return complex(np.einsum("a,ab,b->", wts[i], vals, wts[j]))


# ---------------------------------------------------------------------------
# Helmholtz kernel, compiled loops for regular pairs
# ---------------------------------------------------------------------------

def helmholtz_kernel(zeta: complex):
    """``(x, y) -> exp(-zeta |x - y|) / (4 pi |x - y|)`` on point arrays."""
    zeta = complex(zeta)

    def k(x, y):
        r = np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)
        return np.exp(-zeta * r) / (4.0 * np.pi * r)

    return k


@numba.njit(cache=True, fastmath=False)
def _regular_pairs(pts, wts, rows, cols, zr, zi, out):
    nq = pts.shape[1]
    inv4pi = 1.0 / (4.0 * np.pi)
    for k in range(rows.shape[0]):
        i = rows[k]
        j = cols[k]
        sr = 0.0
        si = 0.0
        for a in range(nq):
            xa0 = pts[i, a, 0]
            xa1 = pts[i, a, 1]
            xa2 = pts[i, a, 2]
            wa = wts[i, a]
            for b in range(nq):
                d0 = xa0 - pts[j, b, 0]
                d1 = xa1 - pts[j, b, 1]
                d2 = xa2 - pts[j, b, 2]
                r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                f = wa * wts[j, b] * np.exp(-zr * r) * inv4pi / r
                ph = zi * r
                sr += f * np.cos(ph)
                si -= f * np.sin(ph)
        out[k] = sr + 1j * si


@numba.njit(cache=True)
def _regular_dense_upper(pts, wts, zr, zi, out):
    n = pts.shape[0]
    nq = pts.shape[1]
    inv4pi = 1.0 / (4.0 * np.pi)
    for i in range(n):
        for j in range(i + 1, n):
            sr = 0.0
            si = 0.0
            for a in range(nq):
                xa0 = pts[i, a, 0]
                xa1 = pts[i, a, 1]
                xa2 = pts[i, a, 2]
                wa = wts[i, a]
                for b in range(nq):
                    d0 = xa0 - pts[j, b, 0]
                    d1 = xa1 - pts[j, b, 1]
                    d2 = xa2 - pts[j, b, 2]
                    r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                    f = wa * wts[j, b] * np.exp(-zr * r) * inv4pi / r
                    ph = zi * r
                    sr += f * np.cos(ph)
                    si -= f * np.sin(ph)
            v = sr + 1j * si
            out[i, j] = v
            out[j, i] = v


@numba.njit(cache=True)
def _regular_dense_upper_multi(pts, wts, zr, zi, out):
    # several frequencies with a common imaginary part share r, cos and sin
    n = pts.shape[0]
    nq = pts.shape[1]
    nz = zr.shape[0]
    inv4pi = 1.0 / (4.0 * np.pi)
    sr = np.empty(nz)
    si = np.empty(nz)
    for i in range(n):
        for j in range(i + 1, n):
            sr[:] = 0.0
            si[:] = 0.0
            for a in range(nq):
                xa0 = pts[i, a, 0]
                xa1 = pts[i, a, 1]
                xa2 = pts[i, a, 2]
                wa = wts[i, a]
                for b in range(nq):
                    d0 = xa0 - pts[j, b, 0]
                    d1 = xa1 - pts[j, b, 1]
                    d2 = xa2 - pts[j, b, 2]
                    r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                    f = wa * wts[j, b] * inv4pi / r
                    c = f * np.cos(zi * r)
                    s = f * np.sin(zi * r)
                    for z in range(nz):
                        e = np.exp(-zr[z] * r)
                        sr[z] += e * c
                        si[z] -= e * s
            for z in range(nz):
                v = sr[z] + 1j * si[z]
                out[z, i, j] = v
                out[z, j, i] = v


def helmholtz_pair_entries(mesh: SurfaceMesh, zeta: complex, rows: np.ndarray,
                           cols: np.ndarray, q: int = 5) -> np.ndarray:
    """Galerkin entries ``K[rows[k], cols[k]]`` for piecewise constant basis functions."""
    if q < 1:
        raise ValueError("quadrature order q must be >= 1")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    # the kernel is symmetric; evaluating (min, max) makes K[i, j] and K[j, i] identical
    rows, cols = np.minimum(rows, cols), np.maximum(rows, cols)
    out = np.empty(len(rows), dtype=complex)
    if len(rows) == 0:
        return out
    zeta = complex(zeta)
    kind, vi, vj = classify_pairs(mesh, rows, cols)
    regular = np.flatnonzero(kind == ADJ_DISJOINT)
    if len(regular):
        pts, wts = panel_quadrature(mesh, q)
        vals = np.empty(len(regular), dtype=complex)
        _regular_pairs(pts, wts, rows[regular], cols[regular], zeta.real, zeta.imag, vals)
        out[regular] = vals
    kern = helmholtz_kernel(zeta)
    for k in (ADJ_VERTEX, ADJ_EDGE, ADJ_IDENTICAL):
        sel = np.flatnonzero(kind == k)
        if len(sel):
            out[sel] = singular_integrals(kern, mesh, k, vi[sel], vj[sel], q)
    return out


def helmholtz_dense(mesh: SurfaceMesh, zeta: complex, q: int = 5) -> np.ndarray:
    """Full Galerkin matrix; regular entries are computed once per unordered pair."""
    n = mesh.n_panels
    zeta = complex(zeta)
    out = np.zeros((n, n), dtype=complex)
    pts, wts = panel_quadrature(mesh, q)
    _regular_dense_upper(pts, wts, zeta.real, zeta.imag, out)
    touch = mesh.touching_pairs()
    upper = touch[touch[:, 0] <= touch[:, 1]]
    vals = helmholtz_pair_entries(mesh, zeta, upper[:, 0], upper[:, 1], q)
    out[upper[:, 0], upper[:, 1]] = vals
    out[upper[:, 1], upper[:, 0]] = vals
    return out


def helmholtz_dense_many(mesh: SurfaceMesh, zetas, q: int = 5) -> np.ndarray:
    """Dense matrices for several frequencies, shape (len(zetas), n, n).

    Frequencies sharing one imaginary part are assembled in a single sweep.
    """
    zetas = [complex(z) for z in zetas]
    n = mesh.n_panels
    out = np.zeros((len(zetas), n, n), dtype=complex)
    if len({z.imag for z in zetas}) != 1:
        for k, z in enumerate(zetas):
            out[k] = helmholtz_dense(mesh, z, q)
        return out
    pts, wts = panel_quadrature(mesh, q)
    zr = np.array([z.real for z in zetas])
    _regular_dense_upper_multi(pts, wts, zr, zetas[0].imag, out)
    touch = mesh.touching_pairs()
    upper = touch[touch[:, 0] <= touch[:, 1]]
    for k, z in enumerate(zetas):
        vals = helmholtz_pair_entries(mesh, z, upper[:, 0], upper[:, 1], q)
        out[k, upper[:, 0], upper[:, 1]] = vals
        out[k, upper[:, 1], upper[:, 0]] = vals
    return out
