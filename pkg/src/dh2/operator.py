"""Directional H2 operator: nearfield, cluster bases, coupling matrices, matvec.

Conventions. For a cluster ``t`` with grid ``xi_t`` and direction ``c`` the
column-side expansion functions are ``exp(+i k <x, c>) L^t_mu(x)`` with
``k = Im(zeta)``; the leaf coefficients are

    J^t_c[mu, j] = int_{tau_j} exp(+i k <x, c>) L^t_mu(x) dx.

A far block ``(t, s)`` with direction ``c`` is approximated by
``conj(J^t_c)^T gamma J^s_c`` with ``gamma[mu, nu] = G_c(xi_{mu,t} - xi_{nu,s})``.
For a son ``t'`` of ``t`` with son direction ``c' = sd(c)`` the parent
function is re-expanded on the son grid,

    exp(i k <x, c>) L^t_mu(x) ~ sum_nu T[nu, mu] exp(i k <x, c'>) L^t'_nu(x),
    T[nu, mu] = L^t_mu(xi_nu) exp(i k <xi_nu, c - c'>),

which is separable per axis and applied as a Kronecker product.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .chebyshev import ChebGrid, apply_kron
from .clustering import ClusterTree
from .directions import son_direction_map
from .geometry import SurfaceMesh
from .kernel import OrderSchedule, check_frequency, coupling_matrix
from .partition import BlockPartition
from .quadrature import helmholtz_dense, helmholtz_pair_entries, panel_quadrature

DENSE_LIMIT = 16384


# ---------------------------------------------------------------------------
# dense oracle and nearfield
# ---------------------------------------------------------------------------

def assemble_dense(mesh: SurfaceMesh, zeta, q: int = 5, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    """Full Galerkin matrix ``K[i, j] = (V b_j, b_i)``; refused above ``dense_limit``."""
    if mesh.n_panels > dense_limit:
        raise MemoryError(f"n={mesh.n_panels} exceeds the dense limit {dense_limit}")
    return helmholtz_dense(mesh, check_frequency(zeta), q)


def near_pairs(P: BlockPartition) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of all entries in near blocks."""
    cl = P.tree.clusters
    rows, cols = [], []
    for k in np.flatnonzero(~P.far):
        ti, si = cl[P.t[k]].indices, cl[P.s[k]].indices
        rows.append(np.repeat(ti, len(si)))
        cols.append(np.tile(si, len(ti)))
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def assemble_nearfield(mesh: SurfaceMesh, P: BlockPartition, zeta, q: int = 5,
                       dense: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse matrix holding ``K[i, j]`` for every ``(i, j)`` inside a near block.

    Entries are taken from ``dense`` when it is given, otherwise computed with
    the same quadrature as the dense matrix (each unordered pair once).
    """
    if q < 1:
        raise ValueError("quadrature order q must be >= 1")
    n = mesh.n_panels
    rows, cols = near_pairs(P)
    if dense is not None:
        vals = dense[rows, cols]
    else:
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        key, inv = np.unique(lo * n + hi, return_inverse=True)
        uvals = helmholtz_pair_entries(mesh, zeta, key // n, key % n, q)
        vals = uvals[inv]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# cluster basis
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ClusterBasis:
    """Directional cluster basis restricted to the (cluster, direction) pairs in use.

    ``needs[t]`` are the sorted direction indices (into the direction set of
    the cluster's level) for which coefficients of ``t`` are required.
    ``leaf[t]`` has shape (len(needs[t]), k_t, #t). ``transfer[t']`` maps
    each needed parent direction to the three complex 1D factors of ``T``.
    """

    tree: ClusterTree
    orders: np.ndarray                      # per cluster, -1 if unused
    grids: list
    needs: list[np.ndarray]
    leaf: dict[int, np.ndarray]
    transfer: dict[int, list]
    son_pos: dict[int, np.ndarray]          # position of sd(c) in needs[t'] per parent slot

    def position(self, t: int, c: int) -> int:
        return int(np.searchsorted(self.needs[t], c))

    @property
    def n_coefficients(self) -> int:
        return int(sum(len(self.needs[t]) * (self.orders[t] + 1) ** 3
                       for t in range(len(self.needs)) if len(self.needs[t])))

    @property
    def leaf_storage(self) -> int:
        return int(sum(a.size for a in self.leaf.values()))


def active_far_blocks(P: BlockPartition, schedule: OrderSchedule) -> np.ndarray:
    """Far blocks whose level order is non-negative."""
    far = np.flatnonzero(P.far)
    return far[schedule.level_orders[P.level[far]] >= 0]


def _needed_directions(P: BlockPartition, blocks: np.ndarray) -> list[np.ndarray]:
    tree = P.tree
    nc = len(tree.clusters)
    sets: list[set] = [set() for _ in range(nc)]
    for k in blocks:
        c = int(P.direction[k])
        sets[P.t[k]].add(c)
        sets[P.s[k]].add(c)
    sd = [son_direction_map(P.directions[l], P.directions[l + 1]) for l in range(len(P.directions) - 1)]
    for t in tree.clusters:              # fathers precede sons
        if sets[t.id] and t.sons:
            mapped = {int(sd[t.level][c]) for c in sets[t.id]}
            for s in t.sons:
                sets[s.id] |= mapped
    return [np.array(sorted(s), dtype=np.int64) for s in sets]


def assemble_leaf_basis(mesh: SurfaceMesh, tree: ClusterTree, directions, schedule: OrderSchedule,
                        zeta, q: int, needs: list[np.ndarray], grids: list) -> dict[int, np.ndarray]:
    """Leaf coefficients ``J^t_c`` for every leaf ``t`` and needed direction ``c``."""
    kappa = check_frequency(zeta).imag
    pts, wts = panel_quadrature(mesh, q)
    out = {}
    for t in tree.clusters:
        if not t.is_leaf or not len(needs[t.id]):
            continue
        x = pts[t.indices]                                      # (#t, g, 3)
        w = wts[t.indices]                                      # (#t, g)
        L = grids[t.id].lagrange_all(x.reshape(-1, 3)).reshape(x.shape[0], x.shape[1], -1)
        D = directions[t.level].directions[needs[t.id]]          # (d, 3)
        phase = np.exp(1j * kappa * np.einsum("jgx,dx->djg", x, D))
        out[t.id] = np.einsum("djg,jg,jgm->dmj", phase, w, L)
    return out


def _transfer_factors(parent: ChebGrid, child: ChebGrid, kappa: float, dc: np.ndarray):
    """Complex 1D factors ``[nu_d, mu_d]`` of ``T`` for a phase difference ``dc = c - c'``."""
    out = []
    for d in range(3):
        nodes = child.axis_nodes(d)
        f = parent.axis_lagrange(d, nodes).astype(complex)
        if child.flat[d]:
            f[1:] = 0.0
        f *= np.exp(1j * kappa * nodes * dc[d])[:, None]
        out.append(f)
    return out


def build_cluster_basis(mesh: SurfaceMesh, P: BlockPartition, schedule: OrderSchedule, zeta,
                        q: int = 5, blocks: np.ndarray | None = None) -> ClusterBasis:
    tree = P.tree
    zeta = check_frequency(zeta)
    kappa = zeta.imag
    if blocks is None:
        blocks = active_far_blocks(P, schedule)
    needs = _needed_directions(P, blocks)
    orders = np.array([schedule.level_orders[c.level] if len(needs[c.id]) else -1
                       for c in tree.clusters], dtype=np.int64)
    grids = [ChebGrid(int(orders[c.id]), c.lo, c.hi) if orders[c.id] >= 0 else None
             for c in tree.clusters]
    leaf = assemble_leaf_basis(mesh, tree, P.directions, schedule, zeta, q, needs, grids)
    transfer, son_pos = {}, {}
    for t in tree.clusters:
        if not len(needs[t.id]) or t.is_leaf:
            continue
        D, Dn = P.directions[t.level], P.directions[t.level + 1]
        sd = son_direction_map(D, Dn)[needs[t.id]]
        for s in t.sons:
            if orders[s.id] < orders[t.id]:
                raise ValueError("orders must not decrease towards the leaves")
            dc = D.directions[needs[t.id]] - Dn.directions[sd]
            transfer[s.id] = [_transfer_factors(grids[t.id], grids[s.id], kappa, v) for v in dc]
            son_pos[s.id] = np.searchsorted(needs[s.id], sd)
    return ClusterBasis(tree, orders, grids, needs, leaf, transfer, son_pos)


def forward_transform(basis: ClusterBasis, x: np.ndarray) -> list:
    """Coefficients ``xhat[t]`` of shape (len(needs[t]), k_t, r) for ``x`` of shape (n, r)."""
    tree = basis.tree
    xh: list = [None] * len(tree.clusters)
    for t in reversed(tree.clusters):            # sons before fathers
        nd = len(basis.needs[t.id])
        if not nd:
            continue
        if t.is_leaf:
            xh[t.id] = np.einsum("dmj,jr->dmr", basis.leaf[t.id], x[t.indices])
            continue
        k = basis.grids[t.id].size
        acc = np.zeros((nd, k, x.shape[1]), dtype=complex)
        for s in t.sons:
            pos = basis.son_pos[s.id]
            for a in range(nd):
                acc[a] += apply_kron(basis.transfer[s.id][a], xh[s.id][pos[a]], transpose=True)
        xh[t.id] = acc
    return xh


def backward_transform(basis: ClusterBasis, yh: list, n: int) -> np.ndarray:
    """Adjoint of :func:`forward_transform`: scatter coefficients to an (n, r) array."""
    tree = basis.tree
    r = next((a.shape[2] for a in yh if a is not None), 1)
    y = np.zeros((n, r), dtype=complex)
    yh = list(yh)
    for t in tree.clusters:                      # fathers before sons
        a = yh[t.id]
        if a is None:
            continue
        if t.is_leaf:
            y[t.indices] += np.einsum("dmj,dmr->jr", basis.leaf[t.id].conj(), a)
            continue
        for s in t.sons:
            pos = basis.son_pos[s.id]
            if yh[s.id] is None:
                yh[s.id] = np.zeros((len(basis.needs[s.id]), basis.grids[s.id].size, r), dtype=complex)
            for i in range(len(pos)):
                f = [g.conj() for g in basis.transfer[s.id][i]]
                yh[s.id][pos[i]] += apply_kron(f, a[i])
    return y


def basis_matrix(basis: ClusterBasis, t: int, a: int, memo: dict | None = None) -> np.ndarray:
    """Nested basis ``V`` of cluster ``t`` for its ``a``-th needed direction, shape (k_t, #t).

    ``V @ x[t.indices]`` equals the forward-transform coefficients of ``x``.
    """
    if memo is not None and (t, a) in memo:
        return memo[(t, a)]
    c = basis.tree.clusters[t]
    if c.is_leaf:
        V = basis.leaf[t][a]
    else:
        V = np.empty((basis.grids[t].size, c.size), dtype=complex)
        for s in c.sons:
            Vs = basis_matrix(basis, s.id, int(basis.son_pos[s.id][a]), memo)
            cols = np.searchsorted(c.indices, s.indices)
            V[:, cols] = apply_kron(basis.transfer[s.id][a], Vs, transpose=True)
    if memo is not None:
        memo[(t, a)] = V
    return V


# ---------------------------------------------------------------------------
# coupling matrices
# ---------------------------------------------------------------------------

class CouplingStore:
    """Coupling matrices of the active far blocks.

    Matrices are shared between blocks whose grids differ only by a
    translation (same order, same box widths, same relative offset and
    direction), which is the common case for congruent cluster boxes.
    Matrices are kept up to ``budget`` bytes; the rest are recomputed on
    every use.
    """

    def __init__(self, basis: ClusterBasis, P: BlockPartition, blocks: np.ndarray, zeta,
                 budget: float = 2e9):
        self.basis = basis
        self.P = P
        self.blocks = blocks
        self.zeta = complex(zeta)
        self.budget = budget
        self.cache: dict = {}
        self.block_key: list = []
        self.bytes = 0
        self.misses = 0
        for k in blocks:
            key = self._key(k)
            self.block_key.append(key)
            if key not in self.cache:
                size = basis.grids[P.t[k]].size * basis.grids[P.s[k]].size * 16
                if self.bytes + size <= budget:
                    self.cache[key] = self._compute(k)
                    self.bytes += size
                else:
                    self.cache[key] = None
                    self.misses += 1

    def _key(self, k):
        gt = self.basis.grids[self.P.t[k]]
        gs = self.basis.grids[self.P.s[k]]
        scale = max(1.0, float(np.abs(gt.hi).max()))
        r = lambda v: tuple(np.round(np.asarray(v) / (1e-10 * scale)).astype(np.int64))
        return (gt.m, gs.m, r(gt.hi - gt.lo), r(gs.hi - gs.lo), r(gt.lo - gs.lo),
                int(self.P.level[k]), int(self.P.direction[k]))

    def _compute(self, k) -> np.ndarray:
        P = self.P
        return coupling_matrix(self.basis.grids[P.t[k]], self.basis.grids[P.s[k]], self.zeta,
                               P.direction_vector(k))

    def get(self, i: int) -> np.ndarray:
        g = self.cache[self.block_key[i]]
        return self._compute(self.blocks[i]) if g is None else g

    @property
    def n_unique(self) -> int:
        return len(self.cache)


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DH2Operator:
    mesh: SurfaceMesh
    partition: BlockPartition
    schedule: OrderSchedule
    zeta: complex
    near: sp.csr_matrix
    basis: ClusterBasis
    couplings: CouplingStore
    expanded: sp.csr_matrix | None = None     # far blocks stored as explicit entries
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mesh.n_panels

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    dtype = np.dtype(complex)

    def _far(self, x: np.ndarray, adjoint: bool) -> np.ndarray:
        P, basis, store = self.partition, self.basis, self.couplings
        if not len(store.blocks):
            return np.zeros(x.shape, dtype=complex)
        xh = forward_transform(basis, x)
        yh: list = [None] * len(xh)
        for i, k in enumerate(store.blocks):
            t, s = int(P.t[k]), int(P.s[k])
            c = int(P.direction[k])
            g = store.get(i)
            if adjoint:
                t, s = s, t
                g = g.conj().T
            src = xh[s][basis.position(s, c)]
            if yh[t] is None:
                yh[t] = np.zeros((len(basis.needs[t]), basis.grids[t].size, x.shape[1]), dtype=complex)
            yh[t][basis.position(t, c)] += g @ src
        return backward_transform(basis, yh, self.n)

    def _apply(self, x, adjoint: bool) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.n or x.ndim > 2:
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        vec = x.ndim == 1
        X = x.reshape(self.n, -1).astype(complex)
        near = self.near.conj().T if adjoint else self.near
        Y = near @ X + self._far(X, adjoint)
        if self.expanded is not None:
            Y += (self.expanded.conj().T if adjoint else self.expanded) @ X
        return Y[:, 0] if vec else Y

    def matvec(self, x) -> np.ndarray:
        """``K~ x`` for a vector (n,) or a block of vectors (n, r)."""
        return self._apply(x, False)

    def rmatvec(self, x) -> np.ndarray:
        """``K~^H x``."""
        return self._apply(x, True)

    def __matmul__(self, x):
        return self.matvec(x)

    def to_dense(self) -> np.ndarray:
        return self.matvec(np.eye(self.n, dtype=complex))

    def aslinearoperator(self):
        from scipy.sparse.linalg import LinearOperator
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec,
                              matmat=self.matvec, dtype=complex)

    # -- statistics --------------------------------------------------------

    def level_stats(self) -> list[dict]:
        P, basis, store = self.partition, self.basis, self.couplings
        depth = P.depth
        rows_near = np.zeros(depth + 1, dtype=np.int64)
        sizes = P.block_sizes
        np.add.at(rows_near, P.level[~P.far], sizes[~P.far])
        far_blocks = np.bincount(P.level[P.far], minlength=depth + 1)
        active = np.bincount(P.level[store.blocks], minlength=depth + 1)
        coupling = np.zeros(depth + 1, dtype=np.int64)
        for k in store.blocks:
            coupling[P.level[k]] += basis.grids[P.t[k]].size * basis.grids[P.s[k]].size
        out = []
        for l in range(depth + 1):
            out.append({
                "level": l,
                "order": int(self.schedule.level_orders[l]),
                "n_directions": len(P.directions[l]),
                "far_blocks": int(far_blocks[l]),
                "active_far_blocks": int(active[l]),
                "near_entries": int(rows_near[l]),
                "coupling_scalars": int(coupling[l]),
            })
        return out

    def stats(self) -> dict:
        lv = self.level_stats()
        return {
            "n": self.n,
            "zeta": self.zeta,
            "blocks": len(self.partition),
            "near_blocks": self.partition.n_near,
            "far_blocks": self.partition.n_far,
            "active_far_blocks": len(self.couplings.blocks),
            "near_entries": int(self.near.nnz),
            "coupling_scalars": sum(r["coupling_scalars"] for r in lv),
            "unique_couplings": self.couplings.n_unique,
            "leaf_basis_scalars": self.basis.leaf_storage,
            "basis_coefficients": self.basis.n_coefficients,
        }

    def write_stats_csv(self, path: str | Path) -> None:
        rows = self.level_stats()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def _expand_blocks(basis: ClusterBasis, P: BlockPartition, blocks: np.ndarray, zeta,
                   n: int) -> sp.csr_matrix:
    cl = P.tree.clusters
    memo: dict = {}
    rows, cols, vals = [], [], []
    for k in blocks:
        t, s, c = int(P.t[k]), int(P.s[k]), int(P.direction[k])
        Vt = basis_matrix(basis, t, basis.position(t, c), memo)
        Vs = basis_matrix(basis, s, basis.position(s, c), memo)
        g = coupling_matrix(basis.grids[t], basis.grids[s], zeta, P.direction_vector(k))
        B = Vt.conj().T @ (g @ Vs)
        rows.append(np.repeat(cl[t].indices, cl[s].size))
        cols.append(np.tile(cl[s].indices, cl[t].size))
        vals.append(B.ravel())
    if not rows:
        return sp.csr_matrix((n, n), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def build_operator(mesh: SurfaceMesh, P: BlockPartition, schedule: OrderSchedule, zeta,
                   q: int = 5, dense: np.ndarray | None = None,
                   coupling_budget: float = 2e9, expand: bool | str = False) -> DH2Operator:
    """Assemble nearfield, cluster basis and coupling matrices for ``P``.

    ``expand="auto"`` stores a far block as its explicit ``#t x #s`` entries
    ``V_t^H gamma V_s`` whenever that is smaller than the coupling matrix;
    ``expand=True`` does so for every far block. The represented matrix is
    the same, only the storage and the evaluation order differ.
    """
    zeta = check_frequency(zeta)
    if len(schedule.level_orders) != P.depth + 1:
        raise ValueError("schedule depth does not match the partition")
    if expand not in (False, True, "auto"):
        raise ValueError("expand must be False, True or 'auto'")
    blocks = active_far_blocks(P, schedule)
    near = assemble_nearfield(mesh, P, zeta, q, dense=dense)
    basis = build_cluster_basis(mesh, P, schedule, zeta, q, blocks)
    expanded = None
    if expand:
        k = (schedule.level_orders[P.level[blocks]] + 1) ** 3
        small = np.ones(len(blocks), bool) if expand is True else P.block_sizes[blocks] < k * k
        expanded = _expand_blocks(basis, P, blocks[small], zeta, mesh.n_panels)
        blocks = blocks[~small]
    store = CouplingStore(basis, P, blocks, zeta, coupling_budget)
    return DH2Operator(mesh, P, schedule, zeta, near, basis, store, expanded,
                       meta={"expand": expand})


# ---------------------------------------------------------------------------
# error estimation
# ---------------------------------------------------------------------------

def _as_pair(A):
    if isinstance(A, np.ndarray):
        return (lambda v: A @ v), (lambda v: A.conj().T @ v)
    if A is None:
        return (lambda v: np.zeros_like(v)), (lambda v: np.zeros_like(v))
    return A.matvec, A.rmatvec


def power_norm(matvec, rmatvec, n: int, iters: int = 30, seed: int = 0) -> tuple[float, float]:
    """Spectral norm estimate by power iteration on ``A^H A``.

    Returns the estimate and the relative residual ``|A^H A v - lambda v| / lambda``
    of the final iterate.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam, res = 0.0, 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, 0.0
        res = float(np.linalg.norm(w - lam * v) / max(lam, 1e-300))
        v = w / nw
    return math.sqrt(max(lam, 0.0)), res


def spectral_error(op, dense: np.ndarray, iters: int = 30, seed: int = 0,
                   return_residual: bool = False):
    """Relative spectral error ``|K - K~|_2 / |K|_2`` by power iteration."""
    dense = np.asarray(dense)
    n = dense.shape[0]
    mv, rmv = _as_pair(op)
    e_norm, res = power_norm(lambda v: dense @ v - mv(v), lambda v: dense.conj().T @ v - rmv(v),
                             n, iters, seed)
    k_norm, _ = power_norm(lambda v: dense @ v, lambda v: dense.conj().T @ v, n, iters, seed)
    rel = e_norm / k_norm if k_norm > 0 else 0.0
    return (rel, res) if return_residual else rel
