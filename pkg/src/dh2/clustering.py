"""Geometric cluster trees over panel indices.

Clusters are built by bisecting axis-parallel cells: starting from the
bounding cube of the surface, every cell is halved across its longest edge
and panels are assigned by barycenter. ``regular`` mode uses the cell,
enlarged by a uniform margin that covers every panel's extent around its
barycenter, as bounding box; all clusters built from congruent cells then
have congruent boxes. ``tight`` mode uses the minimal box around the panels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .geometry import SurfaceMesh


@dataclass(eq=False)
class Cluster:
    id: int
    indices: np.ndarray          # sorted panel indices (the label)
    lo: np.ndarray
    hi: np.ndarray
    level: int
    father: int | None = None
    sons: list["Cluster"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.sons

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return cluster_diameter(self)

    def __repr__(self) -> str:
        return f"Cluster(id={self.id}, level={self.level}, size={self.size}, sons={len(self.sons)})"


def cluster_diameter(t: Cluster) -> float:
    """Euclidean diameter of the bounding box (length of its diagonal)."""
    return float(np.linalg.norm(np.asarray(t.hi) - np.asarray(t.lo)))


@dataclass(eq=False)
class ClusterTree:
    clusters: list[Cluster]      # indexed by cluster id, fathers before sons
    mode: str
    leaf_size: int

    @property
    def root(self) -> Cluster:
        return self.clusters[0]

    @property
    def n(self) -> int:
        return self.root.size

    @property
    def depth(self) -> int:
        return max(c.level for c in self.clusters)

    @property
    def levels(self) -> list[list[Cluster]]:
        out: list[list[Cluster]] = [[] for _ in range(self.depth + 1)]
        for c in self.clusters:
            out[c.level].append(c)
        return out

    @property
    def leaves(self) -> list[Cluster]:
        return [c for c in self.clusters if c.is_leaf]

    @property
    def level_diameters(self) -> np.ndarray:
        """Maximal box diameter per level."""
        delta = np.zeros(self.depth + 1)
        for c in self.clusters:
            delta[c.level] = max(delta[c.level], c.diameter)
        return delta

    def arrays(self) -> dict[str, np.ndarray]:
        """Structure-of-arrays view used by the vectorised block partitioner."""
        cl = self.clusters
        sons = [np.array([s.id for s in c.sons], dtype=np.int64) for c in cl]
        ptr = np.zeros(len(cl) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(s) for s in sons])
        return {
            "lo": np.array([c.lo for c in cl]),
            "hi": np.array([c.hi for c in cl]),
            "level": np.array([c.level for c in cl], dtype=np.int64),
            "size": np.array([c.size for c in cl], dtype=np.int64),
            "leaf": np.array([c.is_leaf for c in cl]),
            "son_ptr": ptr,
            "son_idx": np.concatenate(sons) if ptr[-1] else np.zeros(0, dtype=np.int64),
        }

    def leaf_order(self) -> np.ndarray:
        """Panel indices in depth-first leaf order."""
        out = []

        def walk(c: Cluster):
            if c.is_leaf:
                out.append(c.indices)
            for s in c.sons:
                walk(s)

        walk(self.root)
        return np.concatenate(out)

    def dump(self) -> str:
        """Indented text listing of the tree (level, box corners, #DOFs)."""
        lines = []

        def walk(c: Cluster):
            lo = " ".join(f"{v:.4g}" for v in c.lo)
            hi = " ".join(f"{v:.4g}" for v in c.hi)
            lines.append(f"{'  ' * c.level}[{c.id}] level={c.level} box=({lo})-({hi}) n={c.size}")
            for s in c.sons:
                walk(s)

        walk(self.root)
        return "\n".join(lines)


def build_cluster_tree(mesh: SurfaceMesh, leaf_size: int = 16,
                       mode: Literal["regular", "tight"] = "regular",
                       contract: bool = True, adaptive: bool = False) -> ClusterTree:
    """Binary geometric cluster tree over the panels of ``mesh``.

    Recursion stops at clusters with at most ``leaf_size`` panels. A split
    that leaves one half empty is repeated on the non-empty half
    (``contract=True``) so that no cluster has exactly one son; with
    ``contract=False`` the single son is kept as its own level. With
    ``adaptive=True`` every split bisects the bounding box of the cluster's
    barycenters instead of the inherited cell, which gives better shaped
    clusters on curved surfaces (box congruence is then lost).
    """
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    if mode not in ("regular", "tight"):
        raise ValueError(f"unknown tree mode {mode!r}")
    bary = mesh.barycenters
    corners = mesh.corners
    vlo, vhi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    side = float((vhi - vlo).max())
    root_lo = 0.5 * (vlo + vhi) - 0.5 * side
    root_hi = root_lo + side
    # covers each panel around its barycenter; the cube itself needs none
    margin = np.abs(corners - bary[:, None, :]).max(axis=(0, 1))

    clusters: list[Cluster] = []

    def make(idx: np.ndarray, cell_lo, cell_hi, level: int, father: int | None, is_root: bool) -> Cluster:
        if mode == "tight":
            pts = corners[idx].reshape(-1, 3)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
        elif is_root:
            lo, hi = cell_lo.copy(), cell_hi.copy()
        else:
            lo, hi = cell_lo - margin, cell_hi + margin
        c = Cluster(len(clusters), np.sort(idx), lo, hi, level, father)
        clusters.append(c)
        return c

    def split(idx, cell_lo, cell_hi):
        width = cell_hi - cell_lo
        axis = int(np.argmax(width))
        mid = 0.5 * (cell_lo[axis] + cell_hi[axis])
        left = bary[idx, axis] < mid
        a_hi = cell_hi.copy()
        a_hi[axis] = mid
        b_lo = cell_lo.copy()
        b_lo[axis] = mid
        return [(idx[left], cell_lo, a_hi), (idx[~left], b_lo, cell_hi)]

    root = make(np.arange(mesh.n_panels), root_lo, root_hi, 0, None, True)
    stack = [(root, root_lo, root_hi)]
    while stack:
        c, cell_lo, cell_hi = stack.pop()
        if c.size <= leaf_size:
            continue
        lo, hi = cell_lo, cell_hi
        if adaptive:
            pts = bary[c.indices]
            lo, hi = pts.min(axis=0), pts.max(axis=0)
        while True:
            parts = [p for p in split(c.indices, lo, hi) if len(p[0])]
            if len(parts) > 1 or not contract:
                break
            lo, hi = parts[0][1], parts[0][2]
            if np.all(hi - lo <= 1e-12 * side):
                parts = []      # coincident barycenters; keep as leaf
                break
        for idx, plo, phi in parts:
            s = make(idx, plo, phi, c.level + 1, c.id, False)
            c.sons.append(s)
            stack.append((s, plo, phi))
    # renumber breadth-first so that ids grow with level
    order = sorted(clusters, key=lambda c: (c.level, c.id))
    remap = {c.id: k for k, c in enumerate(order)}
    for c in order:
        c.id = remap[c.id]
        if c.father is not None:
            c.father = remap[c.father]
    return ClusterTree(order, mode, leaf_size)


@dataclass
class TreeReport:
    congruence_defect: np.ndarray     # per level, max deviation of box widths
    son_ratio: float                  # max diam(father) / diam(son)
    max_sons: int
    min_sons: int                     # over non-leaf clusters
    overlap: np.ndarray               # per level, max boxes containing a barycenter or vertex
    leaf_sizes: tuple[int, int]
    level_diameters: np.ndarray
    decay_rate: float                 # fitted rho_ref from log(delta_l) vs l
    c_vol: float
    C_vol: float

    def lines(self) -> list[str]:
        return [
            f"congruence defect per level: {np.array2string(self.congruence_defect, precision=3)}",
            f"C_sb (son diameter ratio): {self.son_ratio:.4g}",
            f"#sons: min {self.min_sons}, max {self.max_sons}",
            f"C_ov per level: {self.overlap.tolist()}",
            f"leaf sizes: {self.leaf_sizes[0]}..{self.leaf_sizes[1]}",
            f"delta_l: {np.array2string(self.level_diameters, precision=4)}",
            f"delta decay per level: {self.decay_rate:.4g}",
            f"c_vol, C_vol: {self.c_vol:.4g}, {self.C_vol:.4g}",
        ]


def check_tree_assumptions(tree: ClusterTree, mesh: SurfaceMesh) -> TreeReport:
    """Measure the geometric tree assumptions. Observational only."""
    levels = tree.levels
    defect = np.zeros(len(levels))
    overlap = np.zeros(len(levels), dtype=np.int64)
    probes = np.concatenate([mesh.barycenters, mesh.vertices])
    for l, cl in enumerate(levels):
        widths = np.array([c.hi - c.lo for c in cl])
        defect[l] = float(np.abs(widths - widths[0]).max())
        lo = np.array([c.lo for c in cl])
        hi = np.array([c.hi for c in cl])
        inside = np.zeros(len(probes), dtype=np.int64)
        for a, b in zip(lo, hi):
            inside += np.all((probes >= a) & (probes <= b), axis=1)
        overlap[l] = int(inside.max())
    ratios = [c.diameter / s.diameter for c in tree.clusters for s in c.sons if s.diameter > 0]
    nsons = [len(c.sons) for c in tree.clusters if c.sons]
    leaf_sizes = [c.size for c in tree.leaves]
    delta = tree.level_diameters
    if len(delta) > 1:
        slope = np.polyfit(np.arange(len(delta)), np.log(delta), 1)[0]
        decay = float(np.exp(-slope))
    else:
        decay = 1.0
    vol = np.array([c.diameter**2 / mesh.areas[c.indices].sum() for c in tree.clusters])
    return TreeReport(defect, max(ratios, default=1.0), max(nsons, default=0),
                      min(nsons, default=0), overlap, (min(leaf_sizes), max(leaf_sizes)),
                      delta, decay, float(vol.min()), float(vol.max()))
