"""Directional admissibility and the minimal admissible block partition."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .clustering import Cluster, ClusterTree
from .directions import DirectionSet, nearest_direction


@dataclass(frozen=True)
class AdmissibilityParams:
    eta1: float = 10.0
    eta2: float = 2.0
    eta3: float = 0.5
    zeta: complex = 1j

    def __post_init__(self):
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("eta1 and eta2 must be positive")
        if not 0.0 < self.eta3 < 1.0:
            raise ValueError("eta3 must lie in (0, 1)")
        z = complex(self.zeta)
        if z.real < 0:
            raise ValueError("Re(zeta) must be non-negative")
        object.__setattr__(self, "zeta", z)


def box_distance(lo1, hi1, lo2, hi2) -> np.ndarray:
    """Euclidean distance between axis-parallel boxes (vectorised over leading axes)."""
    gap = np.maximum(0.0, np.maximum(np.asarray(lo1) - hi2, np.asarray(lo2) - hi1))
    return np.sqrt((gap**2).sum(axis=-1))


def _distance_conditions(maxdiam, dist, params: AdmissibilityParams, rule: str = "directional"):
    zeta = params.zeta
    ok = (dist > 0) & (maxdiam <= params.eta2 * dist)
    if rule == "directional":
        rhs = np.maximum(params.eta2, params.eta3 * zeta.real * dist) * dist
        ok &= abs(zeta.imag) * maxdiam**2 <= rhs
    return ok


def is_admissible(t: Cluster, s: Cluster, c, params: AdmissibilityParams) -> bool:
    """All three directional admissibility conditions for ``(t, s)`` and direction ``c``."""
    dist = float(box_distance(t.lo, t.hi, s.lo, s.hi))
    if dist == 0.0:
        return False
    maxdiam = max(t.diameter, s.diameter)
    if not _distance_conditions(maxdiam, dist, params):
        return False
    diff = t.center - s.center
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return False
    angle = abs(params.zeta.imag) * np.linalg.norm(diff / norm - np.asarray(c, dtype=float))
    return bool(angle <= params.eta1 / maxdiam)


@dataclass(frozen=True)
class Block:
    t: int
    s: int
    level: int
    kind: Literal["near", "far"]
    direction: int          # index into the level's direction set, -1 for near blocks
    dist: float


@dataclass(eq=False)
class BlockPartition:
    """Blocks of the minimal admissible partition stored as parallel arrays."""

    tree: ClusterTree
    params: AdmissibilityParams
    directions: list[DirectionSet]
    t: np.ndarray
    s: np.ndarray
    level: np.ndarray
    far: np.ndarray
    direction: np.ndarray
    dist: np.ndarray
    maxdiam: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Block]:
        for k in range(len(self)):
            yield self.block(k)

    def block(self, k: int) -> Block:
        return Block(int(self.t[k]), int(self.s[k]), int(self.level[k]),
                     "far" if self.far[k] else "near", int(self.direction[k]), float(self.dist[k]))

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def n_far(self) -> int:
        return int(self.far.sum())

    @property
    def n_near(self) -> int:
        return len(self) - self.n_far

    def direction_vector(self, k: int) -> np.ndarray:
        return self.directions[self.level[k]].directions[self.direction[k]]

    @cached_property
    def block_sizes(self) -> np.ndarray:
        sizes = np.array([c.size for c in self.tree.clusters], dtype=np.int64)
        return sizes[self.t] * sizes[self.s]

    def partners(self, kind: Literal["near", "far", "all"] = "all"):
        """Counts ``#P_left(t)`` and ``#P_right(t)`` for every cluster ``t``."""
        sel = {"near": ~self.far, "far": self.far, "all": np.ones(len(self), bool)}[kind]
        nc = len(self.tree.clusters)
        right = np.bincount(self.t[sel], minlength=nc)
        left = np.bincount(self.s[sel], minlength=nc)
        return left, right


def divide(tree: ClusterTree, directions: list[DirectionSet], params: AdmissibilityParams,
           rule: Literal["directional", "standard"] = "directional",
           leaf_first: bool = True) -> BlockPartition:
    """Minimal admissible partition of ``I x I`` by recursive block subdivision.

    A block is a leaf of the block tree when one of its clusters is a leaf
    (near) or when it is admissible (far); otherwise all pairs of sons are
    examined. Processed level by level with vectorised tests. With
    ``rule="standard"`` only the distance condition ``maxdiam <= eta2 dist``
    is used and no directions are assigned.
    """
    a = tree.arrays()
    lo, hi, leaf = a["lo"], a["hi"], a["leaf"]
    diam = np.linalg.norm(hi - lo, axis=1)
    center = 0.5 * (lo + hi)
    ptr, sidx = a["son_ptr"], a["son_idx"]
    kappa = abs(params.zeta.imag)
    out = {k: [] for k in ("t", "s", "level", "far", "direction", "dist", "maxdiam")}
    pt = np.array([0], dtype=np.int64)
    ps = np.array([0], dtype=np.int64)
    level = 0
    while len(pt):
        dist = box_distance(lo[pt], hi[pt], lo[ps], hi[ps])
        maxdiam = np.maximum(diam[pt], diam[ps])
        is_leaf = leaf[pt] | leaf[ps]
        adm = _distance_conditions(maxdiam, dist, params, rule)
        if leaf_first:
            adm &= ~is_leaf
        dirs = np.full(len(pt), -1, dtype=np.int64)
        if rule == "directional" and adm.any():
            D = directions[level]
            ia = np.flatnonzero(adm)
            diff = center[pt[ia]] - center[ps[ia]]
            e = diff / np.linalg.norm(diff, axis=1, keepdims=True)
            for start in range(0, len(ia), 4096):
                sl = slice(start, start + 4096)
                dirs[ia[sl]] = nearest_direction(e[sl], D)
            angle = kappa * np.linalg.norm(e - D.directions[dirs[ia]], axis=1)
            if np.any(angle > params.eta1 / maxdiam[ia] * (1 + 1e-12)):
                raise RuntimeError("direction set too coarse for the angle condition")
        done = is_leaf | adm
        for key, val in (("t", pt[done]), ("s", ps[done]), ("far", adm[done]),
                         ("direction", dirs[done]), ("dist", dist[done]),
                         ("maxdiam", maxdiam[done])):
            out[key].append(val)
        out["level"].append(np.full(int(done.sum()), level, dtype=np.int64))
        # expand the remaining blocks into all son pairs
        rt, rs = pt[~done], ps[~done]
        nt = ptr[rt + 1] - ptr[rt]
        ns = ptr[rs + 1] - ptr[rs]
        reps = nt * ns
        bt = np.repeat(rt, reps)
        bs = np.repeat(rs, reps)
        offs = np.arange(int(reps.sum())) - np.repeat(np.cumsum(reps) - reps, reps)
        nsr = np.repeat(ns, reps)
        pt = sidx[ptr[bt] + offs // nsr]
        ps = sidx[ptr[bs] + offs % nsr]
        level += 1
    cat = {k: np.concatenate(v) for k, v in out.items()}
    return BlockPartition(tree, params, directions, cat["t"], cat["s"], cat["level"],
                          cat["far"].astype(bool), cat["direction"], cat["dist"], cat["maxdiam"],
                          meta={"rule": rule})


def check_tiling(P: BlockPartition) -> bool:
    """True iff the blocks cover ``I x I`` exactly once (bitmap check)."""
    n = P.tree.n
    count = np.zeros((n, n), dtype=np.int32)
    cl = P.tree.clusters
    for t, s in zip(P.t, P.s):
        count[np.ix_(cl[t].indices, cl[s].indices)] += 1
    return bool(np.all(count == 1))


@dataclass
class SparsityReport:
    n: int
    n_blocks: int
    n_near: int
    n_far: int
    left: np.ndarray          # #P_left(t) per cluster
    right: np.ndarray         # #P_right(t) per cluster
    r: np.ndarray             # r_t per cluster
    R: np.ndarray             # R_t per cluster

    @property
    def blocks_per_dof(self) -> float:
        return self.n_blocks / self.n

    @property
    def max_partners(self) -> int:
        return int(max(self.left.max(), self.right.max()))


def sparsity_diagnostics(P: BlockPartition) -> SparsityReport:
    """Partner counts and the radii ``r_t``, ``R_t`` that bound them."""
    params = P.params
    kappa = abs(params.zeta.imag)
    diam = np.array([c.diameter for c in P.tree.clusters])
    r = kappa / params.eta2 * diam
    if params.zeta.real > 0:
        r = np.minimum(r, math.sqrt(kappa / (params.eta3 * params.zeta.real)))
    R = 1.5 + np.maximum(1.0 / params.eta2, r)
    left, right = P.partners("all")
    return SparsityReport(P.tree.n, len(P), P.n_near, P.n_far, left, right, r, R)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_blocks_csv(P: BlockPartition, path: str | Path, level_orders=None) -> None:
    """One row per block: ``level,t_id,s_id,kind,order,dist,diam_t,diam_s``."""
    cl = P.tree.clusters
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "t_id", "s_id", "kind", "order", "dist", "diam_t", "diam_s"])
        for k in range(len(P)):
            t, s, lev = int(P.t[k]), int(P.s[k]), int(P.level[k])
            far = bool(P.far[k])
            order = "" if not far or level_orders is None else int(level_orders[lev])
            w.writerow([lev, t, s, "far" if far else "near", order,
                        f"{P.dist[k]:.17g}", f"{cl[t].diameter:.17g}", f"{cl[s].diameter:.17g}"])


NEAR_RGB = (255, 0, 0)
FAR_RGB = (0, 0, 255)


def pattern_image(P: BlockPartition, pixels: int | None = None) -> np.ndarray:
    """RGB image of the block structure with DOFs in leaf order.

    Near blocks are red, far blocks blue, block borders one black pixel.
    ``pixels`` defaults to ``min(n, 1024)``; DOF ``i`` maps to pixel row
    ``floor(i * pixels / n)``.
    """
    n = P.tree.n
    N = min(n, 1024) if pixels is None else int(pixels)
    # position of every cluster in leaf order is a contiguous range
    start = np.zeros(len(P.tree.clusters), dtype=np.int64)
    stop = np.zeros(len(P.tree.clusters), dtype=np.int64)
    pos = 0

    def walk(c):
        nonlocal pos
        start[c.id] = pos
        if c.is_leaf:
            pos += c.size
        for s in c.sons:
            walk(s)
        stop[c.id] = pos

    walk(P.tree.root)
    img = np.zeros((N, N, 3), dtype=np.uint8)

    def px(i):
        return (i * N) // n

    for k in range(len(P)):
        r0, r1 = px(start[P.t[k]]), max(px(stop[P.t[k]]), px(start[P.t[k]]) + 1)
        c0, c1 = px(start[P.s[k]]), max(px(stop[P.s[k]]), px(start[P.s[k]]) + 1)
        img[r0:r1, c0:c1] = FAR_RGB if P.far[k] else NEAR_RGB
    for k in range(len(P)):
        r0, r1 = px(start[P.t[k]]), max(px(stop[P.t[k]]), px(start[P.t[k]]) + 1)
        c0, c1 = px(start[P.s[k]]), max(px(stop[P.s[k]]), px(start[P.s[k]]) + 1)
        img[r0, c0:c1] = 0
        img[r1 - 1, c0:c1] = 0
        img[r0:r1, c0] = 0
        img[r0:r1, c1 - 1] = 0
    return img


def write_ppm(img: np.ndarray, path: str | Path) -> None:
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM (P6) file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def render_pattern(P: BlockPartition, path: str | Path, pixels: int | None = None) -> np.ndarray:
    img = pattern_image(P, pixels)
    write_ppm(img, path)
    return img
