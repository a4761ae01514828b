"""Triangulated surface meshes with affine panels.

Panels are closed triangles. The element map of panel ``(v0, v1, v2)`` sends
the reference triangle ``conv{(0,0), (1,0), (1,1)}`` to the panel via

    chi(u) = v0 + u[0] * (v1 - v0) + u[1] * (v2 - v1)

so its Jacobian determinant is twice the panel area.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Closed conforming triangle mesh.

    Attributes
    ----------
    vertices : ndarray, shape (V, 3)
    panels : ndarray of int, shape (n, 3)
        Vertex indices of each panel (0-based).
    """

    vertices: np.ndarray
    panels: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        p = np.ascontiguousarray(self.panels, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (V, 3), got {v.shape}")
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"panels must have shape (n, 3), got {p.shape}")
        if p.size and (p.min() < 0 or p.max() >= len(v)):
            raise ValueError("panel vertex index out of range")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "panels", p)

    @property
    def n_panels(self) -> int:
        return len(self.panels)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def corners(self) -> np.ndarray:
        """Panel corner coordinates, shape (n, 3, 3)."""
        return self.vertices[self.panels]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """Panel diameters (longest edge)."""
        c = self.corners
        e = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def circumradii(self) -> np.ndarray:
        """Largest distance from the barycenter to a corner."""
        d = self.corners - self.barycenters[:, None, :]
        return np.linalg.norm(d, axis=2).max(axis=1)

    def element_map(self, i: int, ref: np.ndarray) -> np.ndarray:
        """Map reference points ``ref`` (..., 2) onto panel ``i``."""
        v0, v1, v2 = self.corners[i]
        ref = np.asarray(ref, dtype=float)
        return v0 + ref[..., :1] * (v1 - v0) + ref[..., 1:2] * (v2 - v1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the number of panels sharing each."""
        p = self.panels
        e = np.concatenate([p[:, [0, 1]], p[:, [1, 2]], p[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def validate(self) -> None:
        """Raise ``ValueError`` unless the mesh is closed, conforming and non-degenerate."""
        if self.n_panels == 0:
            raise ValueError("mesh has no panels")
        if np.any(self.areas <= 0.0):
            raise ValueError("mesh contains panels with non-positive area")
        _, counts = self.edges()
        if np.any(counts != 2):
            bad = int(np.sum(counts != 2))
            raise ValueError(f"{bad} edges are not shared by exactly two panels")

    def vertex_to_panels(self) -> list[np.ndarray]:
        order = np.argsort(self.panels.ravel(), kind="stable")
        owners = order // 3
        counts = np.bincount(self.panels.ravel(), minlength=self.n_vertices)
        return np.split(owners, np.cumsum(counts)[:-1])

    def touching_pairs(self) -> np.ndarray:
        """All ordered panel pairs ``(i, j)`` with a common vertex, including ``i == j``."""
        pairs = set()
        for owners in self.vertex_to_panels():
            for a in owners:
                for b in owners:
                    pairs.add((int(a), int(b)))
        return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def build_sphere_mesh(refinement_level: int) -> SurfaceMesh:
    """Refined octahedron projected to the unit sphere.

    The eight faces of ``|x1| + |x2| + |x3| = 1`` are refined
    ``refinement_level`` times by splitting every triangle into four at its
    edge midpoints; the resulting vertices are then projected radially onto
    the unit sphere. The mesh has ``8 * 4**refinement_level`` panels.
    """
    if refinement_level < 0:
        raise ValueError("refinement_level must be non-negative")
    verts = [
        (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0), (0.0, 0.0, -1.0),
    ]
    # outward orientation
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    verts = [np.array(v) for v in verts]
    for _ in range(refinement_level):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                midpoint[key] = len(verts)
                verts.append(0.5 * (verts[a] + verts[b]))
            return midpoint[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            refined += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = refined
    v = np.array(verts)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return SurfaceMesh(v, np.array(faces))


# ---------------------------------------------------------------------------
# exact distances between points, segments and triangles
# ---------------------------------------------------------------------------

def point_triangle_distance(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance between points ``p`` (N, 3) and triangles ``tri`` (N, 3, 3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = np.einsum("ij,ij->i", n, n)
    ap = p - a
    # barycentric coordinates of the projection onto the plane
    t = np.einsum("ij,ij->i", np.cross(ap, ac), n) / nn
    s = np.einsum("ij,ij->i", np.cross(ab, ap), n) / nn
    inside = (t >= 0) & (s >= 0) & (t + s <= 1)
    d_plane = np.abs(np.einsum("ij,ij->i", ap, n)) / np.sqrt(nn)
    d_edges = np.minimum.reduce([
        point_segment_distance(p, a, b),
        point_segment_distance(p, b, c),
        point_segment_distance(p, c, a),
    ])
    return np.where(inside, d_plane, d_edges)


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def segment_segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Distance between segments ``[p0, p1]`` and ``[q0, q1]`` (arrays of shape (N, 3))."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-300, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
    # clamp t and recompute s where needed
    t_lo, t_hi = t < 0.0, t > 1.0
    s = np.where(t_lo, np.clip(-c / a, 0.0, 1.0), s)
    s = np.where(t_hi, np.clip((b - c) / a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm((p0 + s[:, None] * d1) - (q0 + t[:, None] * d2), axis=1)


def triangle_distance(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Distance between non-intersecting triangles ``t1``, ``t2`` (N, 3, 3)."""
    cands = []
    for k in range(3):
        cands.append(point_triangle_distance(t1[:, k], t2))
        cands.append(point_triangle_distance(t2[:, k], t1))
    for k in range(3):
        for l in range(3):
            cands.append(segment_segment_distance(
                t1[:, k], t1[:, (k + 1) % 3], t2[:, l], t2[:, (l + 1) % 3]))
    return np.minimum.reduce(cands)


# ---------------------------------------------------------------------------
# mesh metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeshMetrics:
    h_max: float        # maximal panel diameter h_G
    h_min: float        # minimal distance between non-touching panels
    c_sr: float         # min |tau| / h_tau^2
    C_sr: float         # max |tau| / h_tau^2

    @property
    def C_qu(self) -> float:
        return self.h_max / self.h_min


def mesh_metrics(mesh: SurfaceMesh) -> MeshMetrics:
    """Mesh width, minimal separation and shape-regularity constants.

    The minimal separation only considers panel pairs with empty
    intersection. Candidate pairs come from a k-d tree over barycenters; the
    search radius is enlarged until it provably covers the minimiser.
    """
    n = mesh.n_panels
    if n < 2:
        raise ValueError("h_min is undefined for meshes with fewer than two panels")
    h = mesh.diameters
    ratio = mesh.areas / h**2
    corners = mesh.corners
    rmax = float(mesh.circumradii.max())
    tree = cKDTree(mesh.barycenters)
    pv = mesh.panels
    radius = 2.0 * float(h.max())
    while True:
        pairs = tree.query_pairs(radius, output_type="ndarray")
        if len(pairs):
            shared = (pv[pairs[:, 0], :, None] == pv[pairs[:, 1], None, :]).any(axis=(1, 2))
            pairs = pairs[~shared]
        if len(pairs):
            d = triangle_distance(corners[pairs[:, 0]], corners[pairs[:, 1]])
            h_min = float(d.min())
            # any closer pair has barycenter distance <= h_min + 2 rmax
            if h_min + 2.0 * rmax <= radius:
                break
        elif radius > 4.0 * np.ptp(mesh.vertices, axis=0).max() + 1.0:
            raise ValueError("mesh has no pair of non-touching panels")
        radius *= 2.0
    return MeshMetrics(h_max=float(h.max()), h_min=h_min,
                       c_sr=float(ratio.min()), C_sr=float(ratio.max()))


# ---------------------------------------------------------------------------
# plain-text I/O
# ---------------------------------------------------------------------------

def write_mesh(mesh: SurfaceMesh, path: str | Path) -> None:
    """Write ``n_vertices n_panels``, vertex rows, then 0-based panel rows."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_panels}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        np.savetxt(fh, mesh.panels, fmt="%d")


def read_mesh(path: str | Path) -> SurfaceMesh:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("expected header 'n_vertices n_panels'")
        nv, npan = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != nv + npan:
        raise ValueError(f"expected {nv + npan} data rows, found {len(rows)}")
    verts = np.array([[float(t) for t in r] for r in rows[:nv]])
    panels = np.array([[int(t) for t in r] for r in rows[nv:]], dtype=np.int64)
    return SurfaceMesh(verts.reshape(nv, 3), panels.reshape(npan, 3))
