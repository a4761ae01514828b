"""Per-level direction sets for the plane-wave modulation.

Directions are centers of a ``p x p`` grid on each face of the cube
``[-1, 1]**3`` projected to the unit sphere (``6 p**2`` directions). The
grid lines are great circles, so every projected cell is a convex spherical
quadrilateral and its farthest point from the projected cell center is a
projected corner; the covering radius below is therefore exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .clustering import Cluster, ClusterTree

SINGLE_DIRECTION = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class DirectionSet:
    level: int
    directions: np.ndarray        # (k, 3) unit vectors
    p: int                        # 0 encodes the single direction (1, 0, 0)
    covering_radius: float        # sup over the sphere of the distance to the nearest direction

    def __len__(self) -> int:
        return len(self.directions)


def _face_grid(p: int, centers: bool) -> np.ndarray:
    """Cube-face grid points (cell centers or cell corners), grouped per cell."""
    k = np.arange(p)
    if centers:
        t = -1.0 + (2 * k + 1) / p
        a, b = np.meshgrid(t, t, indexing="ij")
        uv = np.stack([a.ravel(), b.ravel()], axis=1)[:, None, :]
    else:
        lo = -1.0 + 2 * k / p
        hi = lo + 2.0 / p
        a, b = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        a, b = a.ravel(), b.ravel()
        uv = np.stack([
            np.stack([lo[a], lo[b]], 1), np.stack([hi[a], lo[b]], 1),
            np.stack([lo[a], hi[b]], 1), np.stack([hi[a], hi[b]], 1),
        ], axis=1)
    faces = []
    for axis in range(3):
        others = [d for d in range(3) if d != axis]
        for sign in (1.0, -1.0):
            pts = np.zeros(uv.shape[:2] + (3,))
            pts[..., axis] = sign
            pts[..., others[0]] = uv[..., 0]
            pts[..., others[1]] = uv[..., 1]
            faces.append(pts)
    pts = np.concatenate(faces)
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


@lru_cache(maxsize=None)
def cube_face_directions(p: int) -> tuple[np.ndarray, float]:
    """Directions for grid parameter ``p`` and their exact covering radius."""
    if p == 0:
        return SINGLE_DIRECTION[None, :].copy(), 2.0
    centers = _face_grid(p, True)[:, 0, :]
    corners = _face_grid(p, False)
    radius = float(np.linalg.norm(corners - centers[:, None, :], axis=-1).max())
    return centers, radius


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform points on the unit sphere."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    rho = np.sqrt(1.0 - z**2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def sampled_covering_radius(directions: np.ndarray, n_samples: int = 10_000) -> float:
    pts = fibonacci_sphere(n_samples)
    d2 = 2.0 - 2.0 * np.clip(pts @ directions.T, -1.0, 1.0)
    return float(np.sqrt(d2.min(axis=1).max()))


def direction_set_for(level: int, required_radius: float, p_max: int = 512) -> DirectionSet:
    """Smallest cube-face set whose covering radius does not exceed ``required_radius``."""
    p = 0
    while True:
        dirs, radius = cube_face_directions(p)
        if radius <= required_radius:
            return DirectionSet(level, dirs, p, radius)
        p += 1
        if p > p_max:
            raise ValueError(f"no direction set with covering radius <= {required_radius}")


def build_direction_sets(tree: ClusterTree, zeta, eta1: float) -> list[DirectionSet]:
    """One direction set per level with ``|Im zeta| * radius <= eta1 / delta_l``."""
    if eta1 <= 0:
        raise ValueError("eta1 must be positive")
    kappa = abs(complex(zeta).imag)
    sets = []
    for level, delta in enumerate(tree.level_diameters):
        need = np.inf if kappa * delta == 0.0 else eta1 / (kappa * delta)
        sets.append(direction_set_for(level, need))
    return sets


def nearest_direction(e: np.ndarray, D: DirectionSet) -> np.ndarray:
    """Index of the direction closest to each row of ``e``; ties go to the lowest index."""
    e = np.atleast_2d(e)
    d2 = ((e[:, None, :] - D.directions[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d2, axis=1)


def assign_direction(t: Cluster, s: Cluster, D: DirectionSet) -> np.ndarray:
    """Direction of ``D`` closest to ``(M_t - M_s) / |M_t - M_s|``."""
    diff = t.center - s.center
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        raise ValueError("clusters have identical centers; no direction is defined")
    return D.directions[nearest_direction(diff / norm, D)[0]]


def son_direction(c: np.ndarray, D_next: DirectionSet) -> np.ndarray:
    """Direction of the next level closest to ``c``."""
    return D_next.directions[nearest_direction(np.asarray(c, dtype=float), D_next)[0]]


def son_direction_map(D: DirectionSet, D_next: DirectionSet) -> np.ndarray:
    """``sd`` as an index map from ``D`` into ``D_next``."""
    return nearest_direction(D.directions, D_next)
