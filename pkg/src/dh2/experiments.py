"""Scripted reference experiments on the unit sphere.

Each ``run_*`` function returns an :class:`ExperimentResult` whose rows are
flat dictionaries; :func:`save_result` writes them as CSV together with a
JSON manifest. Orders in configurations are polynomial degrees
(``degree + 1`` points per coordinate).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import build_cluster_tree
from .directions import build_direction_sets
from .geometry import build_sphere_mesh
from .kernel import fixed_schedule
from .operator import assemble_dense, build_operator, spectral_error
from .partition import NEAR_RGB, AdmissibilityParams, divide, pattern_image, render_pattern
from .quadrature import helmholtz_dense_many

EXPERIMENTS = ("blocks_vs_n", "convergence_vs_m", "blocks_vs_nu", "error_vs_nu", "pattern")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "blocks_vs_n"
    levels: tuple[int, ...] = (4, 5, 6)       # sphere refinement levels, n = 8 * 4**level
    alpha: float | None = None                # None: alpha = sqrt(n / 128)
    nus: tuple[float, ...] = tuple(range(0, 26, 2))
    orders: tuple[int, ...] = (3, 4, 5, 6)    # degrees
    ratios: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    eta: tuple[float, float, float] = (10.0, 2.0, 0.5)
    q: int = 5
    leaf_size: int = 48
    tree_mode: str = "tight"
    adaptive: bool = True
    expand: bool | str = "auto"
    iters: int = 30
    seed: int = 0
    dense_limit: int = 8192
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if any(l < 0 for l in self.levels):
            raise ValueError("refinement levels must be non-negative")

    def alpha_for(self, n: int) -> float:
        return math.sqrt(n / 128.0) if self.alpha is None else float(self.alpha)


def block_preset(experiment: str = "blocks_vs_n", **kw) -> ExperimentConfig:
    """Partition-only runs: larger leaves, comparable to published block counts."""
    kw.setdefault("leaf_size", 48)
    return ExperimentConfig(experiment=experiment, **kw)


def error_preset(experiment: str = "convergence_vs_m", **kw) -> ExperimentConfig:
    """Runs against the dense matrix: small leaves so that small meshes have far blocks."""
    kw.setdefault("levels", (3, 4))
    kw.setdefault("leaf_size", 8)
    return ExperimentConfig(experiment=experiment, **kw)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


# ---------------------------------------------------------------------------
# shared setup
# ---------------------------------------------------------------------------

_MESHES: dict = {}
_TREES: dict = {}


def sphere(level: int):
    if level not in _MESHES:
        _MESHES[level] = build_sphere_mesh(level)
    return _MESHES[level]


def tree_for(cfg: ExperimentConfig, level: int):
    key = (level, cfg.leaf_size, cfg.tree_mode, cfg.adaptive)
    if key not in _TREES:
        _TREES[key] = build_cluster_tree(sphere(level), cfg.leaf_size, mode=cfg.tree_mode,
                                         adaptive=cfg.adaptive)
    return _TREES[key]


def partition_for(cfg: ExperimentConfig, level: int, zeta: complex, rule: str = "directional"):
    tree = tree_for(cfg, level)
    eta1, eta2, eta3 = cfg.eta
    params = AdmissibilityParams(eta1, eta2, eta3, zeta)
    return divide(tree, build_direction_sets(tree, zeta, eta1), params, rule=rule)


def _zeta_row(zeta: complex) -> dict:
    return {"zeta_re": zeta.real, "zeta_im": zeta.imag}


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_blocks_vs_n(cfg: ExperimentConfig) -> ExperimentResult:
    """Block counts for ``zeta = alpha + alpha i`` and ``zeta = alpha i``."""
    rows = []
    for level in cfg.levels:
        n = sphere(level).n_panels
        a = cfg.alpha_for(n)
        for case, zeta in (("complex", complex(a, a)), ("imaginary", complex(0.0, a))):
            t0 = time.perf_counter()
            P = partition_for(cfg, level, zeta)
            rows.append({"n": n, "alpha": a, "case": case, **_zeta_row(zeta),
                         "blocks": len(P), "near": P.n_near, "far": P.n_far,
                         "blocks_per_n": len(P) / n, "runtime": time.perf_counter() - t0})
    res = ExperimentResult(cfg, rows)
    by = {(r["n"], r["case"]): r["blocks"] for r in rows}
    res.summary["ratio"] = {n: by[(n, "imaginary")] / by[(n, "complex")]
                            for n in sorted({r["n"] for r in rows})}
    return res


def run_convergence_vs_m(cfg: ExperimentConfig) -> ExperimentResult:
    """Relative spectral error for ``zeta = alpha + alpha i`` against the interpolation degree."""
    rows = []
    for level in cfg.levels:
        mesh = sphere(level)
        n = mesh.n_panels
        a = cfg.alpha_for(n)
        zeta = complex(a, a)
        t0 = time.perf_counter()
        K = assemble_dense(mesh, zeta, cfg.q, cfg.dense_limit)
        t_dense = time.perf_counter() - t0
        P = partition_for(cfg, level, zeta)
        for m in cfg.orders:
            t0 = time.perf_counter()
            op = build_operator(mesh, P, fixed_schedule(P.depth, m), zeta, cfg.q, dense=K,
                                expand=cfg.expand)
            err, res = spectral_error(op, K, cfg.iters, cfg.seed, return_residual=True)
            rows.append({"n": n, **_zeta_row(zeta), "degree": m, "points": m + 1,
                         "blocks": len(P), "far": P.n_far, "error": err, "residual": res,
                         "dense_runtime": t_dense, "runtime": time.perf_counter() - t0})
    return ExperimentResult(cfg, rows)


def fit_nu(nus, counts) -> dict:
    """Least-squares fit ``counts ~ a + b / (nu + 1)`` with its coefficient of determination."""
    nus = np.asarray(nus, dtype=float)
    y = np.asarray(counts, dtype=float)
    A = np.stack([np.ones_like(nus), 1.0 / (nus + 1.0)], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([a, b])
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return {"a": float(a), "b": float(b), "r2": r2}


def run_blocks_vs_nu(cfg: ExperimentConfig) -> ExperimentResult:
    """Block counts for ``zeta = nu + alpha i`` on a single mesh."""
    level = cfg.levels[0]
    n = sphere(level).n_panels
    a = cfg.alpha_for(n)
    rows = []
    for nu in cfg.nus:
        zeta = complex(nu, a)
        t0 = time.perf_counter()
        P = partition_for(cfg, level, zeta)
        rows.append({"n": n, "nu": nu, **_zeta_row(zeta), "blocks": len(P), "near": P.n_near,
                     "far": P.n_far, "blocks_per_n": len(P) / n, "runtime": time.perf_counter() - t0})
    res = ExperimentResult(cfg, rows)
    res.summary["fit"] = fit_nu(cfg.nus, [r["blocks"] for r in rows])
    return res


def run_error_vs_nu(cfg: ExperimentConfig, chunk: int = 4) -> ExperimentResult:
    """Relative spectral errors for ``zeta = nu + alpha i`` and every configured degree."""
    level = cfg.levels[0]
    mesh = sphere(level)
    n = mesh.n_panels
    if n > cfg.dense_limit:
        raise MemoryError(f"n={n} exceeds the dense limit {cfg.dense_limit}")
    a = cfg.alpha_for(n)
    rows = []
    nus = list(cfg.nus)
    for start in range(0, len(nus), chunk):
        part = nus[start:start + chunk]
        t0 = time.perf_counter()
        dense = helmholtz_dense_many(mesh, [complex(nu, a) for nu in part], cfg.q)
        t_dense = (time.perf_counter() - t0) / len(part)
        for nu, K in zip(part, dense):
            zeta = complex(nu, a)
            P = partition_for(cfg, level, zeta)
            for m in cfg.orders:
                t0 = time.perf_counter()
                op = build_operator(mesh, P, fixed_schedule(P.depth, m), zeta, cfg.q, dense=K,
                                    expand=cfg.expand)
                err, res = spectral_error(op, K, cfg.iters, cfg.seed, return_residual=True)
                rows.append({"n": n, "nu": nu, **_zeta_row(zeta), "degree": m, "points": m + 1,
                             "blocks": len(P), "far": P.n_far, "error": err, "residual": res,
                             "dense_runtime": t_dense, "runtime": time.perf_counter() - t0})
        del dense
    return ExperimentResult(cfg, rows)


def red_fraction(img: np.ndarray) -> float:
    return float(np.all(img == np.array(NEAR_RGB, dtype=np.uint8), axis=-1).mean())


def render_patterns(cfg: ExperimentConfig, im: float | None = None) -> ExperimentResult:
    """Block pattern images for ``Re zeta / Im zeta`` in ``cfg.ratios``."""
    level = cfg.levels[0]
    n = sphere(level).n_panels
    im = cfg.alpha_for(n) if im is None else float(im)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ratio in cfg.ratios:
        zeta = complex(ratio * im, im)
        P = partition_for(cfg, level, zeta)
        path = out / f"pattern_n{n}_ratio{ratio:g}.ppm" if out is not None else None
        img = render_pattern(P, path) if path is not None else pattern_image(P)
        rows.append({"n": n, "ratio": ratio, **_zeta_row(zeta), "blocks": len(P),
                     "red_fraction": red_fraction(img), "file": str(path) if path else ""})
    return ExperimentResult(cfg, rows)


RUNNERS = {
    "blocks_vs_n": run_blocks_vs_n,
    "convergence_vs_m": run_convergence_vs_m,
    "blocks_vs_nu": run_blocks_vs_nu,
    "error_vs_nu": run_error_vs_nu,
    "pattern": render_patterns,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    t0 = time.perf_counter()
    res = RUNNERS[cfg.experiment](cfg)
    res.timings["total"] = time.perf_counter() - t0
    if cfg.out_dir:
        save_result(res, cfg.out_dir)
    return res


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_rows_csv(rows: list[dict], path: str | Path) -> None:
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_result(res: ExperimentResult, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{res.config.experiment}.csv"
    write_rows_csv(res.rows, csv_path)
    manifest = {
        "experiment": res.config.experiment,
        "version": __version__,
        "config": _jsonable(asdict(res.config)),
        "summary": _jsonable(res.summary),
        "timings": _jsonable(res.timings),
        "csv": csv_path.name,
    }
    man_path = out / f"{res.config.experiment}.json"
    man_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return csv_path, man_path


__all__ = [
    "ExperimentConfig", "ExperimentResult", "block_preset", "error_preset", "fit_nu",
    "run_blocks_vs_n", "run_convergence_vs_m", "run_blocks_vs_nu", "run_error_vs_nu",
    "render_patterns", "run_experiment", "save_result",
]
