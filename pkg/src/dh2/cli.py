"""Command-line front end.

Every flag can also be set through an environment variable ``DH2_<FLAG>``
(upper case, dashes replaced by underscores), e.g. ``DH2_ZETA_IM=8``.
Command-line values take precedence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

ORDER_HELP = ("interpolation points per coordinate (polynomial degree = points - 1; "
              "a box carries points**3 interpolation nodes)")

log = logging.getLogger("dh2")


def _env(dest: str, default):
    return os.environ.get("DH2_" + dest.upper(), default)


def _env_flag(dest: str) -> bool:
    return _env(dest, "").strip().lower() in ("1", "true", "yes", "on")


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _common(p: argparse.ArgumentParser, *, zeta: bool = True, order: bool = False,
            tree: bool = True, refine: int = 3) -> None:
    add = p.add_argument
    add("--refine", type=int, default=_env("refine", refine), help="sphere refinement level (n = 8 * 4**k)")
    if zeta:
        add("--zeta-re", type=float, default=_env("zeta_re", 0.0), help="Re(zeta) in 1/length, >= 0")
        add("--zeta-im", type=float, default=_env("zeta_im", 4.0), help="Im(zeta) in 1/length")
    add("--eta1", type=float, default=_env("eta1", 10.0))
    add("--eta2", type=float, default=_env("eta2", 2.0))
    add("--eta3", type=float, default=_env("eta3", 0.5), help="in (0, 1)")
    if tree:
        add("--leaf-size", type=int, default=_env("leaf_size", 16))
        add("--tree-mode", choices=("regular", "tight"), default=_env("tree_mode", "regular"))
        add("--adaptive", action="store_true", default=_env_flag("adaptive"),
            help="bisect the barycenter box of each cluster instead of the inherited cell")
    if order:
        add("--order", type=int, default=_env("order", 5), help=ORDER_HELP)
        add("--variable-order", action="store_true", default=_env_flag("variable_order"),
            help="per-level orders from the target accuracy instead of a fixed order")
        add("--epsilon", type=float, default=_env("epsilon", None),
            help="target accuracy for --variable-order (default min(1e-6, h_min/eta2))")
        add("--c0", type=float, default=_env("c0", None))
        add("--sigma-tilde", type=float, default=_env("sigma_tilde", None))
        add("--quad-order", type=int, default=_env("quad_order", 5), help="Gauss points per direction")
        add("--dense-limit", type=int, default=_env("dense_limit", 16384))
        add("--coupling-budget", type=float, default=_env("coupling_budget", 2e9),
            help="bytes of coupling matrices kept in memory")
    add("--seed", type=int, default=_env("seed", 0))
    add("--out", default=_env("out", "dh2_out"), help="output directory")
    add("--threads", type=int, default=_env("threads", 0), help="assembly threads (0 = all cores)")
    add("-v", "--verbose", action="store_true", default=_env_flag("verbose"))


def _subcommand(sub, name: str, help: str) -> argparse.ArgumentParser:
    return sub.add_parser(name, help=help, description=help, epilog="Orders are " + ORDER_HELP + ".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dh2",
        description="Directional H2-matrix approximation of the Helmholtz single-layer "
                    "operator with complex frequency on the unit sphere. "
                    "Orders are given as " + ORDER_HELP + ".")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _subcommand(sub, "mesh", help="generate a sphere mesh and report its metrics")
    _common(p, zeta=False, tree=False)
    p.add_argument("--write", action="store_true", help="write the mesh to <out>/sphere_<k>.txt")

    p = _subcommand(sub, "partition", help="build the block partition and write the blocks CSV")
    _common(p)
    p.add_argument("--report-tree", action="store_true", help="print the cluster tree diagnostics")

    p = _subcommand(sub, "assemble", help="assemble the compressed operator; " + ORDER_HELP)
    _common(p, order=True)
    p.add_argument("--check", action="store_true", help="compare with the dense matrix")
    p.add_argument("--iters", type=int, default=_env("iters", 30), help="power iterations for --check")

    p = _subcommand(sub, "matvec-bench", help="time matrix-vector products; " + ORDER_HELP)
    _common(p, order=True)
    p.add_argument("--repeats", type=int, default=_env("repeats", 10))

    p = _subcommand(sub, "exp-blocks", help="block counts for zeta = a + a i and a i, a = sqrt(n/128)")
    _common(p, zeta=False, tree=False)
    p.add_argument("--levels", type=_int_list, default=_env("levels", "4,5,6"))
    p.add_argument("--leaf-size", type=int, default=_env("leaf_size", 48))

    p = _subcommand(sub, "exp-conv", help="spectral error against the order; " + ORDER_HELP)
    _common(p, zeta=False, tree=False)
    p.add_argument("--levels", type=_int_list, default=_env("levels", "3,4"))
    p.add_argument("--orders", type=_int_list, default=_env("orders", "4,5,6,7"), help=ORDER_HELP)
    p.add_argument("--leaf-size", type=int, default=_env("leaf_size", 8))
    p.add_argument("--iters", type=int, default=_env("iters", 30))

    p = _subcommand(sub, "exp-nu-blocks", help="block counts for zeta = nu + a i")
    _common(p, zeta=False, tree=False, refine=5)
    p.add_argument("--nus", type=_float_list, default=_env("nus", ",".join(str(v) for v in range(0, 26, 2))))
    p.add_argument("--alpha", type=float, default=_env("alpha", None), help="default sqrt(n/128)")
    p.add_argument("--leaf-size", type=int, default=_env("leaf_size", 48))

    p = _subcommand(sub, "exp-nu-error", help="spectral errors for zeta = nu + a i; " + ORDER_HELP)
    _common(p, zeta=False, tree=False)
    p.add_argument("--nus", type=_float_list, default=_env("nus", "0,4,8,12,16,20,24"))
    p.add_argument("--orders", type=_int_list, default=_env("orders", "4,5,6,7,8,9"), help=ORDER_HELP)
    p.add_argument("--alpha", type=float, default=_env("alpha", None), help="default sqrt(n/128)")
    p.add_argument("--leaf-size", type=int, default=_env("leaf_size", 8))
    p.add_argument("--iters", type=int, default=_env("iters", 30))

    p = _subcommand(sub, "pattern", help="write the block pattern as a binary PPM image")
    _common(p)
    p.add_argument("--ratios", type=_float_list, default=_env("ratios", None),
                   help="render one image per Re/Im ratio (uses --zeta-im) instead of a single one")
    p.add_argument("--pixels", type=int, default=_env("pixels", None), help="image size (default min(n, 1024))")
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _params(a):
    from .partition import AdmissibilityParams
    return AdmissibilityParams(a.eta1, a.eta2, a.eta3, complex(a.zeta_re, a.zeta_im))


def _setup(a):
    from .clustering import build_cluster_tree
    from .directions import build_direction_sets
    from .geometry import build_sphere_mesh
    from .partition import divide

    params = _params(a)
    mesh = build_sphere_mesh(a.refine)
    tree = build_cluster_tree(mesh, a.leaf_size, mode=a.tree_mode, adaptive=a.adaptive)
    P = divide(tree, build_direction_sets(tree, params.zeta, params.eta1), params)
    return mesh, tree, P


def _schedule(a, mesh, P):
    from .geometry import mesh_metrics
    from .kernel import fixed_schedule, variable_schedule
    if a.variable_order:
        return variable_schedule(P, mesh_metrics(mesh).h_min, a.epsilon, a.c0, a.sigma_tilde)
    if a.order < 1:
        raise ValueError("--order counts points per coordinate and must be >= 1")
    return fixed_schedule(P.depth, a.order - 1)


def _out(a) -> Path:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _exp_config(a, experiment, **kw):
    from .experiments import ExperimentConfig
    return ExperimentConfig(experiment=experiment, eta=(a.eta1, a.eta2, a.eta3),
                            seed=a.seed, out_dir=str(_out(a)), **kw)


def _print_rows(rows, cols):
    print(",".join(cols))
    for r in rows:
        print(",".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_mesh(a) -> int:
    from .geometry import build_sphere_mesh, mesh_metrics, write_mesh
    mesh = build_sphere_mesh(a.refine)
    print(f"panels: {mesh.n_panels}")
    print(f"vertices: {mesh.n_vertices}")
    if mesh.n_panels >= 2:
        mm = mesh_metrics(mesh)
        print(f"h_min: {mm.h_min:.6g}")
        print(f"h_max: {mm.h_max:.6g}")
    if a.write:
        path = _out(a) / f"sphere_{a.refine}.txt"
        write_mesh(mesh, path)
        print(f"wrote {path}")
    return 0


def cmd_partition(a) -> int:
    from .clustering import check_tree_assumptions
    from .partition import sparsity_diagnostics, write_blocks_csv
    mesh, tree, P = _setup(a)
    rep = sparsity_diagnostics(P)
    print(f"n: {P.tree.n}")
    print(f"#P: {len(P)}")
    print(f"#P_near: {P.n_near}")
    print(f"#P_far: {P.n_far}")
    print(f"#P/n: {rep.blocks_per_dof:.4f}")
    print(f"max partners: {rep.max_partners}")
    if a.report_tree:
        print("\n".join(check_tree_assumptions(tree, mesh).lines()))
    path = _out(a) / "blocks.csv"
    write_blocks_csv(P, path)
    print(f"wrote {path}")
    return 0


def cmd_assemble(a) -> int:
    from .operator import assemble_dense, build_operator, spectral_error
    mesh, tree, P = _setup(a)
    S = _schedule(a, mesh, P)
    t0 = time.perf_counter()
    op = build_operator(mesh, P, S, complex(a.zeta_re, a.zeta_im), a.quad_order,
                        coupling_budget=a.coupling_budget)
    t_build = time.perf_counter() - t0
    for k, v in op.stats().items():
        print(f"{k}: {v}")
    print(f"level orders (degree): {S.level_orders.tolist()}")
    print(f"assembly time: {t_build:.3f} s")
    path = _out(a) / "operator_stats.csv"
    op.write_stats_csv(path)
    print(f"wrote {path}")
    if a.check:
        K = assemble_dense(mesh, op.zeta, a.quad_order, a.dense_limit)
        err, res = spectral_error(op, K, a.iters, a.seed, return_residual=True)
        print(f"relative spectral error: {err:.6e} (residual {res:.2e})")
    return 0


def cmd_matvec_bench(a) -> int:
    from .operator import build_operator
    mesh, tree, P = _setup(a)
    S = _schedule(a, mesh, P)
    op = build_operator(mesh, P, S, complex(a.zeta_re, a.zeta_im), a.quad_order,
                        coupling_budget=a.coupling_budget)
    rng = np.random.default_rng(a.seed)
    x = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
    op.matvec(x)
    times = []
    for _ in range(max(1, a.repeats)):
        t0 = time.perf_counter()
        op.matvec(x)
        times.append(time.perf_counter() - t0)
    print(f"n: {op.n}")
    print(f"matvec: min {min(times):.4g} s, mean {np.mean(times):.4g} s over {len(times)} runs")
    return 0


def cmd_exp_blocks(a) -> int:
    from .experiments import run_experiment
    res = run_experiment(_exp_config(a, "blocks_vs_n", levels=a.levels, leaf_size=a.leaf_size))
    _print_rows(res.rows, ["n", "case", "blocks", "blocks_per_n"])
    for n, r in res.summary["ratio"].items():
        print(f"ratio imaginary/complex at n={n}: {r:.3f}")
    return 0


def cmd_exp_conv(a) -> int:
    from .experiments import run_experiment
    cfg = _exp_config(a, "convergence_vs_m", levels=a.levels, leaf_size=a.leaf_size,
                      orders=tuple(m - 1 for m in a.orders), iters=a.iters)
    res = run_experiment(cfg)
    _print_rows(res.rows, ["n", "points", "error"])
    return 0


def cmd_exp_nu_blocks(a) -> int:
    from .experiments import run_experiment
    res = run_experiment(_exp_config(a, "blocks_vs_nu", levels=(a.refine,), nus=a.nus,
                                     alpha=a.alpha, leaf_size=a.leaf_size))
    _print_rows(res.rows, ["n", "nu", "blocks"])
    f = res.summary["fit"]
    print(f"fit: a={f['a']:.6g} b={f['b']:.6g} R2={f['r2']:.4f}")
    return 0


def cmd_exp_nu_error(a) -> int:
    from .experiments import run_experiment
    cfg = _exp_config(a, "error_vs_nu", levels=(a.refine,), nus=a.nus, alpha=a.alpha,
                      orders=tuple(m - 1 for m in a.orders), leaf_size=a.leaf_size, iters=a.iters)
    res = run_experiment(cfg)
    _print_rows(res.rows, ["n", "nu", "points", "error"])
    return 0


def cmd_pattern(a) -> int:
    from .partition import render_pattern
    out = _out(a)
    if a.ratios:
        from .experiments import render_patterns
        cfg = _exp_config(a, "pattern", levels=(a.refine,), ratios=a.ratios,
                          leaf_size=a.leaf_size, tree_mode=a.tree_mode, adaptive=a.adaptive)
        res = render_patterns(cfg, im=a.zeta_im)
        for r in res.rows:
            print(f"ratio {r['ratio']:g}: {r['blocks']} blocks, red fraction {r['red_fraction']:.4f}, {r['file']}")
        return 0
    mesh, tree, P = _setup(a)
    path = out / f"pattern_n{mesh.n_panels}.ppm"
    img = render_pattern(P, path, a.pixels)
    print(f"wrote {path} ({img.shape[1]}x{img.shape[0]})")
    return 0


COMMANDS = {
    "mesh": cmd_mesh,
    "partition": cmd_partition,
    "assemble": cmd_assemble,
    "matvec-bench": cmd_matvec_bench,
    "exp-blocks": cmd_exp_blocks,
    "exp-conv": cmd_exp_conv,
    "exp-nu-blocks": cmd_exp_nu_blocks,
    "exp-nu-error": cmd_exp_nu_error,
    "pattern": cmd_pattern,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.threads:
        import numba
        numba.set_num_threads(min(a.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return COMMANDS[a.command](a)
    except (ValueError, MemoryError, OSError, RuntimeError) as e:
        print(f"dh2 {a.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
