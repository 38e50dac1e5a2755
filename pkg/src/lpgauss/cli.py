"""Command-line interface.

Exit codes: 0 success (or Converged), 1 input or runtime error, 2 admissibility
rejection, 3 DegeneracyDetected, 4 MaxIters.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bodies import (load_body, polytope_to_csv, polytope_to_obj, radial, save_body,
                     square, support)
from .entropy import ObjectiveContext, entropy_E, entropy_G, evaluate
from .gauss_image import gauss_image_to_json, lp_gauss_image_measure
from .measures import (AtomicMeasure, DensityField, check_even, check_great_subsphere_vanishing,
                       check_not_hemisphere_concentrated, load_measure, save_measure,
                       write_json_atomic, write_text_atomic)
from .solver import (CONVERGED, DEGENERACY, MAX_ITERS, AdmissibilityError, SolveOptions, solve)
from .sphere import MAX_LEVEL, SphereGrid, build_grid
from .verification import ma_residual, measure_residual

log = logging.getLogger("lpgauss")

EXIT_OK, EXIT_ERROR, EXIT_ADMISSIBILITY, EXIT_DEGENERACY, EXIT_MAXITERS = 0, 1, 2, 3, 4
STATUS_EXIT = {CONVERGED: EXIT_OK, DEGENERACY: EXIT_DEGENERACY, MAX_ITERS: EXIT_MAXITERS}


class UsageError(ValueError):
    pass


def _emit(obj, out=None):
    if out:
        write_json_atomic(obj, out)
    else:
        sys.stdout.write(json.dumps(obj, indent=1) + "\n")


def _level(dim, level):
    if level is None:
        return None
    if not 0 <= level <= MAX_LEVEL[dim]:
        raise UsageError(f"level must lie in [0, {MAX_LEVEL[dim]}] for dim {dim}")
    return level


def _atomic(m, what):
    if not isinstance(m, AtomicMeasure):
        raise UsageError(f"{what} must be an atomic measure")
    return m


def _density(m, what):
    if not isinstance(m, DensityField):
        raise UsageError(f"{what} must be a density measure")
    return m


# --------------------------------------------------------------------------
# commands


def cmd_gen_measure(args):
    if args.kind == "from-body":
        if not (args.body and args.lam):
            raise UsageError("from-body needs --body and --lambda")
        K = load_body(args.body)
        lam = _density(load_measure(args.lam), "--lambda")
        g = lp_gauss_image_measure(K, lam, args.p)
        write_json_atomic(gauss_image_to_json(g), args.out)
        return EXIT_OK
    if args.kind == "square":
        # the square fixture: atoms of lambda_p(Q) for Lebesgue lambda
        g = lp_gauss_image_measure(square(), DensityField.uniform(build_grid(2, 0)), args.p)
        write_json_atomic(gauss_image_to_json(g), args.out)
        return EXIT_OK
    level = _level(args.dim, args.level if args.level is not None else 3)
    grid = build_grid(args.dim, level)
    if args.kind == "uniform":
        if args.c <= 0:
            raise UsageError("--c must be positive")
        values = np.full(len(grid), args.c)
    else:
        a = np.array([float(t) for t in args.axis.split(",")])
        if a.shape != (args.dim,) or not np.linalg.norm(a) > 0:
            raise UsageError(f"--axis needs {args.dim} comma-separated components")
        if args.k < 0 or args.c1 < 0 or args.c2 < 0:
            raise UsageError("bump parameters must be nonnegative")
        a = a / np.linalg.norm(a)
        s = grid.dirs @ a
        values = args.c1 + args.c2 * np.maximum(0.0, s) ** args.k
        if args.even:
            values = args.c1 + 0.5 * args.c2 * (np.maximum(0.0, s) ** args.k
                                                + np.maximum(0.0, -s) ** args.k)
    lam = DensityField(grid, values)
    m = AtomicMeasure(grid.dirs, lam.cell_masses()) if args.atomic else lam
    save_measure(m, args.out)
    return EXIT_OK


def cmd_gauss_image(args):
    K = load_body(args.body)
    lam = _density(load_measure(args.lam), "--lambda")
    g = lp_gauss_image_measure(K, lam, args.p)
    _emit(gauss_image_to_json(g), args.out)
    return EXIT_OK


def _solve_grid(mu, level):
    # None lets the solver build the grid from mu after the admissibility checks
    if level is None:
        return None
    return build_grid(mu.dim, _level(mu.dim, level))


def cmd_solve(args):
    opts = SolveOptions(args.p, max_iters=args.max_iters, enforce_even=args.even,
                        residual_tol=args.tol, grad_tol=args.grad_tol, seed=args.seed)
    mu = _atomic(load_measure(args.mu), "--mu")
    lam = load_measure(args.lam)
    grid = _solve_grid(mu, args.level)
    rep = solve(mu, lam, opts, grid=grid)
    out = rep.to_json()
    base = os.path.splitext(args.out)[0]
    body_json = base + ".body.json"
    save_body(rep.body, body_json)
    out["body_json"] = os.path.basename(body_json)
    if args.export_body:
        _export(rep.body, args.export_body)
        out["body_export"] = os.path.basename(args.export_body)
    write_json_atomic(out, args.out)
    msg = f"{rep.status}: residual {rep.residual:.3e} after {rep.iterations} iterations"
    print(msg, file=sys.stderr)
    return STATUS_EXIT[rep.status]


def _export(K, path, fmt=None):
    fmt = fmt or os.path.splitext(path)[1].lstrip(".").lower()
    if fmt == "obj":
        write_text_atomic(polytope_to_obj(K), path)
    elif fmt == "csv":
        write_text_atomic(polytope_to_csv(K), path)
    elif fmt == "json":
        save_body(K, path)
    else:
        raise UsageError(f"unknown export format {fmt!r} (use obj, csv or json)")


def cmd_export(args):
    _export(load_body(args.body), args.out, args.format)
    return EXIT_OK


def cmd_verify(args):
    K = load_body(args.body)
    mu = _atomic(load_measure(args.mu), "--mu")
    lam = _density(load_measure(args.lam), "--lambda")
    grid = SphereGrid(mu.dirs)
    rep = measure_residual(mu, lp_gauss_image_measure(K, lam, args.p), grid=grid)
    if args.ma:
        f = mu.on_grid(grid) / grid.areas
        rep.ma_pointwise = ma_residual(K, f, lam, args.p, dirs=grid.dirs)
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def cmd_entropy(args):
    K = load_body(args.body)
    lam = _density(load_measure(args.lam), "--lambda")
    out = {"G": entropy_G(K, lam), "E": entropy_E(K, lam)}
    if args.mu is not None:
        if args.p is None:
            raise UsageError("--mu needs --p")
        mu = _atomic(load_measure(args.mu), "--mu")
        grid = SphereGrid(mu.dirs)
        ctx = ObjectiveContext(lam, mu.on_grid(grid), args.p, grid)
        ev = evaluate(np.log(radial(K, grid.dirs)), ctx)
        out.update({"phi": ev.phi, "phi_raw": ev.phi_raw, "phi_offset": ctx.phi_offset,
                    "grad_inf_norm": float(np.max(np.abs(ev.grad)))})
    _emit(out, args.out)
    return EXIT_OK


def cmd_check_measure(args):
    m = load_measure(args.input)
    ok, witness, min_phi = check_not_hemisphere_concentrated(m, args.p)
    sub_ok, note = check_great_subsphere_vanishing(m)
    out = {"dim": m.dim, "kind": m.kind, "total_mass": m.total_mass,
           "not_hemisphere_concentrated": bool(ok),
           "witness": None if witness is None else np.asarray(witness).tolist(),
           "min_hemisphere_phi": min_phi, "even": check_even(m),
           "vanishes_on_great_subspheres": bool(sub_ok), "note": note}
    if isinstance(m, DensityField):
        out["strictly_positive"] = m.strictly_positive
    _emit(out, args.out)
    return EXIT_OK


def cmd_plot_data(args):
    K = load_body(args.body)
    if args.kind == "profile":
        level = _level(K.dim, args.level if args.level is not None else (7 if K.dim == 2 else 3))
        dirs = build_grid(K.dim, level).dirs
        rho, h = radial(K, dirs), support(K, dirs)
        if K.dim == 2:
            theta = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2 * np.pi)
            o = np.argsort(theta)
            rows = ["theta,x,y,rho,h"] + [f"{theta[i]!r},{dirs[i, 0]!r},{dirs[i, 1]!r},"
                                          f"{rho[i]!r},{h[i]!r}" for i in o]
        else:
            rows = ["x,y,z,rho,h"] + [",".join(repr(float(v)) for v in (*d, r, s))
                                      for d, r, s in zip(dirs, rho, h)]
    else:
        if not (args.mu and args.lam and args.p is not None):
            raise UsageError("residual data needs --mu, --lambda and --p")
        mu = _atomic(load_measure(args.mu), "--mu")
        lam = _density(load_measure(args.lam), "--lambda")
        grid = SphereGrid(mu.dirs)
        g = lp_gauss_image_measure(K, lam, args.p)
        lp = np.zeros(len(grid))
        d, idx = grid.tree.query(g.dirs)
        if np.any(d > 1e-9):
            raise UsageError("body vertices do not lie on the directions of mu")
        lp[idx] = g.masses
        m = mu.on_grid(grid)
        cols = ["x", "y", "z"][:K.dim]
        rows = [",".join(cols + ["mu", "lambda_p", "diff"])]
        rows += [",".join(repr(float(v)) for v in (*u, a, b, a - b))
                 for u, a, b in zip(grid.dirs, m, lp)]
    write_text_atomic("\n".join(rows) + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="lpgauss", description=(
        "L_p Gauss image measures of polytopes and a variational solver for mu = lambda_p(K, .)."),
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    g = sub.add_parser("gen-measure", help="write a fixture measure", formatter_class=fmt)
    g.add_argument("kind", choices=["uniform", "bump", "from-body", "square"])
    g.add_argument("--dim", type=int, choices=[2, 3], default=2)
    g.add_argument("--level", type=int, default=None, help="grid level (default 3)")
    g.add_argument("--c", type=float, default=1.0, help="uniform density value")
    g.add_argument("--c1", type=float, default=1.0, help="bump base value")
    g.add_argument("--c2", type=float, default=1.0, help="bump amplitude")
    g.add_argument("--k", type=float, default=2.0, help="bump exponent")
    g.add_argument("--axis", default="0,0,1", help="bump axis, comma separated")
    g.add_argument("--even", action="store_true", help="symmetrize the bump")
    g.add_argument("--atomic", action="store_true",
                   help="write atoms at the grid directions carrying the cell masses")
    g.add_argument("--body", help="body JSON (from-body)")
    g.add_argument("--lambda", dest="lam", help="density JSON (from-body)")
    g.add_argument("--p", type=float, default=0.0, help="exponent (from-body, square)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_measure)

    g = sub.add_parser("gauss-image", help="forward map lambda_p(K, .)", formatter_class=fmt)
    g.add_argument("--body", required=True)
    g.add_argument("--lambda", dest="lam", required=True)
    g.add_argument("--p", type=float, default=0.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gauss_image)

    d = SolveOptions(1.0)
    g = sub.add_parser("solve", help="solve mu = lambda_p(K, .)", formatter_class=fmt)
    g.add_argument("--mu", required=True, help="atomic measure JSON")
    g.add_argument("--lambda", dest="lam", required=True, help="density JSON")
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--even", action="store_true", help="restrict to origin-symmetric bodies")
    g.add_argument("--level", type=int, default=None,
                   help="solve on the standard grid of this level (default: the atoms of mu)")
    g.add_argument("--tol", type=float, default=d.residual_tol, help="residual tolerance")
    g.add_argument("--grad-tol", type=float, default=d.grad_tol)
    g.add_argument("--max-iters", type=int, default=d.max_iters)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--out", required=True, help="report JSON")
    g.add_argument("--export-body", help="also export the body (.obj, .csv or .json)")
    g.set_defaults(func=cmd_solve)

    g = sub.add_parser("verify", help="residuals of a body against mu", formatter_class=fmt)
    g.add_argument("--body", required=True)
    g.add_argument("--mu", required=True)
    g.add_argument("--lambda", dest="lam", required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--ma", action="store_true", help="include the Monge-Ampere residual")
    g.add_argument("--out")
    g.set_defaults(func=cmd_verify)

    g = sub.add_parser("entropy", help="entropy functionals and objective", formatter_class=fmt)
    g.add_argument("--body", required=True)
    g.add_argument("--lambda", dest="lam", required=True)
    g.add_argument("--p", type=float, default=None)
    g.add_argument("--mu", default=None)
    g.add_argument("--out")
    g.set_defaults(func=cmd_entropy)

    g = sub.add_parser("check-measure", help="admissibility diagnostics", formatter_class=fmt)
    g.add_argument("--input", required=True)
    g.add_argument("--p", type=float, default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_check_measure)

    g = sub.add_parser("export", help="convert a body file", formatter_class=fmt)
    g.add_argument("--body", required=True)
    g.add_argument("--format", choices=["obj", "csv", "json"], default=None,
                   help="default: from the output extension")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export)

    g = sub.add_parser("plot-data", help="CSV profiles and residual fields", formatter_class=fmt)
    g.add_argument("--body", required=True)
    g.add_argument("--kind", choices=["profile", "residual"], default="profile")
    g.add_argument("--level", type=int, default=None, help="profile grid level")
    g.add_argument("--mu")
    g.add_argument("--lambda", dest="lam")
    g.add_argument("--p", type=float, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except AdmissibilityError as exc:
        print(f"error: inadmissible input: {exc}", file=sys.stderr)
        if getattr(args, "out", None) and args.command == "solve":
            write_json_atomic({"status": "Rejected", "condition": exc.condition,
                               "message": str(exc)}, args.out)
        return EXIT_ADMISSIBILITY
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
