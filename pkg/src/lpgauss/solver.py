"""Solve ``mu = lambda_p(K, .)`` by maximizing the objective over log-radial fields.

The iteration is gradient ascent in ``log r`` with a Barzilai-Borwein trial
step and Armijo backtracking. Every iterate is normalized so that
``sum_i mu_i r_i^{-p} = |lambda|``; at a stationary point this makes
``mu_i = r_i^p lambda(K, {u_i})`` hold atom by atom.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bodies import DegenerateHullError, RadialField, hausdorff_distance
from .entropy import ObjectiveContext, evaluate
from .gauss_image import lp_gauss_image_measure
from .measures import (AtomicMeasure, DensityField, check_even, check_great_subsphere_vanishing,
                       check_not_hemisphere_concentrated)
from .sphere import SphereGrid

log = logging.getLogger(__name__)

CONVERGED = "Converged"
DEGENERACY = "DegeneracyDetected"
MAX_ITERS = "MaxIters"

# Armijo acceptance when the predicted gain is below the roundoff floor of Phi
_ROUNDOFF_SLACK = 1e-14


class AdmissibilityError(ValueError):
    """Input violates a hypothesis of the existence results."""

    def __init__(self, condition, message):
        super().__init__(message)
        self.condition = condition


@dataclass
class SolveOptions:
    p: float
    max_iters: int = 5000
    grad_tol: float = 1e-8
    residual_tol: float = 1e-6
    initial_step: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    enforce_even: bool = False
    degeneracy_ratio_cap: float = 1e6
    seed: int = 0
    max_backtracks: int = 60

    def __post_init__(self):
        self.p = float(self.p)
        if self.p == 0 or not np.isfinite(self.p):
            raise AdmissibilityError("p", "p must be nonzero")
        for name in ("grad_tol", "residual_tol", "initial_step", "armijo_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.degeneracy_ratio_cap > 1:
            raise ValueError("degeneracy_ratio_cap must exceed 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def to_json(self):
        return asdict(self)


@dataclass
class SolveReport:
    status: str
    body: object
    radial: RadialField
    phi_history: list
    grad_inf_norm: float
    residual: float
    tv_residual: float
    iterations: int
    warnings: list = field(default_factory=list)
    options: SolveOptions | None = None
    lp_masses: np.ndarray | None = None  # lambda_p mass per grid direction

    @property
    def converged(self):
        return self.status == CONVERGED

    def to_json(self):
        return {
            "status": self.status,
            "residual": self.residual,
            "tv_residual": self.tv_residual,
            "grad_inf_norm": self.grad_inf_norm,
            "iterations": self.iterations,
            "phi_history": [float(v) for v in self.phi_history],
            "warnings": list(self.warnings),
            "options": self.options.to_json() if self.options else None,
            "radii": self.radial.r.tolist(),
            "min_radius": float(np.min(self.radial.r)),
            "max_radius": float(np.max(self.radial.r)),
        }


# --------------------------------------------------------------------------
# field operations


def _log_scale(log_r, ctx):
    on = ctx.mu > 0
    s = logsumexp(-ctx.p * log_r[on], b=ctx.mu[on])
    return (s - np.log(ctx.lam_mass)) / ctx.p


def normalize(r, ctx):
    """Rescale ``r`` so that ``sum_i mu_i r_i^{-p} = |lambda|``; the objective is unchanged."""
    if ctx.p == 0:
        raise AdmissibilityError("p", "p must be nonzero")
    return RadialField(r.grid, r.log_r + _log_scale(r.log_r, ctx))


def even_project(r):
    """Replace ``log r`` by its antipodal average."""
    a = r.grid.antipode
    if a is None:
        raise ValueError("grid is not antipodally symmetric")
    return RadialField(r.grid, 0.5 * (r.log_r + r.log_r[a]))


def _even(v, a):
    return 0.5 * (v + v[a])


# --------------------------------------------------------------------------
# admissibility


def check_admissible(mu, lam, opts):
    """Reject inputs outside the hypotheses of the existence results.

    Returns a list of warnings for inputs that are accepted as discretizations.
    """
    warnings = []
    if not isinstance(lam, DensityField):
        raise AdmissibilityError("absolute continuity",
                                 "lambda must be absolutely continuous (a density field)")
    if not lam.strictly_positive:
        raise AdmissibilityError("positive density",
                                 "lambda must have a strictly positive density on every cell")
    if mu.total_mass <= 0:
        raise AdmissibilityError("nonzero mu", "degenerate measure: mu has zero total mass")
    ok, witness, _ = check_not_hemisphere_concentrated(mu, opts.p)
    if not ok:
        w = np.round(witness, 6).tolist()
        if opts.p > 0:
            raise AdmissibilityError(
                "hemisphere",
                "mu is concentrated on a closed hemisphere (the existence result for p > 0 "
                f"requires positive mass on every open hemisphere); witness normal {w}")
        raise AdmissibilityError(
            "hemisphere", f"mu is concentrated on a closed hemisphere; witness normal {w}")
    if opts.p < 0:
        if not (check_even(mu) and check_even(lam)):
            raise AdmissibilityError(
                "even", "p < 0 requires even mu and even lambda (origin-symmetric existence result)")
        if not opts.enforce_even:
            raise AdmissibilityError(
                "even", "p < 0 requires enforce_even (origin-symmetric existence result)")
        ok, note = check_great_subsphere_vanishing(mu)
        if not ok:
            warnings.append("p < 0 with atomic mu: " + note)
    return warnings


# --------------------------------------------------------------------------
# the ascent loop


def _residuals(ev, ctx, log_r):
    lp = np.exp(ctx.p * log_r) * ev.cone_mass
    diff = np.abs(ctx.mu - lp)
    return float(np.max(diff) / ctx.mu_mass), float(np.sum(diff) / ctx.mu_mass), lp


def solve(mu, lam, opts, grid=None):
    """Maximize the objective for atomic ``mu`` on grid directions and density ``lam``.

    ``grid`` defaults to the directions of ``mu`` in their given order.
    """
    if not isinstance(opts, SolveOptions):
        raise TypeError("opts must be SolveOptions")
    if not isinstance(mu, AtomicMeasure):
        raise AdmissibilityError("atomic mu", "mu must be atomic on the grid directions")
    warnings = check_admissible(mu, lam, opts)
    if grid is None:
        grid = SphereGrid(mu.dirs)
    ctx = ObjectiveContext(lam, mu.on_grid(grid), opts.p, grid)
    a = grid.antipode
    if opts.enforce_even and a is None:
        raise AdmissibilityError("even", "enforce_even needs an antipodally symmetric grid")

    def prepare(x):
        # projecting first keeps the normalization exact; with even mu the
        # normalization preserves evenness
        if opts.enforce_even:
            x = _even(x, a)
        return x + _log_scale(x, ctx)

    log_cap = np.log(opts.degeneracy_ratio_cap)
    x = prepare(np.zeros(len(grid)))
    ev = evaluate(x, ctx)
    history = [ev.phi]
    step = opts.initial_step
    prev = None
    status = MAX_ITERS
    it = 0
    while True:
        g = _even(ev.grad, a) if opts.enforce_even else ev.grad
        gnorm = float(np.max(np.abs(g)))
        res, tv, lp = _residuals(ev, ctx, x)
        if np.ptp(x) > log_cap:
            status = DEGENERACY
            warnings.append(f"radius ratio exceeded {opts.degeneracy_ratio_cap:g}")
            break
        if gnorm <= opts.grad_tol and res <= opts.residual_tol:
            status = CONVERGED
            break
        if it >= opts.max_iters:
            break
        if prev is not None:
            dx = x - prev[0]
            dx = dx - dx.mean()
            dg = g - prev[1]
            curv = -float(dx @ dg)
            if curv > 0:
                step = float(dx @ dx) / curv
            else:
                step = min(step * 2.0, 1e6)
        g2 = float(g @ g)
        accepted = None
        s = step
        for _ in range(opts.max_backtracks):
            xn = prepare(x + s * g)
            try:
                en = evaluate(xn, ctx)
            except DegenerateHullError:
                s *= opts.backtrack_factor
                continue
            gain = opts.armijo_c * s * g2
            if en.phi >= ev.phi + gain or (gain < _ROUNDOFF_SLACK and en.phi >= ev.phi - _ROUNDOFF_SLACK):
                accepted = (xn, en, s)
                break
            s *= opts.backtrack_factor
        if accepted is None:
            warnings.append(f"line search stalled at iteration {it}")
            break
        prev = (x, g)
        x, ev, step = accepted
        history.append(ev.phi)
        it += 1
    res, tv, lp = _residuals(ev, ctx, x)
    g = _even(ev.grad, a) if opts.enforce_even else ev.grad
    rep = SolveReport(status, ev.body, RadialField(grid, x), history, float(np.max(np.abs(g))),
                      res, tv, it, warnings, opts, lp)
    log.debug("solve finished: %s after %d iterations, residual %.3e", status, it, res)
    return rep


@dataclass
class RoundTrip:
    report: SolveReport
    mu: AtomicMeasure
    residual: object  # verification.ResidualReport
    hausdorff: float  # reported only; uniqueness is not asserted


def forward_then_solve_roundtrip(K0, lam, p, opts=None, grid=None):
    """Solve for ``mu = lambda_p(K0, .)`` and compare the recovered measure with ``mu``.

    The grid defaults to the vertex directions of ``K0``.
    """
    from .verification import measure_residual

    if grid is None:
        grid = SphereGrid(K0.vertex_dirs)
    g = lp_gauss_image_measure(K0, lam, p)
    d, idx = grid.tree.query(g.dirs)
    if np.any(d > 1e-9):
        raise ValueError("vertices of K0 must lie on grid directions")
    masses = np.zeros(len(grid))
    masses[idx] = g.masses
    mu = AtomicMeasure(grid.dirs, masses)
    if opts is None:
        opts = SolveOptions(p, enforce_even=p < 0)
    rep = solve(mu, lam, opts, grid=grid)
    vr = measure_residual(mu, lp_gauss_image_measure(rep.body, lam, p), grid=grid)
    return RoundTrip(rep, mu, vr, float(hausdorff_distance(rep.body, K0)))
