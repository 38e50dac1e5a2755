"""Entropy functionals G and E, the objective Phi and its first variations.

On the normal cone of a vertex ``v`` the support function is
``h_K(x) = |v| <v/|v|, x>``, so

    G(K) = -sum_v [ log|v| * lambda(cone_v) + int_cone_v log<v/|v|, x> dlambda ].

The cone masses are exact (angle excess); only the smooth second term is
integrated numerically. ``E`` uses the same split over the radial projections
of the facets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import RadialField, hull_of_radial, lp_harmonic_combination, radial, radial_facet_regions
from .gauss_image import (_require_density, cone_pieces, lp_gauss_image_measure, piece_integrals,
                          piece_masses)
from .measures import AtomicMeasure, DensityField
from .sphere import arc_pieces, polygon_pieces


def _log_inner(dirs):
    def f(owner, x):
        return np.log(np.einsum("ij,ij->i", dirs[owner], x))
    return f


def _g_terms(K, lam):
    pieces = cone_pieces(K, lam)
    nv = len(K.vertices)
    m = piece_masses(pieces, nv, K.dim)
    q = piece_integrals(pieces, nv, K.dim, _log_inner(K.vertex_dirs))
    return m, q


def entropy_G(K, lam):
    """``G(K) = -int log h_K dlambda``."""
    _require_density(lam)
    m, q = _g_terms(K, lam)
    return float(-np.sum(np.log(K.vertex_radii) * m + q))


def entropy_E(K, lam):
    """``E(K) = int log rho_K dlambda``."""
    _require_density(lam)
    regions = radial_facet_regions(K)
    nf = len(regions)
    owners = np.arange(nf)
    if K.dim == 2:
        pieces = arc_pieces([r.start for r in regions], [r.end for r in regions], owners, lam)
    else:
        pieces = polygon_pieces([r.vertices for r in regions], owners, lam)
    m = piece_masses(pieces, nf, K.dim)
    q = piece_integrals(pieces, nf, K.dim, _log_inner(K.normals))
    return float(np.sum(np.log(K.offsets) * m - q))


@dataclass
class ObjectiveContext:
    """Data of the maximization problem on a fixed direction grid.

    ``mu`` holds one atom mass per grid direction. ``phi_offset`` is the raw
    objective of the constant field, i.e. of the polytope inscribed in the
    unit ball with vertices at the grid directions; reported objective
    values are measured from it, so constants evaluate to 0.
    """

    lam: DensityField
    mu: np.ndarray
    p: float
    grid: object
    lam_mass: float = field(init=False)
    mu_mass: float = field(init=False)
    phi_offset: float = field(init=False)

    def __post_init__(self):
        _require_density(self.lam)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (len(self.grid),):
            raise ValueError("mu needs one atom mass per grid direction")
        if self.p == 0:
            raise ValueError("p must be nonzero")
        self.lam_mass = self.lam.total_mass
        self.mu_mass = float(np.sum(self.mu))
        if not (self.lam_mass > 0 and self.mu_mass > 0):
            raise ValueError("degenerate measure: total mass is zero")
        self.phi_offset = 0.0
        self.phi_offset = evaluate(np.zeros(len(self.grid)), self).phi_raw

    @classmethod
    def from_measures(cls, mu, lam, p, grid=None):
        if isinstance(mu, AtomicMeasure):
            if grid is None:
                from .sphere import SphereGrid
                grid = SphereGrid(mu.dirs)
            masses = mu.on_grid(grid)
        else:
            masses = np.asarray(mu, dtype=float)
        return cls(lam, masses, float(p), grid)


@dataclass
class Evaluation:
    phi: float
    phi_raw: float
    grad: np.ndarray
    body: object
    cone_mass: np.ndarray  # per grid direction, 0 when absorbed
    G: float
    log_norm: float


def _log_norm(log_r, ctx):
    # log || r : mu ||_{-p} computed in log space
    on = ctx.mu > 0
    a = -ctx.p * log_r[on]
    shift = np.max(a)
    s = np.sum(ctx.mu[on] * np.exp(a - shift))
    return -(np.log(s / ctx.mu_mass) + shift) / ctx.p, a, shift, s


def evaluate(log_r, ctx):
    """Objective and gradient with respect to ``log r`` in one pass."""
    log_r = np.asarray(log_r, dtype=float)
    r = np.exp(log_r)
    K = hull_of_radial(ctx.grid, r)
    m, q = _g_terms(K, ctx.lam)
    G = float(-np.sum(np.log(K.vertex_radii) * m + q))
    lognorm, a, shift, s = _log_norm(log_r, ctx)
    phi_raw = G / ctx.lam_mass + lognorm
    cone = np.zeros(len(ctx.grid))
    cone[K.source] = m
    wts = np.zeros(len(ctx.grid))
    wts[ctx.mu > 0] = ctx.mu[ctx.mu > 0] * np.exp(a - shift) / s
    grad = -cone / ctx.lam_mass + wts
    return Evaluation(phi_raw - ctx.phi_offset, phi_raw, grad, K, cone, G, lognorm)


def _as_log(r):
    if isinstance(r, RadialField):
        return r.log_r
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("radial values must be positive")
    return np.log(r)


def phi(r, ctx):
    """Objective of a positive radial field (a RadialField or one radius per grid direction)."""
    return evaluate(_as_log(r), ctx).phi


def phi_gradient(r, ctx):
    """Gradient of the objective with respect to ``log r``."""
    return evaluate(_as_log(r), ctx).grad


def phi_raw(r, ctx):
    """Objective without the constant-field offset."""
    return evaluate(_as_log(r), ctx).phi_raw


def harmonic_derivative(K, L, p, lam):
    """Analytic derivative of ``G(K +^_p t L)`` at ``t = 0``."""
    g = lp_gauss_image_measure(K, lam, p)
    rl = radial(L, g.dirs)
    if p == 0:
        return float(-np.sum(np.log(rl) * g.cone_masses))
    return float(np.sum(rl ** (-p) * g.masses) / p)


def harmonic_derivative_fd(K, L, p, lam, step=1e-4, dirs=None):
    """Central difference of ``t -> G(K +^_p t L)``; the combination is taken on
    the vertex directions of ``K`` unless ``dirs`` is given."""
    x = K.vertex_dirs if dirs is None else dirs
    gp = entropy_G(lp_harmonic_combination(K, L, 1.0, step, p, dirs=x), lam)
    gm = entropy_G(lp_harmonic_combination(K, L, 1.0, -step, p, dirs=x), lam)
    return (gp - gm) / (2.0 * step)
