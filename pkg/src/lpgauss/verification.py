"""Independent checks of solver output: measure residuals, cap comparisons,
the Monge-Ampere residual of the dual support function, and weak-convergence probes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .bodies import _tangent_basis, radial
from .gauss_image import gauss_image_measure
from .measures import AtomicMeasure, DensityField
from .sphere import Cap, build_grid

CAP_DELTAS = (0.1, 0.5, 0.9)


class GridMismatchError(ValueError):
    pass


class NonSmoothWarning(UserWarning):
    pass


@dataclass
class ResidualReport:
    max_atom_residual: float  # max_i |mu_i - lambda_p_i| / |mu|
    tv_residual: float  # sum_i |mu_i - lambda_p_i| / |mu|
    cap_residuals: list = field(default_factory=list)  # (Cap, |mu(cap) - lambda_p(cap)|)
    ma_pointwise: np.ndarray | None = None

    @property
    def max_cap_residual(self):
        return max((r for _, r in self.cap_residuals), default=0.0)

    def to_json(self):
        out = {"max_atom_residual": self.max_atom_residual, "tv_residual": self.tv_residual,
               "max_cap_residual": self.max_cap_residual,
               "cap_residuals": [{"center": list(c.center), "delta": c.delta, "residual": r}
                                 for c, r in self.cap_residuals]}
        if self.ma_pointwise is not None:
            out["ma_max_abs"] = float(np.max(np.abs(self.ma_pointwise)))
            out["ma_pointwise"] = self.ma_pointwise.tolist()
        return out


def standard_caps(dim, deltas=CAP_DELTAS):
    centers = build_grid(dim, 1).dirs
    return [Cap(tuple(float(v) for v in c), d) for d in deltas for c in centers]


def _atoms_on(dirs, mdirs, masses, tol=1e-9):
    d, idx = cKDTree(dirs).query(mdirs)
    if np.any(d > tol):
        raise GridMismatchError("Gauss image atoms do not lie on the directions of mu")
    out = np.zeros(len(dirs))
    np.add.at(out, idx, masses)
    return out


def measure_residual(mu, gim, grid=None, caps=None):
    """Compare an atomic ``mu`` with a Gauss image measure atom by atom and on caps.

    ``gim`` atoms must sit on the directions of ``mu`` (or of ``grid``).
    """
    if not isinstance(mu, AtomicMeasure):
        raise TypeError("mu must be atomic")
    dirs = grid.dirs if grid is not None else mu.dirs
    m = _atoms_on(dirs, mu.dirs, mu.masses)
    lp = _atoms_on(dirs, gim.dirs, gim.masses)
    total = mu.total_mass
    diff = np.abs(m - lp)
    caps = standard_caps(mu.dim) if caps is None else caps
    cap_res = []
    for cap in caps:
        inside = cap.contains(dirs)
        cap_res.append((cap, float(abs(np.sum(m[inside]) - np.sum(lp[inside])))))
    return ResidualReport(float(np.max(diff) / total), float(np.sum(diff) / total), cap_res)


# --------------------------------------------------------------------------
# Monge-Ampere residual


def _quad_design(s):
    # columns: 1, s_1..s_d, then the upper-triangular second-order monomials
    n, d = s.shape
    cols = [np.ones(n)] + [s[:, i] for i in range(d)]
    for i in range(d):
        for j in range(i, d):
            cols.append(s[:, i] * s[:, j] * (0.5 if i == j else 1.0))
    return np.stack(cols, axis=1)


def fit_support_derivatives(dirs, h, k=None):
    """Spherical gradient and ``hess h + h I`` at every direction by local quadratic fits.

    ``h`` is fitted by a quadratic ``q`` in gnomonic coordinates of the tangent
    plane. The one-homogeneous extension on that plane is
    ``sqrt(1 + |s|^2) q(s)``, whose Hessian at the node is ``q''(0) + q(0) I``
    and whose gradient is ``q'(0)``; constants are reproduced exactly. Returns
    ``(grad, A, fit_err)`` with ``grad`` of shape (N, dim), ``A`` of shape
    (N, dim-1, dim-1) and the relative rms misfit per node.
    """
    dirs = np.asarray(dirs, dtype=float)
    h = np.asarray(h, dtype=float)
    n, dim = dirs.shape
    if k is None:
        k = 12 if dim == 3 else 5
    need = 6 if dim == 3 else 3
    k = min(k, n)
    if k < need:
        raise ValueError(f"a quadratic fit needs at least {need} nodes, got {n}")
    _, nb = cKDTree(dirs).query(dirs, k=k)
    d = dim - 1
    grad = np.zeros((n, dim))
    A = np.zeros((n, d, d))
    err = np.zeros(n)
    for i in range(n):
        c = dirs[i]
        if dim == 3:
            e = np.array(_tangent_basis(c))
        else:
            e = np.array([[-c[1], c[0]]])
        x = dirs[nb[i]]
        s = (x @ e.T) / (x @ c)[:, None]
        F = h[nb[i]]
        M = _quad_design(s)
        coef, *_ = np.linalg.lstsq(M, F, rcond=None)
        err[i] = np.sqrt(np.mean((M @ coef - F) ** 2)) / abs(h[i])
        grad[i] = coef[1:1 + d] @ e
        q = coef[1 + d:]
        if d == 1:
            A[i, 0, 0] = q[0] + coef[0]
        else:
            A[i] = [[q[0] + coef[0], q[1]], [q[1], q[2] + coef[0]]]
    return grad, A, err


def _eval_density(g, nu):
    if g is None:
        return np.ones(len(nu))
    if isinstance(g, DensityField):
        return g.value_at(nu)
    if callable(g):
        return np.asarray(g(nu), dtype=float)
    g = np.asarray(g, dtype=float)
    return np.broadcast_to(g, (len(nu),)).astype(float)


def ma_residual(K, f_density, g_density=None, p=2.0, dirs=None, k=None, smooth_tol=1e-2):
    """Pointwise residual of the Monge-Ampere equation for ``h = 1/rho_K``.

    At each node ``x`` returns
    ``g(nu) h^{1-p} det(hess h + h I) / (|grad h|^2 + h^2)^{n/2} - f(x)``
    with ``nu`` the unit vector along ``grad h + h x``. ``f_density`` is one
    value per node (or a scalar), ``g_density`` a scalar, per-node array,
    callable on directions, or DensityField. Nodes default to the standard
    grid at level 4 (dim 3) or 7 (dim 2).
    """
    if dirs is None:
        dirs = build_grid(K.dim, 4 if K.dim == 3 else 7).dirs
    dirs = np.asarray(dirs, dtype=float)
    h = 1.0 / radial(K, dirs)
    grad, A, err = fit_support_derivatives(dirs, h, k)
    det = np.linalg.det(A) if A.shape[1] > 1 else A[:, 0, 0]
    w = grad + h[:, None] * dirs
    wn = np.linalg.norm(w, axis=1)
    nu = w / wn[:, None]
    g = _eval_density(g_density, nu)
    f = np.broadcast_to(np.asarray(f_density, dtype=float), (len(dirs),))
    res = g * h ** (1.0 - p) * det / wn ** K.dim - f
    if np.max(err) > smooth_tol or len(K.vertices) < len(dirs) // 2:
        warnings.warn("non-smooth body: Monge-Ampere residual is unreliable", NonSmoothWarning,
                      stacklevel=2)
    return res


# --------------------------------------------------------------------------
# weak convergence


def weak_convergence_probe(Ks, K0, lam, f):
    """``|int f dlambda(K_i, .) - int f dlambda(K_0, .)|`` for each body of the sequence."""

    def integral(K):
        g = gauss_image_measure(K, lam)
        return float(np.sum(np.asarray(f(g.dirs), dtype=float) * g.cone_masses))

    base = integral(K0)
    return [abs(integral(K) - base) for K in Ks]
