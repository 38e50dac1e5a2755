"""Finite Borel measures on the sphere: atomic measures and cellwise densities.

The solver takes the target measure as atoms on grid directions and the
reference measure as a piecewise-constant density with respect to spherical
Lebesgue measure.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .sphere import build_grid, sphere_measure

log = logging.getLogger(__name__)


class DegenerateMeasureError(ValueError):
    pass


class MeasureFormatError(ValueError):
    pass


class Measure:
    """Common interface of :class:`AtomicMeasure` and :class:`DensityField`."""

    kind = None

    @property
    def total_mass(self):
        raise NotImplementedError

    def support_dirs(self):
        """Directions carrying positive mass (atoms, or cell directions)."""
        raise NotImplementedError

    def scaled(self, c):
        raise NotImplementedError


class AtomicMeasure(Measure):
    kind = "atomic"

    def __init__(self, dirs, masses):
        dirs = np.array(dirs, dtype=float)
        masses = np.array(masses, dtype=float)
        if dirs.ndim != 2 or dirs.shape[1] not in (2, 3):
            raise MeasureFormatError("atom directions must have shape (N, 2) or (N, 3)")
        if masses.shape != (len(dirs),):
            raise MeasureFormatError("one mass per atom is required")
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise MeasureFormatError("atom masses must be finite and nonnegative")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            dirs = dirs / norms[:, None]
        self.dirs = dirs
        self.masses = masses

    def __len__(self):
        return len(self.masses)

    @property
    def dim(self):
        return self.dirs.shape[1]

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    def support_dirs(self):
        return self.dirs[self.masses > 0]

    def scaled(self, c):
        return AtomicMeasure(self.dirs, c * self.masses)

    def on_grid(self, grid, tol=1e-9):
        """Masses re-indexed by the directions of ``grid``; atoms must sit on grid directions."""
        d, idx = grid.tree.query(self.dirs)
        if np.any(d > tol):
            raise ValueError("atoms do not lie on the grid directions")
        out = np.zeros(len(grid))
        np.add.at(out, idx, self.masses)
        return out


class DensityField(Measure):
    """Piecewise-constant density, one nonnegative value per grid cell."""

    kind = "density"

    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if np.isscalar(values) or values.ndim == 0:
            values = np.full(len(grid), float(values))
        if values.shape != (len(grid),):
            raise MeasureFormatError(f"expected {len(grid)} density values, got {values.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise MeasureFormatError("density values must be finite and nonnegative")
        self.grid = grid
        self.values = values

    @classmethod
    def uniform(cls, grid, c=1.0):
        return cls(grid, np.full(len(grid), float(c)))

    @property
    def dim(self):
        return self.grid.dim

    @property
    def total_mass(self):
        return float(np.sum(self.values * self.grid.areas))

    @property
    def strictly_positive(self):
        return bool(np.min(self.values) > 0)

    @property
    def is_constant(self):
        return bool(np.all(self.values == self.values[0]))

    def cell_masses(self):
        return self.values * self.grid.areas

    def support_dirs(self):
        return self.grid.dirs[self.values > 0]

    def value_at(self, x):
        return self.values[self.grid.locate(x)]

    def scaled(self, c):
        return DensityField(self.grid, c * self.values)


def total_mass(m):
    t = m.total_mass
    if not t > 0:
        raise DegenerateMeasureError("degenerate measure: total mass is zero")
    return t


def _weights(m):
    if isinstance(m, AtomicMeasure):
        return m.masses
    return m.cell_masses()


def measure_norm(f, m, p):
    """The normalized ``L_p`` mean ``((1/|m|) int f^p dm)^(1/p)``; geometric mean for ``p = 0``."""
    f = np.asarray(f, dtype=float)
    w = _weights(m)
    if f.shape != w.shape:
        raise ValueError("one value per atom or cell is required")
    on = w > 0
    if np.any(f[on] <= 0):
        raise ValueError("measure_norm needs f > 0 on the support")
    tot = total_mass(m)
    if p == 0:
        return float(np.exp(np.sum(w[on] * np.log(f[on])) / tot))
    # factor out the maximum of log f for overflow safety
    lf = np.log(f[on])
    shift = np.max(p * lf)
    s = np.sum(w[on] * np.exp(p * lf - shift)) / tot
    return float(np.exp((np.log(s) + shift) / p))


def log_measure_norm(f, m, p):
    return float(np.log(measure_norm(f, m, p)))


def hemisphere_phi(x, m, p):
    """``phi(x) = int <x, u>_+^p dm(u)`` at each row of ``x``.

    The integrand is taken as 0 off the open hemisphere ``<x, u> > 0``, also for ``p <= 0``.
    """
    x = np.atleast_2d(x)
    if isinstance(m, AtomicMeasure):
        dirs, w = m.dirs, m.masses
    else:
        dirs, w = m.grid.dirs, m.cell_masses()
    s = x @ dirs.T
    pos = s > 0
    v = np.zeros_like(s)
    v[pos] = s[pos] ** p
    return v @ w


def _witness_2d(dirs):
    theta = np.sort(np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2 * np.pi))
    gaps = np.diff(np.r_[theta, theta[0] + 2 * np.pi])
    k = int(np.argmax(gaps))
    if gaps[k] < np.pi - 1e-12:
        return None
    mid = theta[k] + 0.5 * gaps[k]
    return np.array([np.cos(mid), np.sin(mid)])


def _witness_3d(dirs):
    if len(dirs) == 0:
        return np.array([0.0, 0.0, 1.0])
    _, s, vt = np.linalg.svd(dirs, full_matrices=True)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    if rank < 3:
        return vt[-1]
    try:
        hull = ConvexHull(dirs)
    except QhullError:
        # rank 3 but affinely flat: every direction satisfies <x, u> = -1
        x, *_ = np.linalg.lstsq(dirs, -np.ones(len(dirs)), rcond=None)
        return x / np.linalg.norm(x)
    # facet equations n.y + d <= 0; the origin is interior iff every d < 0
    k = int(np.argmax(hull.equations[:, 3]))
    if hull.equations[k, 3] < -1e-12:
        return None
    return hull.equations[k, :3]


def check_not_hemisphere_concentrated(m, p, grid_level=4):
    """Test whether the origin is interior to the hull of the support directions.

    Returns ``(ok, witness, min_phi)``: ``witness`` is a direction ``x`` with
    ``<x, u> <= 0`` on the whole support when ``ok`` is False, and ``min_phi``
    is the minimum of the hemisphere function over a reference grid.
    """
    dirs = m.support_dirs()
    w = _witness_2d(dirs) if m.dim == 2 else _witness_3d(dirs)
    probe = build_grid(m.dim, grid_level).dirs
    min_phi = float(np.min(hemisphere_phi(probe, m, p)))
    if w is not None:
        min_phi = min(min_phi, float(hemisphere_phi(w, m, p)[0]))
    return w is None, w, min_phi


def _antipodal_partner(dirs, tol=1e-9):
    d, idx = cKDTree(dirs).query(-dirs)
    idx = idx.astype(int)
    idx[d > tol] = -1
    return idx


def check_even(m, tol=1e-12):
    """True iff the measure is invariant under ``u -> -u`` within ``tol``."""
    if isinstance(m, DensityField):
        a = m.grid.antipode
        if a is None:
            return False
        return bool(np.all(np.abs(m.values - m.values[a]) <= tol))
    partner = _antipodal_partner(m.dirs)
    if np.any(partner < 0):
        return False
    return bool(np.all(np.abs(m.masses - m.masses[partner]) <= tol))


def even_symmetrize(m):
    """Return ``(m + m(-.)) / 2``."""
    if isinstance(m, DensityField):
        a = m.grid.antipode
        if a is None:
            raise ValueError("grid is not antipodally symmetric")
        return DensityField(m.grid, 0.5 * (m.values + m.values[a]))
    partner = _antipodal_partner(m.dirs)
    paired = partner >= 0
    masses = m.masses.copy()
    masses[paired] = 0.5 * (m.masses[paired] + m.masses[partner[paired]])
    masses[~paired] *= 0.5
    dirs = np.concatenate([m.dirs, -m.dirs[~paired]])
    masses = np.concatenate([masses, masses[~paired]])
    return AtomicMeasure(dirs, masses)


def check_great_subsphere_vanishing(m):
    """Densities vanish on great subspheres; atoms never do."""
    if isinstance(m, DensityField):
        return True, "absolutely continuous measure: great subspheres are null sets"
    if m.total_mass == 0:
        return True, "zero measure"
    return False, ("every atom lies on a great subsphere; the atomic measure is treated "
                   "as a discretization of an admissible continuous measure")


# --------------------------------------------------------------------------
# JSON I/O


def measure_to_json(m):
    if isinstance(m, AtomicMeasure):
        return {"dim": m.dim, "kind": "atomic",
                "atoms": [{"dir": d.tolist(), "mass": float(w)} for d, w in zip(m.dirs, m.masses)]}
    if m.grid.level is None:
        raise MeasureFormatError("only densities on standard grids can be serialized")
    return {"dim": m.dim, "kind": "density", "grid_level": m.grid.level,
            "values": m.values.tolist()}


def measure_from_json(data):
    try:
        dim = int(data["dim"])
        kind = data["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MeasureFormatError(f"measure file needs 'dim' and 'kind': {exc}") from None
    if dim not in (2, 3):
        raise MeasureFormatError(f"unsupported dimension {dim}")
    if kind == "atomic":
        atoms = data.get("atoms")
        if not isinstance(atoms, list) or not atoms:
            raise MeasureFormatError("atomic measure needs a nonempty 'atoms' list")
        dirs = np.array([a["dir"] for a in atoms], dtype=float)
        masses = np.array([a["mass"] for a in atoms], dtype=float)
        if dirs.shape != (len(atoms), dim):
            raise MeasureFormatError("atom direction has the wrong dimension")
        if np.any(masses < 0):
            raise MeasureFormatError("negative atom mass")
        norms = np.linalg.norm(dirs, axis=1)
        bad = np.abs(norms - 1.0)
        if np.any(bad > 1e-6):
            raise MeasureFormatError("atom direction is not a unit vector")
        if np.any(bad > 1e-12):
            log.warning("renormalizing %d atom directions", int(np.sum(bad > 1e-12)))
            dirs = dirs / norms[:, None]
        return AtomicMeasure(dirs, masses)
    if kind == "density":
        try:
            level = int(data["grid_level"])
            values = np.array(data["values"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise MeasureFormatError(f"density needs 'grid_level' and 'values': {exc}") from None
        grid = build_grid(dim, level)
        if values.shape != (len(grid),):
            raise MeasureFormatError(f"density needs {len(grid)} values, got {values.shape}")
        if np.any(values < 0):
            raise MeasureFormatError("negative density value")
        return DensityField(grid, values)
    raise MeasureFormatError(f"unknown measure kind {kind!r}")


def write_text_atomic(text, path):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(obj, path):
    write_text_atomic(json.dumps(obj, indent=1) + "\n", path)


def save_measure(m, path):
    write_json_atomic(measure_to_json(m), path)


def load_measure(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeasureFormatError(f"{path}: not valid JSON ({exc})") from None
    return measure_from_json(data)


def lebesgue(dim, level=0):
    """Spherical Lebesgue measure as a unit density on a standard grid."""
    return DensityField.uniform(build_grid(dim, level), 1.0)


__all__ = [
    "Measure", "AtomicMeasure", "DensityField", "DegenerateMeasureError", "MeasureFormatError",
    "total_mass", "measure_norm", "log_measure_norm", "hemisphere_phi",
    "check_not_hemisphere_concentrated", "check_even", "even_symmetrize",
    "check_great_subsphere_vanishing", "save_measure", "load_measure", "measure_to_json",
    "measure_from_json", "lebesgue", "sphere_measure", "write_json_atomic", "write_text_atomic",
]
