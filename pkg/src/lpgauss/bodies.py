"""Convex polytopes containing the origin: support and radial functions,
hulls of radial samples, Wulff shapes, polarity and L_p combinations.

Vertices of a :class:`Polytope` are stored with facet incidence in a fixed
cyclic orientation:

* dimension 2: vertices counterclockwise, edge ``k`` joins vertex ``k`` to
  vertex ``k + 1``;
* dimension 3: ``facet_vertices[f]`` runs counterclockwise around the outer
  normal of ``f`` and ``vertex_facets[v]`` runs counterclockwise around the
  normal cone of ``v``.

Polarity swaps the two incidence lists, so the polar body is built without a
new hull computation.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError

from .sphere import Arc, SphericalPolygon, angle_of, build_grid, normalize

ORIGIN_TOL = 1e-12
MERGE_TOL = 1e-9


class DegenerateHullError(ValueError):
    pass


class InvalidCombinationError(ValueError):
    pass


def _tangent_basis(c):
    c = np.asarray(c, dtype=float)
    a = np.eye(3)[int(np.argmin(np.abs(c)))]
    e1 = normalize(np.cross(c, a))
    e2 = np.cross(c, e1)
    return e1, e2


def _ccw_order(points, axis):
    """Indices sorting ``points`` counterclockwise around ``axis`` (seen from its tip)."""
    e1, e2 = _tangent_basis(axis)
    rel = points - np.outer(points @ axis, axis)
    ang = np.arctan2(rel @ e2, rel @ e1)
    return np.argsort(ang, kind="stable")


class Polytope:
    """Convex polytope with the origin in its interior.

    Parameters are normally produced by :func:`hull_of_points`,
    :func:`hull_of_radial` or :func:`polar`; direct construction is for
    deserialization.

    Attributes
    ----------
    vertices : ndarray (V, n)
    normals : ndarray (F, n)
        Unit outer facet normals.
    offsets : ndarray (F,)
        Facet offsets ``h_K(normal) > 0``.
    facet_vertices, vertex_facets : list of ndarray
        Oriented incidence (see module docstring).
    source : ndarray (V,) of int
        Index of the input point each vertex came from, or -1.
    n_points : int
        Number of input points (directions) the body was built from.
    """

    def __init__(self, vertices, normals, offsets, facet_vertices, vertex_facets,
                 source=None, n_points=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.normals = np.asarray(normals, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.facet_vertices = [np.asarray(f, dtype=int) for f in facet_vertices]
        self.vertex_facets = [np.asarray(f, dtype=int) for f in vertex_facets]
        self.dim = self.vertices.shape[1]
        nv = len(self.vertices)
        self.source = np.full(nv, -1, dtype=int) if source is None else np.asarray(source, dtype=int)
        self.n_points = nv if n_points is None else int(n_points)
        if np.any(self.offsets <= ORIGIN_TOL * max(1.0, float(np.max(np.abs(self.offsets))))):
            raise DegenerateHullError("origin is not an interior point of the body")

    def __repr__(self):
        return f"Polytope(dim={self.dim}, vertices={len(self.vertices)}, facets={len(self.normals)})"

    @property
    def absorbed(self):
        """Input point indices that are not vertices."""
        mask = np.ones(self.n_points, dtype=bool)
        mask[self.source[self.source >= 0]] = False
        return np.nonzero(mask)[0]

    @property
    def vertex_dirs(self):
        return normalize(self.vertices)

    @property
    def vertex_radii(self):
        return np.linalg.norm(self.vertices, axis=1)

    def scaled(self, t):
        return Polytope(t * self.vertices, self.normals, t * self.offsets, self.facet_vertices,
                        self.vertex_facets, self.source, self.n_points)

    def validate(self, tol=1e-9):
        """Check incidence and origin interiority; raises ValueError on failure."""
        scale = max(1.0, float(np.max(self.vertex_radii)))
        res = self.vertices @ self.normals.T - self.offsets[None, :]
        if np.any(res > tol * scale):
            raise ValueError("a vertex lies outside a facet halfspace")
        for f, vs in enumerate(self.facet_vertices):
            if np.any(np.abs(res[vs, f]) > tol * scale):
                raise ValueError(f"facet {f} does not pass through its vertices")
        for v, fs in enumerate(self.vertex_facets):
            if len(fs) < self.dim:
                raise ValueError(f"vertex {v} has fewer than {self.dim} incident facets")
        if np.any(self.offsets <= 0):
            raise ValueError("origin is not interior")
        return True

    def to_json(self):
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "facets": [{"normal": n.tolist(), "offset": float(h), "vertices": fv.tolist()}
                       for n, h, fv in zip(self.normals, self.offsets, self.facet_vertices)],
            "vertex_facets": [vf.tolist() for vf in self.vertex_facets],
            "source": self.source.tolist(),
            "n_points": self.n_points,
        }

    @classmethod
    def from_json(cls, data):
        facets = data["facets"]
        normals = np.array([f["normal"] for f in facets], dtype=float)
        offsets = np.array([f["offset"] for f in facets], dtype=float)
        fverts = [f["vertices"] for f in facets]
        nv = len(data["vertices"])
        if "vertex_facets" in data:
            vfacets = data["vertex_facets"]
        else:
            vfacets = _transpose_incidence(fverts, nv)
        return cls(data["vertices"], normals, offsets, fverts, vfacets,
                   data.get("source"), data.get("n_points"))


def _transpose_incidence(facet_vertices, nv):
    out = [[] for _ in range(nv)]
    for f, vs in enumerate(facet_vertices):
        for v in vs:
            out[v].append(f)
    return out


# --------------------------------------------------------------------------
# hull construction


def _hull_2d(points):
    """Qhull polygon with collinear vertices removed. Returns ccw indices."""
    try:
        idx = list(ConvexHull(points).vertices)
    except QhullError as exc:
        raise DegenerateHullError(f"hull is not full-dimensional: {exc}") from None
    # drop vertices whose turn angle is at roundoff level
    idx = np.array(idx, dtype=int)
    while len(idx) > 3:
        p = points[idx]
        u = p - np.roll(p, 1, axis=0)
        v = np.roll(p, -1, axis=0) - p
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        flat = cross <= 1e-12 * np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        if not np.any(flat):
            break
        idx = idx[~flat]
    if len(idx) < 3:
        raise DegenerateHullError("hull is not full-dimensional")
    return np.array(idx, dtype=int)


def _polygon_from_ccw(verts, source=None, n_points=None):
    v = np.asarray(verts, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    normals = normalize(np.stack([e[:, 1], -e[:, 0]], axis=1))
    offsets = np.einsum("ij,ij->i", normals, v)
    k = len(v)
    fverts = [np.array([i, (i + 1) % k]) for i in range(k)]
    vfacets = [np.array([(i - 1) % k, i]) for i in range(k)]
    return Polytope(v, normals, offsets, fverts, vfacets, source, n_points)


def _tangent_bases(c):
    """Row-wise version of :func:`_tangent_basis`."""
    a = np.eye(3)[np.argmin(np.abs(c), axis=1)]
    e1 = normalize(np.cross(c, a))
    return e1, np.cross(c, e1)


def _hull_3d(points):
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateHullError(f"hull is not full-dimensional: {exc}") from None
    eq = hull.equations
    simplices = hull.simplices
    scale = float(np.max(np.linalg.norm(points, axis=1)))
    nsim = len(simplices)

    # merge coplanar neighbouring simplices into facets
    i = np.repeat(np.arange(nsim), 3)
    j = hull.neighbors.ravel()
    tol = MERGE_TOL * np.array([1.0, 1.0, 1.0, scale])
    close = np.all(np.abs(eq[i] - eq[j]) <= tol, axis=1) & (i < j)
    ngroups, label = connected_components(
        coo_matrix((np.ones(close.sum()), (i[close], j[close])), shape=(nsim, nsim)),
        directed=False)
    # renumber facets by their first simplex for a deterministic order
    first = np.full(ngroups, nsim)
    np.minimum.at(first, label, np.arange(nsim))
    rank = np.argsort(np.argsort(first))
    label = rank[label]

    a, b, c = (points[simplices[:, k]] for k in range(3))
    area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    normals = np.zeros((ngroups, 3))
    np.add.at(normals, label, eq[:, :3] * area[:, None])
    normals = normalize(normals)

    # unique (facet, point) incidences
    pairs = np.unique(np.stack([np.repeat(label, 3), simplices.ravel()], axis=1), axis=0)
    count = np.bincount(pairs[:, 1], minlength=len(points))
    extreme = np.nonzero(count >= 3)[0]
    vindex = np.full(len(points), -1)
    vindex[extreme] = np.arange(len(extreme))
    verts = points[extreme]
    pairs = pairs[vindex[pairs[:, 1]] >= 0]
    pf, pv = pairs[:, 0], vindex[pairs[:, 1]]

    nf = np.bincount(pf, minlength=ngroups)
    if np.any(nf < 3):
        raise DegenerateHullError("facet with fewer than three vertices")
    offsets = np.bincount(pf, weights=np.einsum("ij,ij->i", verts[pv], normals[pf]),
                          minlength=ngroups) / nf

    # ccw order of the vertices of each facet around its normal
    ctr = np.zeros((ngroups, 3))
    np.add.at(ctr, pf, verts[pv])
    ctr /= nf[:, None]
    e1, e2 = _tangent_bases(normals)
    rel = verts[pv] - ctr[pf]
    ang = np.arctan2(np.einsum("ij,ij->i", rel, e2[pf]), np.einsum("ij,ij->i", rel, e1[pf]))
    o = np.lexsort((ang, pf))
    facet_vertices = np.split(pv[o], np.cumsum(nf)[:-1])

    # ccw order of the facet normals around each vertex
    nv = len(extreme)
    deg = np.bincount(pv, minlength=nv)
    axis = np.zeros((nv, 3))
    np.add.at(axis, pv, normals[pf])
    axis = normalize(axis)
    e1, e2 = _tangent_bases(axis)
    rel = normals[pf]
    ang = np.arctan2(np.einsum("ij,ij->i", rel, e2[pv]), np.einsum("ij,ij->i", rel, e1[pv]))
    o = np.lexsort((ang, pv))
    vertex_facets = np.split(pf[o], np.cumsum(deg)[:-1])
    return verts, normals, offsets, facet_vertices, vertex_facets, extreme.astype(int)


def hull_of_points(points):
    """Convex hull of a point cloud as a :class:`Polytope` (origin must be interior)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[1]
    if len(points) < n + 1:
        raise DegenerateHullError("hull is not full-dimensional")
    if n == 2:
        idx = _hull_2d(points)
        return _polygon_from_ccw(points[idx], idx, len(points))
    if n == 3:
        verts, normals, offsets, fv, vf, src = _hull_3d(points)
        return Polytope(verts, normals, offsets, fv, vf, src, len(points))
    raise ValueError(f"unsupported dimension {n}")


class RadialField:
    """Positive radial values over a direction grid, stored as logarithms."""

    def __init__(self, grid, log_r):
        log_r = np.array(log_r, dtype=float)
        if log_r.shape != (len(grid),):
            raise ValueError("one log-radius per grid direction is required")
        if not np.all(np.isfinite(log_r)):
            raise ValueError("radial values must be finite and positive")
        self.grid = grid
        self.log_r = log_r

    @classmethod
    def from_radii(cls, grid, r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)):
            raise ValueError("radial values must be finite and positive")
        return cls(grid, np.log(r))

    @classmethod
    def constant(cls, grid, c=1.0):
        return cls(grid, np.full(len(grid), np.log(c)))

    @property
    def r(self):
        return np.exp(self.log_r)

    def __len__(self):
        return len(self.log_r)

    def scaled(self, t):
        return RadialField(self.grid, self.log_r + np.log(t))


def hull_of_radial(grid_or_dirs, radii=None):
    """Convex hull of the radial point cloud ``{r_i u_i}``.

    ``source`` of the result maps vertices back to direction indices; the
    remaining indices are reported by :attr:`Polytope.absorbed`.
    """
    if isinstance(grid_or_dirs, RadialField):
        grid_or_dirs, radii = grid_or_dirs.grid, grid_or_dirs.r
    dirs = grid_or_dirs.dirs if hasattr(grid_or_dirs, "dirs") else np.asarray(grid_or_dirs, float)
    radii = np.asarray(radii, dtype=float)
    if radii.shape != (len(dirs),) or np.any(~(radii > 0)) or not np.all(np.isfinite(radii)):
        raise ValueError("radii must be positive and finite, one per direction")
    return hull_of_points(dirs * radii[:, None])


def polar(K):
    """Polar body; vertices ``n_f / h_f``, facets ``v / |v|`` with offset ``1 / |v|``."""
    new_vertices = K.normals / K.offsets[:, None]
    radii = K.vertex_radii
    if K.dim == 2:
        return _polygon_from_ccw(new_vertices)
    return Polytope(new_vertices, K.vertices / radii[:, None], 1.0 / radii,
                    K.vertex_facets, K.facet_vertices)


# --------------------------------------------------------------------------
# evaluation


def support(K, x):
    """Support function ``max_v <v, x>``; ``x`` may be one direction or an array."""
    x = np.asarray(x, dtype=float)
    return np.max(x @ K.vertices.T, axis=-1)


def radial(K, u):
    """Radial function ``min over facets with <n, u> > 0 of h / <n, u>``."""
    u = np.asarray(u, dtype=float)
    s = u @ K.normals.T
    with np.errstate(divide="ignore"):
        q = np.where(s > 0, K.offsets / np.where(s > 0, s, 1.0), np.inf)
    return np.min(q, axis=-1)


def default_dirs(dim, level=None):
    if level is None:
        level = 7 if dim == 2 else 4
    return build_grid(dim, level).dirs


def sample_dirs(K, L=None, level=None):
    """Dense directions plus the facet normals and vertex directions of the bodies."""
    parts = [default_dirs(K.dim, level), K.normals, K.vertex_dirs]
    if L is not None:
        parts += [L.normals, L.vertex_dirs]
    return np.concatenate(parts)


def wulff_shape(dirs, h):
    """Wulff shape ``{y : <y, x_i> <= h_i}``, computed as the polar of the hull of ``1/h``."""
    dirs = dirs.dirs if hasattr(dirs, "dirs") else np.asarray(dirs, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise InvalidCombinationError("Wulff shape needs a positive support field")
    return polar(hull_of_radial(dirs, 1.0 / h))


def _combined_support(hk, hl, a, b, p):
    if p == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return hk ** a * hl ** b
    with np.errstate(invalid="ignore"):
        s = a * hk ** p + b * hl ** p
    if np.any(~(s > 0)):
        raise InvalidCombinationError("invalid combination: a h_K^p + b h_L^p must be positive")
    return s ** (1.0 / p)


def _working_dirs(K, L, dirs, level):
    if dirs is not None:
        return dirs.dirs if hasattr(dirs, "dirs") else np.asarray(dirs, dtype=float)
    return _dedupe(np.concatenate([default_dirs(K.dim, level), K.normals, L.normals,
                                   K.vertex_dirs, L.vertex_dirs]))


def _dedupe(dirs, tol=1e-12):
    from scipy.spatial import cKDTree
    tree = cKDTree(dirs)
    drop = set()
    for i, j in tree.query_pairs(tol):
        drop.add(max(i, j))
    keep = [i for i in range(len(dirs)) if i not in drop]
    return dirs[keep]


def lp_combination(K, L, a, b, p, dirs=None, level=None):
    """``a K +_p b L`` as the Wulff shape of ``(a h_K^p + b h_L^p)^(1/p)`` on a direction set.

    ``p = 0`` uses ``h_K^a h_L^b``. By default the directions are a dense grid
    together with the facet normals and vertex directions of both bodies.
    """
    x = _working_dirs(K, L, dirs, level)
    h = _combined_support(support(K, x), support(L, x), a, b, p)
    return wulff_shape(x, h)


def lp_harmonic_combination(K, L, a, b, p, dirs=None, level=None):
    """``(a K* +_p b L*)*``; equals the hull of ``(a rho_K^-p + b rho_L^-p)^(-1/p)``."""
    x = _working_dirs(K, L, dirs, level)
    h = _combined_support(1.0 / radial(K, x), 1.0 / radial(L, x), a, b, p)
    return hull_of_radial(x, 1.0 / h)


def hausdorff_distance(K, L, dirs=None, level=None):
    """Sup-metric of support functions over dense directions and both bodies' normals."""
    x = sample_dirs(K, L, level) if dirs is None else np.asarray(dirs, dtype=float)
    return float(np.max(np.abs(support(K, x) - support(L, x))))


# --------------------------------------------------------------------------
# regions on the sphere attached to a polytope


def normal_cone_regions(K):
    """Normal cone of every vertex as an :class:`Arc` or :class:`SphericalPolygon`."""
    if K.dim == 2:
        phi = angle_of(K.normals)
        out = []
        for fs in K.vertex_facets:
            a, b = phi[fs[0]], phi[fs[1]]
            if b <= a:
                b += 2 * np.pi
            out.append(Arc(float(a), float(b)))
        return out
    return [SphericalPolygon(K.normals[fs]) for fs in K.vertex_facets]


def radial_facet_regions(K):
    """Radial projection of every facet onto the sphere."""
    if K.dim == 2:
        th = angle_of(K.vertices)
        out = []
        for vs in K.facet_vertices:
            a, b = th[vs[0]], th[vs[1]]
            if b <= a:
                b += 2 * np.pi
            out.append(Arc(float(a), float(b)))
        return out
    vd = K.vertex_dirs
    return [SphericalPolygon(vd[vs]) for vs in K.facet_vertices]


# --------------------------------------------------------------------------
# fixtures


def ball_polytope(grid, r=1.0):
    """Hull of ``r * dirs``: the inscribed polytope standing in for the ball ``rB``."""
    return hull_of_radial(grid, np.full(len(grid), float(r)))


def square():
    """The square hull{(+-1, +-1)}."""
    return hull_of_points(np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]))


def cube():
    pts = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)])
    return hull_of_points(pts)


def random_polytope(dim, rng, n_points=None, rmin=0.5, rmax=1.5, symmetric=False):
    """Hull of random points with radii in ``[rmin, rmax]`` around the origin."""
    if n_points is None:
        n_points = 12 if dim == 2 else 30
    while True:
        u = normalize(rng.normal(size=(n_points, dim)))
        r = rng.uniform(rmin, rmax, size=n_points)
        pts = u * r[:, None]
        if symmetric:
            pts = np.concatenate([pts, -pts])
        try:
            return hull_of_points(pts)
        except DegenerateHullError:
            continue


# --------------------------------------------------------------------------
# file formats


def polytope_to_obj(K):
    """Wavefront OBJ text of a dim-3 polytope; faces are ccw seen from outside."""
    if K.dim != 3:
        raise ValueError("OBJ export needs a dim-3 body")
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in K.vertices.tolist()]
    lines += ["f " + " ".join(str(int(v) + 1) for v in fv) for fv in K.facet_vertices]
    return "\n".join(lines) + "\n"


def polytope_to_csv(K):
    """CSV vertex list ``x,y`` in ccw order of a dim-2 polytope."""
    if K.dim != 2:
        raise ValueError("CSV vertex export needs a dim-2 body")
    return "x,y\n" + "".join(f"{x!r},{y!r}\n" for x, y in K.vertices.tolist())


def save_body(K, path):
    from .measures import write_json_atomic
    write_json_atomic(K.to_json(), path)


def load_body(path):
    import json
    with open(path) as fh:
        data = json.load(fh)
    try:
        return Polytope.from_json(data)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: not a body file ({exc})") from None
