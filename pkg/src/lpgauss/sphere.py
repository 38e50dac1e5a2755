"""Direction grids, cells, caps and quadrature on S^1 and S^2.

Every grid carries its Voronoi cells. Regions on the sphere (grid cells,
normal cones, radial facet regions) are represented as arcs in dimension 2
and as convex, positively oriented spherical polygons in dimension 3. Mass
and integral computations decompose regions into weighted *pieces*: arcs or
spherical triangles together with the value of a piecewise-constant density
on them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import SphericalVoronoi, cKDTree

TWO_PI = 2.0 * np.pi

MAX_LEVEL = {2: 12, 3: 5}

# quadrature controls for the piece integrals
_ARC_MAX_WIDTH = 0.2
_ARC_NODES = 12
_TRI_MAX_EDGE = 0.15
_TRI_ORDER = 6


def sphere_measure(dim):
    """Total spherical Lebesgue measure: 2*pi for the circle, 4*pi for S^2."""
    if dim == 2:
        return TWO_PI
    if dim == 3:
        return 4.0 * np.pi
    raise ValueError(f"unsupported dimension {dim}")


def normalize(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def angle_of(x):
    x = np.asarray(x, dtype=float)
    return np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)


def unit_from_angle(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Arc:
    """Arc ``[start, end)`` of the unit circle, counterclockwise, ``end > start``."""

    start: float
    end: float

    @property
    def length(self):
        return self.end - self.start

    area = length

    def contains(self, x):
        t = np.mod(angle_of(x) - self.start, TWO_PI)
        return t < self.length


class SphericalPolygon:
    """Convex spherical polygon with geodesic edges, counterclockwise seen from outside."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)

    def __len__(self):
        return len(self.vertices)

    @property
    def is_degenerate(self):
        if len(self.vertices) < 3:
            return True
        return polygon_area(self.vertices) <= 0.0

    @property
    def area(self):
        if len(self.vertices) < 3:
            return 0.0
        return polygon_area(self.vertices)

    def edge_normals(self):
        v = self.vertices
        return np.cross(v, np.roll(v, -1, axis=0))

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(x)
        return np.all(x @ self.edge_normals().T >= -tol, axis=1)


def triangle_areas(a, b, c):
    """Signed areas of spherical triangles (Van Oosterom-Strackee)."""
    triple = np.einsum("...i,...i->...", a, np.cross(b, c))
    denom = 1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) \
        + np.einsum("...i,...i->...", c, a)
    return 2.0 * np.arctan2(triple, denom)


def polygon_area(vertices):
    """Area of a convex spherical polygon by angle excess (fan decomposition)."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    a = np.broadcast_to(v[0], v[1:-1].shape)
    return float(np.sum(triangle_areas(a, v[1:-1], v[2:])))


def fan_triangles(vertices):
    v = np.asarray(vertices, dtype=float)
    k = len(v)
    if k < 3:
        return np.empty((0, 3, 3))
    out = np.empty((k - 2, 3, 3))
    out[:, 0] = v[0]
    out[:, 1] = v[1:-1]
    out[:, 2] = v[2:]
    return out


def clip_polygon(vertices, plane_normals, eps=1e-15):
    """Clip a convex spherical polygon by the hemispheres ``<n, x> >= 0``.

    Sutherland-Hodgman on great circles; valid while everything stays inside
    an open hemisphere, which holds for convex cells and cones.
    """
    poly = [np.asarray(p, dtype=float) for p in vertices]
    for n in plane_normals:
        if len(poly) == 0:
            break
        d = [float(np.dot(n, p)) for p in poly]
        if min(d) >= -eps:
            continue
        if max(d) <= eps:
            return np.empty((0, 3))
        out = []
        k = len(poly)
        for i in range(k):
            p, q = poly[i], poly[(i + 1) % k]
            dp, dq = d[i], d[(i + 1) % k]
            if dp >= -eps:
                out.append(p)
            if (dp > eps and dq < -eps) or (dp < -eps and dq > eps):
                # positive combination of p and q on the great circle <n, x> = 0
                x = (dp * q - dq * p) * np.sign(dp - dq)
                out.append(x / np.linalg.norm(x))
        poly = out
    if len(poly) < 3:
        return np.empty((0, 3))
    return np.array(poly)


# --------------------------------------------------------------------------
# grids


def _icosahedron():
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return normalize(verts), faces


def icosphere(level):
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(level):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), faces


class SphereGrid:
    """Ordered direction set with Voronoi cells.

    Attributes
    ----------
    dim : int
        Ambient dimension (2 or 3).
    dirs : ndarray, shape (N, dim)
        Unit directions.
    antipode : ndarray of int or None
        ``dirs[antipode[i]] == -dirs[i]``; None if the set is not
        antipodally closed.
    cells : list of Arc or SphericalPolygon
        Voronoi cell of each direction.
    level : int or None
        Refinement level for grids made by :func:`build_grid`.
    """

    def __init__(self, dirs, level=None):
        dirs = np.array(dirs, dtype=float)
        if dirs.ndim != 2 or dirs.shape[1] not in (2, 3):
            raise ValueError("directions must have shape (N, 2) or (N, 3)")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            dirs = dirs / norms[:, None]
        self.dim = dirs.shape[1]
        self.dirs = dirs
        self.level = level
        self.tree = cKDTree(dirs)
        if len(self.tree.query_pairs(1e-12)) > 0:
            raise ValueError("grid directions must be pairwise distinct")
        self.antipode = self._find_antipodes()
        if self.dim == 2:
            self.cells = self._arc_cells()
        else:
            self.cells = self._polygon_cells()
        self.areas = np.array([c.area for c in self.cells])
        self.cell_radius = self._cell_radius()

    def __len__(self):
        return len(self.dirs)

    @classmethod
    def from_directions(cls, dirs):
        return cls(dirs)

    def _find_antipodes(self):
        d, idx = self.tree.query(-self.dirs)
        if np.all(d <= 1e-9):
            return idx.astype(int)
        return None

    def _arc_cells(self):
        theta = angle_of(self.dirs)
        order = np.argsort(theta)
        ts = theta[order]
        gaps_next = np.diff(np.r_[ts, ts[0] + TWO_PI])
        if np.max(gaps_next) >= np.pi:
            raise ValueError("directions lie in a closed half-circle")
        cells = [None] * len(ts)
        gaps_prev = np.roll(gaps_next, 1)
        for k, i in enumerate(order):
            cells[i] = Arc(ts[k] - 0.5 * gaps_prev[k], ts[k] + 0.5 * gaps_next[k])
        return cells

    def _polygon_cells(self):
        if len(self.dirs) < 4:
            raise ValueError("need at least 4 directions on S^2")
        sv = SphericalVoronoi(self.dirs, radius=1.0, center=np.zeros(3))
        sv.sort_vertices_of_regions()
        cells = []
        for i, region in enumerate(sv.regions):
            verts = normalize(sv.vertices[region])
            if polygon_area(verts) < 0:
                verts = verts[::-1]
            cells.append(SphericalPolygon(verts))
        return cells

    def _cell_radius(self):
        if self.dim == 2:
            return np.array([0.5 * c.length for c in self.cells]) + 1e-12
        r = np.empty(len(self.cells))
        for i, c in enumerate(self.cells):
            cosang = np.clip(c.vertices @ self.dirs[i], -1.0, 1.0)
            r[i] = np.max(np.arccos(cosang))
        return r + 1e-12

    def locate(self, x):
        """Index of the cell containing each direction (nearest grid direction)."""
        x = np.asarray(x, dtype=float)
        _, idx = self.tree.query(x)
        return idx

    def to_json(self):
        if self.dim == 2:
            cells = [[c.start, c.end] for c in self.cells]
        else:
            cells = [c.vertices.tolist() for c in self.cells]
        return {"dim": self.dim, "level": self.level, "dirs": self.dirs.tolist(), "cells": cells}


@lru_cache(maxsize=32)
def build_grid(dim, level):
    """Antipodally symmetric direction grid.

    Dimension 2 gives ``8 * 2**level`` equally spaced angles starting at 0;
    dimension 3 gives the icosahedron subdivided ``level`` times.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if level < 0 or int(level) != level:
        raise ValueError("level must be a nonnegative integer")
    if level > MAX_LEVEL[dim]:
        raise ValueError(f"level {level} exceeds the supported maximum {MAX_LEVEL[dim]}")
    level = int(level)
    if dim == 2:
        n = 8 * 2 ** level
        return SphereGrid(unit_from_angle(TWO_PI * np.arange(n) / n), level=level)
    verts, _ = icosphere(level)
    return SphereGrid(verts, level=level)


@dataclass(frozen=True)
class Cap:
    """Spherical cap ``<u, center> >= delta``, or ``|<u, center>| >= delta`` if symmetric."""

    center: tuple
    delta: float
    symmetric: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("cap delta must lie in (0, 1)")

    def contains(self, u):
        c = np.asarray(self.center, dtype=float)
        c = c / np.linalg.norm(c)
        s = np.atleast_2d(u) @ c
        if self.symmetric:
            s = np.abs(s)
        return s >= self.delta


# --------------------------------------------------------------------------
# pieces: decomposition of regions against a piecewise-constant density


def _constant_value(density):
    """Return the constant value of ``density`` or None if it varies per cell."""
    if density is None:
        return 1.0
    if np.isscalar(density):
        return float(density)
    vals = np.asarray(density.values, dtype=float)
    if np.all(vals == vals[0]):
        return float(vals[0])
    return None


def arc_pieces(starts, ends, owners, density=None):
    """Split arcs against the cells of a density.

    Returns ``(owner, a, b, value)`` arrays with ``a < b``.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    owners = np.asarray(owners, dtype=int)
    c = _constant_value(density)
    if c is not None:
        return owners, starts, ends, np.full(len(owners), c)
    grid = density.grid
    vals = np.asarray(density.values, dtype=float)
    cs = np.array([cell.start for cell in grid.cells])
    ce = np.array([cell.end for cell in grid.cells])
    out_o, out_a, out_b, out_v = [], [], [], []
    for o, a, b in zip(owners, starts, ends):
        # shift cells so that they overlap [a, b) in the right turn
        k = np.floor((a - cs) / TWO_PI)
        for shift in (k, k + 1):
            s0 = cs + shift * TWO_PI
            e0 = ce + shift * TWO_PI
            lo = np.maximum(s0, a)
            hi = np.minimum(e0, b)
            sel = np.nonzero(hi > lo)[0]
            out_o.append(np.full(len(sel), o))
            out_a.append(lo[sel])
            out_b.append(hi[sel])
            out_v.append(vals[sel])
    return (np.concatenate(out_o).astype(int), np.concatenate(out_a),
            np.concatenate(out_b), np.concatenate(out_v))


def polygon_pieces(polygons, owners, density=None):
    """Triangulate spherical polygons, clipped against the cells of a density.

    Returns ``(owner, triangles, value)`` with ``triangles`` of shape (T, 3, 3).
    """
    c = _constant_value(density)
    tri_list, own_list, val_list = [], [], []
    if c is not None:
        for o, poly in zip(owners, polygons):
            t = fan_triangles(poly)
            tri_list.append(t)
            own_list.append(np.full(len(t), o))
            val_list.append(np.full(len(t), c))
    else:
        grid = density.grid
        vals = np.asarray(density.values, dtype=float)
        rmax = float(np.max(grid.cell_radius))
        normals = [cell.edge_normals() for cell in grid.cells]
        for o, poly in zip(owners, polygons):
            poly = np.asarray(poly, dtype=float)
            if len(poly) < 3:
                continue
            center = normalize(poly.sum(axis=0))
            rad = float(np.max(np.arccos(np.clip(poly @ center, -1.0, 1.0))))
            chord = 2.0 * np.sin(min(np.pi, rad + rmax + 1e-9) / 2.0)
            for j in grid.tree.query_ball_point(center, chord):
                if vals[j] == 0.0:
                    continue
                piece = clip_polygon(poly, normals[j])
                if len(piece) < 3:
                    continue
                t = fan_triangles(piece)
                tri_list.append(t)
                own_list.append(np.full(len(t), o))
                val_list.append(np.full(len(t), vals[j]))
    if not tri_list:
        return np.empty(0, dtype=int), np.empty((0, 3, 3)), np.empty(0)
    return (np.concatenate(own_list).astype(int), np.concatenate(tri_list),
            np.concatenate(val_list))


def arc_nodes(a, b, max_width=_ARC_MAX_WIDTH, npts=_ARC_NODES):
    """Gauss-Legendre nodes on arcs; returns ``(piece_index, theta, weight)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    nsub = np.maximum(1, np.ceil((b - a) / max_width).astype(int))
    piece = np.repeat(np.arange(len(a)), nsub)
    first = np.repeat(np.cumsum(nsub) - nsub, nsub)
    j = np.arange(len(piece)) - first
    width = (b - a)[piece] / nsub[piece]
    lo = a[piece] + j * width
    x, w = np.polynomial.legendre.leggauss(npts)
    theta = lo[:, None] + 0.5 * (x[None, :] + 1.0) * width[:, None]
    weight = 0.5 * w[None, :] * width[:, None]
    idx = np.repeat(piece, npts)
    return idx, theta.ravel(), weight.ravel()


@lru_cache(maxsize=8)
def _duffy_rule(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    bx = s.ravel()
    by = (t * (1.0 - s)).ravel()
    bw = (ws * wt * (1.0 - s)).ravel()
    return bx, by, bw


def refine_triangles(tris, max_edge=_TRI_MAX_EDGE):
    """Split spherical triangles 1:4 until every edge is below ``max_edge`` radians.

    Returns the refined triangles and the index of the parent of each.
    """
    tris = np.asarray(tris, dtype=float)
    parent = np.arange(len(tris))
    if not np.isfinite(max_edge) or max_edge >= np.pi:
        return tris, parent
    while len(tris):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        cmin = np.minimum(np.minimum(np.einsum("ij,ij->i", a, b), np.einsum("ij,ij->i", b, c)),
                          np.einsum("ij,ij->i", c, a))
        big = cmin < np.cos(max_edge)
        if not np.any(big):
            break
        keep = tris[~big]
        kp = parent[~big]
        t = tris[big]
        p = parent[big]
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        ab, bc, ca = normalize(a + b), normalize(b + c), normalize(c + a)
        sub = np.concatenate([
            np.stack([a, ab, ca], axis=1), np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1), np.stack([ab, bc, ca], axis=1)])
        tris = np.concatenate([keep, sub])
        parent = np.concatenate([kp, np.tile(p, 4)])
    return tris, parent


def triangle_nodes(tris, order=_TRI_ORDER, max_edge=_TRI_MAX_EDGE):
    """Quadrature nodes on spherical triangles via radial projection of a Duffy rule.

    Returns ``(piece_index, nodes, weights)``; the weights of a triangle sum to
    its spherical area up to quadrature error.
    """
    fine, parent = refine_triangles(tris, max_edge)
    bx, by, bw = _duffy_rule(order)
    a, b, c = fine[:, 0], fine[:, 1], fine[:, 2]
    det = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    pts = (a[:, None, :] + bx[None, :, None] * (b - a)[:, None, :]
           + by[None, :, None] * (c - a)[:, None, :])
    rad = np.linalg.norm(pts, axis=2)
    nodes = pts / rad[..., None]
    weights = bw[None, :] * det[:, None] / rad ** 3
    idx = np.repeat(parent, len(bw))
    return idx, nodes.reshape(-1, 3), weights.ravel()


# --------------------------------------------------------------------------
# masses and integrals


def cell_mass(cell, density=None):
    """Mass of a region under a constant or piecewise-constant density.

    Degenerate polygons (fewer than three vertices) carry zero mass.
    """
    if isinstance(cell, Arc):
        _, a, b, v = arc_pieces([cell.start], [cell.end], [0], density)
        return float(np.sum(v * (b - a)))
    verts = cell.vertices if isinstance(cell, SphericalPolygon) else np.asarray(cell)
    if len(verts) < 3:
        return 0.0
    _, tris, v = polygon_pieces([verts], [0], density)
    if len(tris) == 0:
        return 0.0
    return float(np.sum(v * triangle_areas(tris[:, 0], tris[:, 1], tris[:, 2])))


def region_masses(regions, density=None, owners=None):
    """Masses of many regions at once, indexed like ``regions``."""
    n = len(regions)
    owners = np.arange(n) if owners is None else np.asarray(owners)
    out = np.zeros(n)
    if n == 0:
        return out
    if isinstance(regions[0], Arc):
        o, a, b, v = arc_pieces([r.start for r in regions], [r.end for r in regions],
                                np.arange(n), density)
        np.add.at(out, o, v * (b - a))
    else:
        o, tris, v = polygon_pieces([r.vertices for r in regions], np.arange(n), density)
        if len(tris):
            np.add.at(out, o, v * triangle_areas(tris[:, 0], tris[:, 1], tris[:, 2]))
    return out


def integrate(values, density):
    """Sum of per-cell ``values`` weighted by the density's cell masses."""
    values = np.asarray(values, dtype=float)
    grid = density.grid
    if values.shape != (len(grid),):
        raise ValueError(f"expected {len(grid)} values, got shape {values.shape}")
    return float(np.sum(values * np.asarray(density.values, dtype=float) * grid.areas))
