"""Normal cones, the reverse radial Gauss map, and (L_p) Gauss image measures of polytopes.

For a polytope the reverse radial Gauss map is constant on the normal cone
of each vertex, so the Gauss image measure of a density is atomic: the atom
at the vertex direction ``v/|v|`` carries the density mass of the cone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bodies import normal_cone_regions
from .measures import AtomicMeasure, DensityField
from .sphere import (arc_nodes, arc_pieces, build_grid, fan_triangles, normalize, polygon_pieces,
                     triangle_areas, triangle_nodes, unit_from_angle)


class NotAbsolutelyContinuousError(TypeError):
    pass


@dataclass(frozen=True)
class NormalCone:
    vertex: int
    region: object  # Arc or SphericalPolygon


@dataclass
class GaussImageMeasure:
    """Atoms of ``lambda_p(K, .)`` at the vertex directions of ``K``.

    ``masses[k]`` belongs to vertex ``k``; ``cone_masses`` holds the plain
    Gauss image masses so that ``masses = radii**p * cone_masses``.
    """

    body: object
    dirs: np.ndarray
    radii: np.ndarray
    cones: list
    cone_masses: np.ndarray
    p: float = 0.0

    @property
    def masses(self):
        if self.p == 0:
            return self.cone_masses
        return self.radii ** self.p * self.cone_masses

    @property
    def total_mass(self):
        return float(np.sum(self.masses))

    def per_point(self):
        """Masses indexed by the points the body was built from; absorbed points get 0."""
        K = self.body
        out = np.zeros(K.n_points)
        ok = K.source >= 0
        out[K.source[ok]] = self.masses[ok]
        return out

    def to_measure(self):
        return AtomicMeasure(self.dirs, self.masses)


def vertex_normal_cones(K):
    """One :class:`NormalCone` per vertex of ``K``."""
    for v, fs in enumerate(K.vertex_facets):
        if len(fs) < K.dim:
            raise ValueError(f"malformed polytope: vertex {v} has {len(fs)} incident facets")
    return [NormalCone(v, reg) for v, reg in enumerate(normal_cone_regions(K))]


def _require_density(lam):
    if not isinstance(lam, DensityField):
        raise NotAbsolutelyContinuousError(
            "Gauss image measure requires an absolutely continuous lambda (a DensityField)")


def cone_pieces(K, lam):
    """Decompose all normal cones of ``K`` against the cells of ``lam``.

    Dimension 2 returns ``(owner, a, b, value)`` angle pieces, dimension 3
    returns ``(owner, triangles, value)``.
    """
    regions = normal_cone_regions(K)
    owners = np.arange(len(regions))
    if K.dim == 2:
        return arc_pieces([r.start for r in regions], [r.end for r in regions], owners, lam)
    return polygon_pieces([r.vertices for r in regions], owners, lam)


def piece_masses(pieces, n, dim):
    out = np.zeros(n)
    if dim == 2:
        o, a, b, v = pieces
        np.add.at(out, o, v * (b - a))
    else:
        o, tris, v = pieces
        if len(tris):
            np.add.at(out, o, v * triangle_areas(tris[:, 0], tris[:, 1], tris[:, 2]))
    return out


def piece_integrals(pieces, n, dim, func):
    """Per-owner integrals ``sum_pieces value * int func(owner, x) dx``.

    ``func(owner_index_array, nodes)`` evaluates the integrand at quadrature nodes.
    """
    out = np.zeros(n)
    if dim == 2:
        o, a, b, v = pieces
        idx, theta, w = arc_nodes(a, b)
        x = unit_from_angle(theta)
    else:
        o, tris, v = pieces
        if len(tris) == 0:
            return out
        idx, x, w = triangle_nodes(tris)
    own = o[idx]
    np.add.at(out, own, v[idx] * w * func(own, x))
    return out


def cone_masses(K, lam):
    _require_density(lam)
    return piece_masses(cone_pieces(K, lam), len(K.vertices), K.dim)


def gauss_image_measure(K, lam):
    """Gauss image measure ``lambda(K, .)`` of a density ``lam``."""
    _require_density(lam)
    cones = vertex_normal_cones(K)
    m = cone_masses(K, lam)
    return GaussImageMeasure(K, K.vertex_dirs, K.vertex_radii, cones, m, 0.0)


def lp_gauss_image_measure(K, lam, p):
    """``lambda_p(K, .)``: the Gauss image masses weighted by ``|v|^p``."""
    g = gauss_image_measure(K, lam)
    g.p = float(p)
    return g


def reverse_radial_gauss(K, x):
    """Direction of the vertex touched by the supporting hyperplane with normal ``x``.

    Ties on cone boundaries go to the lowest vertex index.
    """
    x = np.asarray(x, dtype=float)
    vals = x @ K.vertices.T
    top = np.max(vals, axis=-1, keepdims=True)
    scale = max(1.0, float(np.max(K.vertex_radii)))
    k = np.argmax(vals >= top - 1e-12 * scale, axis=-1)
    return K.vertex_dirs[k]


def reverse_radial_gauss_index(K, x):
    x = np.asarray(x, dtype=float)
    vals = x @ K.vertices.T
    top = np.max(vals, axis=-1, keepdims=True)
    scale = max(1.0, float(np.max(K.vertex_radii)))
    return np.argmax(vals >= top - 1e-12 * scale, axis=-1)


def _split_arcs(a, b):
    m = 0.5 * (a + b)
    return np.concatenate([a, m]), np.concatenate([m, b])


def _split_tris(t):
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = normalize(a + b), normalize(b + c), normalize(c + a)
    return np.concatenate([np.stack(q, axis=1) for q in
                           ([a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca])])


def _base_pieces(dim, level):
    grid = build_grid(dim, level)
    if dim == 2:
        return (np.array([c.start for c in grid.cells]), np.array([c.end for c in grid.cells]))
    return np.concatenate([fan_triangles(c.vertices) for c in grid.cells])


def _piece_nodes(dim, pieces):
    if dim == 2:
        a, b = pieces
        idx, theta, w = arc_nodes(a, b, max_width=np.inf, npts=4)
        return idx, unit_from_angle(theta), w
    return triangle_nodes(pieces, order=4, max_edge=np.inf)


def adaptive_pushforward_rule(dim, level, index_of, depth=4):
    """Nodes and weights for integrating a piecewise-constant function of ``x``.

    Starts from the cells of the standard grid at ``level`` (fan triangles in
    dimension 3) with a 4-node (dim 2) or 16-node (dim 3) rule per piece.
    Pieces whose nodes or corners disagree under ``index_of`` are split, up
    to ``depth`` times.
    Returns ``(nodes, weights, labels)`` with ``labels = index_of(nodes)``.
    """
    pieces = _base_pieces(dim, level)
    xs, ws, ks = [], [], []
    for it in range(depth + 1):
        idx, x, w = _piece_nodes(dim, pieces)
        k = index_of(x)
        npc = len(pieces[0]) if dim == 2 else len(pieces)
        kmin = np.full(npc, np.iinfo(np.int64).max)
        kmax = np.full(npc, -1)
        np.minimum.at(kmin, idx, k)
        np.maximum.at(kmax, idx, k)
        # corners catch boundaries between the outermost nodes and the piece edges
        if dim == 2:
            corners = np.stack([index_of(unit_from_angle(pieces[0])),
                                index_of(unit_from_angle(pieces[1]))], axis=1)
        else:
            corners = index_of(pieces.reshape(-1, 3)).reshape(-1, 3)
        mixed = (kmin != kmax) | np.any(corners != kmin[:, None], axis=1)
        if it == depth or not np.any(mixed):
            xs.append(x), ws.append(w), ks.append(k)
            break
        keep = ~mixed[idx]
        xs.append(x[keep]), ws.append(w[keep]), ks.append(k[keep])
        if dim == 2:
            pieces = _split_arcs(pieces[0][mixed], pieces[1][mixed])
        else:
            pieces = _split_tris(pieces[mixed])
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(ks)


def pushforward_integral(K, lam, f, level=3, depth=None):
    """Both sides of the pushforward identity for ``int f d lambda(K, .)``.

    The left side sums ``f`` over the atoms (exact cone masses); the right
    side integrates ``f(alpha*_K(x))`` against ``lam`` using only evaluations
    of the reverse radial Gauss map, on the grid of the given level with
    adaptive splitting near cone and density-cell boundaries (``depth``
    defaults to 10 splits in dimension 2 and 4 in dimension 3).
    Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    _require_density(lam)
    if depth is None:
        depth = 10 if K.dim == 2 else 4
    g = gauss_image_measure(K, lam)
    lhs = float(np.sum(np.asarray(f(g.dirs), dtype=float) * g.cone_masses))
    ncell = len(lam.grid)

    def label(y):
        return reverse_radial_gauss_index(K, y) * ncell + lam.grid.locate(y)

    x, w, lab = adaptive_pushforward_rule(K.dim, level, label, depth)
    fv = np.asarray(f(K.vertex_dirs), dtype=float)[lab // ncell]
    rhs = float(np.sum(w * lam.value_at(x) * fv))
    return lhs, rhs, abs(lhs - rhs)


def gauss_image_to_json(g):
    m = g.to_measure()
    return {"dim": m.dim, "kind": "atomic", "p": g.p,
            "atoms": [{"dir": d.tolist(), "mass": float(w)} for d, w in zip(m.dirs, m.masses)]}
