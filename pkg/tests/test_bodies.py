import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import ConvexHull

from lpgauss.bodies import (DegenerateHullError, InvalidCombinationError, Polytope, RadialField,
                            ball_polytope, cube, hausdorff_distance, hull_of_points,
                            hull_of_radial, load_body, lp_combination, lp_harmonic_combination,
                            polar, polytope_to_csv, polytope_to_obj, radial, random_polytope,
                            save_body, support, wulff_shape)
from lpgauss.sphere import SphereGrid, build_grid, normalize, unit_from_angle

S2 = np.sqrt(2.0)
DIAG = unit_from_angle(np.pi / 4 + np.arange(4) * np.pi / 2)
AXES = unit_from_angle(np.arange(4) * np.pi / 2)


@st.composite
def polytopes(draw, dims=(2, 3), symmetric=False):
    dim = draw(st.sampled_from(dims))
    seed = draw(st.integers(0, 2 ** 31))
    return random_polytope(dim, np.random.default_rng(seed), symmetric=symmetric)


def random_dirs(dim, n=200, seed=1):
    return normalize(np.random.default_rng(seed).normal(size=(n, dim)))


def test_support_examples(Q):
    assert support(Q, [1.0, 0.0]) == pytest.approx(1.0)
    assert support(Q, [S2 / 2, S2 / 2]) == pytest.approx(S2)
    g = build_grid(3, 1)
    np.testing.assert_allclose(support(ball_polytope(g), g.dirs), 1.0, atol=1e-12)


def test_radial_examples(Q):
    assert radial(Q, [1.0, 0.0]) == pytest.approx(1.0)
    assert radial(Q, [S2 / 2, S2 / 2]) == pytest.approx(1.4142136, abs=1e-7)


@given(polytopes())
def test_radial_point_on_boundary(K):
    u = random_dirs(K.dim, 50)
    pts = radial(K, u)[:, None] * u
    slack = pts @ K.normals.T - K.offsets
    np.testing.assert_allclose(np.max(slack, axis=1), 0.0, atol=1e-10)


def test_hull_octagon():
    g = build_grid(2, 0)
    K = hull_of_radial(g, np.ones(8))
    assert len(K.vertices) == 8
    np.testing.assert_allclose(K.vertex_radii, 1.0)
    np.testing.assert_allclose(K.offsets, np.cos(np.pi / 8))


def test_hull_diagonals_give_square(Q):
    K = hull_of_radial(DIAG, np.full(4, S2))
    assert hausdorff_distance(K, Q) <= 1e-12


def test_hull_absorbs_short_point():
    g = build_grid(2, 0)
    r = np.ones(8)
    r[3] = 0.1
    K = hull_of_radial(g, r)
    assert len(K.vertices) == 7
    assert K.absorbed.tolist() == [3]
    oracle = ConvexHull(g.dirs * r[:, None])
    assert sorted(K.source.tolist()) == sorted(oracle.vertices.tolist())


def test_hull_errors():
    with pytest.raises(DegenerateHullError):
        hull_of_points(np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]))
    with pytest.raises(DegenerateHullError):
        hull_of_points(np.array([[1.0, 0.1], [2.0, 0.0], [1.0, -0.1]]))
    with pytest.raises(ValueError):
        hull_of_radial(build_grid(2, 0), -np.ones(8))


def test_radial_field():
    g = build_grid(2, 0)
    r = RadialField.from_radii(g, np.full(8, 2.0))
    np.testing.assert_allclose(r.scaled(3).r, 6.0)
    assert len(RadialField.constant(g)) == 8
    with pytest.raises(ValueError):
        RadialField.from_radii(g, np.zeros(8))
    assert len(hull_of_radial(r).vertices) == 8


def test_wulff_examples(Q):
    g = build_grid(2, 0)
    W = wulff_shape(g, np.ones(8))
    assert hausdorff_distance(W, polar(ball_polytope(g))) <= 1e-12
    np.testing.assert_allclose(W.offsets, 1.0)
    assert hausdorff_distance(wulff_shape(AXES, np.ones(4)), Q) <= 1e-12
    with pytest.raises(InvalidCombinationError):
        wulff_shape(AXES, np.array([1.0, 0.0, 1.0, 1.0]))


def test_wulff_outer_approximation():
    K = random_polytope(2, np.random.default_rng(3))
    prev = np.inf
    for level in (1, 3, 5):
        x = build_grid(2, level).dirs
        W = wulff_shape(x, support(K, x))
        dense = build_grid(2, 8).dirs
        assert np.all(support(W, dense) >= support(K, dense) - 1e-12)
        d = hausdorff_distance(W, K)
        assert d < prev
        prev = d


def test_polar_examples(Q):
    D = polar(Q)
    assert hausdorff_distance(D, hull_of_points(AXES)) <= 1e-12
    np.testing.assert_allclose(polar(ball_polytope(build_grid(3, 1))).offsets, 1.0)
    u = np.array([S2 / 2, S2 / 2])
    assert radial(Q, u) * support(D, u) == pytest.approx(1.0)


@given(polytopes())
def test_duality_and_involution(K):
    u = random_dirs(K.dim)
    np.testing.assert_allclose(radial(K, u), 1.0 / support(polar(K), u), atol=1e-9)
    assert hausdorff_distance(polar(polar(K)), K) <= 1e-9


@given(polytopes())
def test_support_dominates_radial(K):
    u = random_dirs(K.dim, 30, 2)
    x = random_dirs(K.dim, 30, 3)
    assert np.all(support(K, x)[:, None] >= radial(K, u)[None, :] * (x @ u.T) - 1e-12)


@given(polytopes())
def test_radial_round_trip(K):
    L = hull_of_radial(K.vertex_dirs, K.vertex_radii)
    assert hausdorff_distance(L, K) <= 1e-9
    L.validate()


@given(st.integers(0, 2 ** 31), st.sampled_from([2, 3]))
def test_wulff_duality(seed, dim):
    g = build_grid(dim, 2)
    h = np.random.default_rng(seed).uniform(0.6, 1.4, len(g))
    assert hausdorff_distance(polar(wulff_shape(g, h)), hull_of_radial(g, 1.0 / h)) <= 1e-9


def test_lp_combination_examples():
    K = ball_polytope(build_grid(2, 3))
    assert hausdorff_distance(lp_combination(K, K, 1, 1, 2), K.scaled(S2)) <= 1e-9
    assert hausdorff_distance(lp_combination(K, K, 1, 0, 2), K) <= 1e-9
    assert hausdorff_distance(lp_combination(K, K, 0.5, 0.5, 0), K) <= 1e-9
    with pytest.raises(InvalidCombinationError):
        lp_combination(K, K, -1, 0, 2)


def test_lp_harmonic_examples():
    K = ball_polytope(build_grid(3, 1))
    assert hausdorff_distance(lp_harmonic_combination(K, K, 1, 1, 2), K.scaled(1 / S2)) <= 1e-9
    assert hausdorff_distance(lp_harmonic_combination(K, K, 1, 0, 2), K) <= 1e-9


def test_lp_harmonic_small_t_trend(Q):
    L = ball_polytope(build_grid(2, 2))
    d = [hausdorff_distance(lp_harmonic_combination(Q, L, 1, t, 1), Q) for t in (0.1, 0.05, 0.025)]
    assert d[0] > d[1] > d[2]


def test_hausdorff_examples(Q):
    g = build_grid(3, 1)
    B = ball_polytope(g)
    assert hausdorff_distance(B, B) == 0.0
    assert hausdorff_distance(B, ball_polytope(g, 1.5)) == pytest.approx(0.5, abs=1e-12)
    # brute force over dense angles
    th = np.linspace(0, 2 * np.pi, 20001)
    x = unit_from_angle(th)
    brute = np.max(np.abs(support(Q, x) - support(polar(Q), x)))
    assert hausdorff_distance(Q, polar(Q)) == pytest.approx(brute, abs=1e-8)
    assert brute == pytest.approx(S2 / 2, abs=1e-8)


@given(polytopes())
def test_incidence_valid(K):
    assert K.validate()
    assert polar(K).validate()


def test_origin_outside_rejected():
    with pytest.raises(DegenerateHullError):
        hull_of_points(np.array([[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]))


def test_cube_normals():
    C = cube()
    assert len(C.normals) == 6 and len(C.vertices) == 8
    for fs in C.vertex_facets:
        assert len(fs) == 3


def test_json_round_trip(tmp_path):
    for K in (random_polytope(2, np.random.default_rng(0)), random_polytope(3, np.random.default_rng(1))):
        save_body(K, tmp_path / "k.json")
        L = load_body(tmp_path / "k.json")
        assert np.array_equal(L.vertices, K.vertices)
        assert np.array_equal(L.normals, K.normals) and np.array_equal(L.offsets, K.offsets)


def test_load_body_rejects_garbage(tmp_path):
    (tmp_path / "k.json").write_text('{"dim": 2}')
    with pytest.raises(ValueError):
        load_body(tmp_path / "k.json")


def test_obj_export():
    text = polytope_to_obj(cube())
    lines = text.splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 8
    faces = [list(map(int, ln.split()[1:])) for ln in lines if ln.startswith("f ")]
    assert len(faces) == 6 and min(min(f) for f in faces) == 1
    with pytest.raises(ValueError):
        polytope_to_obj(hull_of_points(DIAG))


def test_csv_export(Q):
    rows = polytope_to_csv(Q).splitlines()
    assert rows[0] == "x,y"
    pts = np.array([list(map(float, r.split(","))) for r in rows[1:]])
    assert np.array_equal(pts, Q.vertices)
    with pytest.raises(ValueError):
        polytope_to_csv(cube())


def test_direct_construction_checks_origin():
    with pytest.raises(DegenerateHullError):
        Polytope(np.zeros((3, 2)), np.eye(2), np.array([0.0, 1.0]), [], [])


def test_non_grid_dirs():
    K = hull_of_radial(SphereGrid(unit_from_angle([0.0, 2.0, 4.0])), np.ones(3))
    assert len(K.vertices) == 3
