"""Acceptance suite: one test and one PASS/FAIL line per criterion."""
import numpy as np
import pytest
from scipy.spatial import ConvexHull, HalfspaceIntersection

from lpgauss.bodies import (ball_polytope, hausdorff_distance, hull_of_points, hull_of_radial,
                            polar, radial, random_polytope, support, wulff_shape)
from lpgauss.entropy import (ObjectiveContext, entropy_E, entropy_G, evaluate, harmonic_derivative,
                             harmonic_derivative_fd, phi)
from lpgauss.gauss_image import gauss_image_measure, lp_gauss_image_measure, pushforward_integral
from lpgauss.measures import AtomicMeasure, DensityField, lebesgue
from lpgauss.solver import (CONVERGED, AdmissibilityError, SolveOptions,
                            forward_then_solve_roundtrip, solve)
from lpgauss.sphere import SphereGrid, build_grid, normalize, unit_from_angle
from lpgauss.verification import ma_residual, measure_residual, weak_convergence_probe

CATALAN = 0.915965594177219015054603514932
DIAG = unit_from_angle(np.pi / 4 + np.arange(4) * np.pi / 2)


def test_c01_square_gauss_image(Q, criterion):
    lam = lebesgue(2, 0)
    m0 = gauss_image_measure(Q, lam).masses
    m2 = lp_gauss_image_measure(Q, lam, 2).masses
    err = max(np.max(np.abs(m0 - np.pi / 2)), np.max(np.abs(m2 - np.pi)))
    ok = len(m0) == 4 and err <= 1e-12
    assert criterion(1, "square Gauss image atoms pi/2, L_2 atoms pi", ok, f"max err {err:.1e}")


def test_c02_ball_identity(criterion):
    g = build_grid(3, 2)
    lam = lebesgue(3, 2)
    worst = 0.0
    for r in (0.5, 1.0, 3.0):
        for p in (-1.0, 0.0, 2.0):
            m = lp_gauss_image_measure(ball_polytope(g, r), lam, p)
            per_cell = np.zeros(len(g))
            per_cell[m.body.source] = m.masses
            worst = max(worst, np.max(np.abs(per_cell - r ** p * g.areas)))
    ok = worst <= 1e-9
    assert criterion(2, "ball identity lambda_p(rB, cell) = r^p lambda(cell)", ok,
                     f"max err {worst:.1e}")


def _wulff_oracle(dirs, h):
    # scipy halfspace intersection of {y : <y, x_i> <= h_i}
    hs = np.c_[dirs, -h]
    pts = HalfspaceIntersection(hs, np.zeros(dirs.shape[1])).intersections
    return hull_of_points(pts[ConvexHull(pts).vertices])


def test_c03_duality_suite(criterion):
    worst = {"dual": 0.0, "involution": 0.0, "wulff": 0.0, "oracle": 0.0}
    for dim, count in ((2, 50), (3, 10)):
        u = normalize(np.random.default_rng(99).normal(size=(200, dim)))
        for s in range(count):
            rng = np.random.default_rng(1000 * dim + s)
            K = random_polytope(dim, rng)
            P = polar(K)
            worst["dual"] = max(worst["dual"], np.max(np.abs(radial(K, u) - 1 / support(P, u))))
            worst["involution"] = max(worst["involution"], hausdorff_distance(polar(P), K))
            g = build_grid(dim, 2 if dim == 2 else 1)
            h = rng.uniform(0.7, 1.3, len(g))
            W = wulff_shape(g, h)
            worst["wulff"] = max(worst["wulff"],
                                 hausdorff_distance(polar(W), hull_of_radial(g, 1 / h)))
            worst["oracle"] = max(worst["oracle"], hausdorff_distance(W, _wulff_oracle(g.dirs, h)))
    ok = max(worst.values()) <= 1e-9
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert criterion(3, "duality suite on 50 dim-2 and 10 dim-3 polytopes", ok, detail)


def test_c04_entropy_closed_form(Q, criterion):
    lam = lebesgue(2, 4)
    G = entropy_G(Q, lam)
    target = np.pi * np.log(2) - 4 * CATALAN
    E_polar = entropy_E(polar(Q), lam)
    e1, e2 = abs(G - target), abs(E_polar - G)
    ok = e1 <= 1e-4 and e2 <= 1e-6
    assert criterion(4, "G(Q) = pi ln 2 - 4C and E(Q*) = G(Q)", ok,
                     f"G = {G:.10f}, |G - closed form| {e1:.1e}, |E(Q*) - G| {e2:.1e}")


def test_c05_homogeneity(criterion):
    worst, const = 0.0, 0.0
    for s in range(20):
        rng = np.random.default_rng(s)
        dim = 2 if s < 15 else 3
        g = build_grid(dim, 2 if dim == 2 else 1)
        ctx = ObjectiveContext(lebesgue(dim, 1), rng.uniform(0.2, 2, len(g)),
                               rng.choice([-1.5, 1.0, 2.0]), g)
        r = rng.uniform(0.5, 2.0, len(g))
        base = phi(r, ctx)
        for t in (1e-2, 10.0):
            worst = max(worst, abs(phi(t * r, ctx) - base))
        const = max(const, abs(phi(np.full(len(g), rng.uniform(0.1, 10)), ctx)))
    ok = worst <= 1e-12 and const <= 1e-10
    assert criterion(5, "Phi(t r) = Phi(r) and Phi(constant) = 0", ok,
                     f"homogeneity {worst:.1e}, constant {const:.1e}")


def test_c06_gradient_check(criterion):
    eps = 1e-5
    worst, worst_absorbed, n_abs = 0.0, 0.0, 0
    for dim, level, count in ((2, 2, 20), (3, 1, 5)):
        for s in range(count):
            rng = np.random.default_rng(s)
            g, lg = build_grid(dim, level), build_grid(dim, 1)
            lam = DensityField(lg, rng.uniform(0.5, 2, len(lg)))
            ctx = ObjectiveContext(lam, rng.uniform(0.2, 2, len(g)), 2.0, g)
            x = np.log(rng.uniform(0.8, 1.25, len(g)))
            ev = evaluate(x, ctx)

            def f(i, t):
                e = np.zeros_like(x)
                e[i] = t
                return evaluate(x + e, ctx).phi

            for i in ev.body.source:
                fd = (f(i, eps) - f(i, -eps)) / (2 * eps)
                worst = max(worst, abs(fd - ev.grad[i]) / abs(ev.grad[i]))
            for i in ev.body.absorbed:
                # one-sided second-order difference into the absorbed side
                fd = (3 * ev.phi - 4 * f(i, -eps) + f(i, -2 * eps)) / (2 * eps)
                worst_absorbed = max(worst_absorbed, abs(fd - ev.grad[i]) / abs(ev.grad[i]))
                n_abs += 1
    ok = worst <= 1e-5
    assert criterion(6, "phi_gradient vs central differences on 20 dim-2 and 5 dim-3 cases", ok,
                     f"max rel err {worst:.1e}; absorbed one-sided {worst_absorbed:.1e} "
                     f"over {n_abs} coords")


def test_c07_variational_formula(criterion):
    worst = {}
    cases = [(2, s) for s in range(3)] + [(3, 0)]
    for p in (-1.0, 0.0, 1.0, 2.0):
        e = 0.0
        for dim, s in cases:
            rng = np.random.default_rng(50 + s)
            K, L = random_polytope(dim, rng), random_polytope(dim, rng)
            lam = lebesgue(dim, 3 if dim == 2 else 1)
            a = harmonic_derivative(K, L, p, lam)
            fd = harmonic_derivative_fd(K, L, p, lam, step=1e-4)
            e = max(e, abs(a - fd) if p == 0 else abs(a - fd) / abs(a))
        worst[p] = e
    ok = all(v <= 1e-3 for v in worst.values())
    detail = ", ".join(f"p={p:g}: {v:.1e}" for p, v in worst.items())
    assert criterion(7, "harmonic derivative vs finite differences", ok, detail)


def test_c08_solver_fixtures(criterion):
    rep = solve(AtomicMeasure(DIAG, np.full(4, np.pi)), lebesgue(2, 0), SolveOptions(2))
    a_err = np.max(np.abs(rep.radial.r - np.sqrt(2)))
    ok = rep.status == CONVERGED and a_err <= 1e-8 and rep.residual <= 1e-10
    details = [f"square r err {a_err:.1e}, residual {rep.residual:.1e}"]
    for dim in (2, 3):
        g = build_grid(dim, 2)
        rep = solve(AtomicMeasure(g.dirs, g.areas), lebesgue(dim, 2), SolveOptions(2))
        b_err = np.max(np.abs(rep.radial.r - 1.0))
        ok = ok and rep.status == CONVERGED and b_err <= 1e-6 and rep.residual <= 1e-10
        details.append(f"dim-{dim} ball r err {b_err:.1e}, residual {rep.residual:.1e}")
    assert criterion(8, "solver exact fixtures", ok, "; ".join(details))


def _symmetric_on_grid(rng, grid, rmin=0.7, rmax=1.3):
    r = rng.uniform(rmin, rmax, len(grid))
    r = np.sqrt(r * r[grid.antipode])
    return hull_of_radial(grid, r)


def test_c09_round_trips(criterion):
    worst_pos, worst_neg, honest, symmetric, statuses = 0.0, 0.0, True, True, []
    for s in range(10):
        K0 = random_polytope(2, np.random.default_rng(200 + s))
        rt = forward_then_solve_roundtrip(K0, lebesgue(2, 2), 2.0)
        statuses.append(rt.report.status)
        worst_pos = max(worst_pos, rt.residual.tv_residual)
        if rt.report.status == CONVERGED:
            honest &= rt.residual.max_atom_residual <= rt.report.options.residual_tol
    g = build_grid(2, 2)
    for s in range(5):
        K0 = _symmetric_on_grid(np.random.default_rng(300 + s), g)
        rt = forward_then_solve_roundtrip(K0, lebesgue(2, 2), -1.0, grid=g)
        statuses.append(rt.report.status)
        worst_neg = max(worst_neg, rt.residual.tv_residual)
        if rt.report.status == CONVERGED:
            honest &= rt.residual.max_atom_residual <= rt.report.options.residual_tol
        V = rt.report.body.vertices
        symmetric &= np.max(np.min(np.linalg.norm(V[:, None] + V[None], axis=2), axis=1)) <= 1e-9
    ok = worst_pos <= 1e-6 and worst_neg <= 1e-5 and honest and symmetric
    assert criterion(9, "round trips: 10 with p=2, 5 even with p=-1", ok,
                     f"tv p=2 {worst_pos:.1e}, tv p=-1 {worst_neg:.1e}, symmetric {symmetric}, "
                     f"statuses {sorted(set(statuses))}")


def test_c10_admissibility_gates(criterion):
    lam = lebesgue(2, 1)
    checks = []
    with pytest.raises(AdmissibilityError) as e:
        solve(AtomicMeasure([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]), lam, SolveOptions(2))
    checks.append(e.value.condition == "hemisphere"
                  and "positive mass on every open hemisphere" in str(e.value))
    g = build_grid(2, 1)
    uneven = AtomicMeasure(g.dirs, np.random.default_rng(0).uniform(0.5, 1.5, len(g)))
    with pytest.raises(AdmissibilityError) as e:
        solve(uneven, lam, SolveOptions(-1, enforce_even=True))
    checks.append(e.value.condition == "even" and "origin-symmetric" in str(e.value))
    with pytest.raises(AdmissibilityError) as e:
        SolveOptions(0)
    checks.append("p must be nonzero" in str(e.value))
    ok = all(checks)
    assert criterion(10, "admissibility gates: hemisphere p>0, non-even p<0, p=0", ok,
                     "conditions are named in words")


def test_c11_pushforward_identity(Q, criterion):
    def f(u):
        return u[:, 0] ** 2 + 0.3 * u[:, 1]

    fixtures = [("square", Q, lebesgue(2, 2)),
                ("dim-2 ball", ball_polytope(build_grid(2, 2)), lebesgue(2, 2)),
                ("dim-3 ball", ball_polytope(build_grid(3, 1)), lebesgue(3, 1))]
    ok, details = True, []
    for name, K, lam in fixtures:
        e3 = pushforward_integral(K, lam, f, level=3)[2]
        e4 = pushforward_integral(K, lam, f, level=4)[2]
        ok &= e3 <= 1e-3 and (e4 < e3 or e4 <= 1e-12)
        details.append(f"{name} {e3:.1e} -> {e4:.1e}")
    assert criterion(11, "pushforward identity at level 3, improving at level 4", ok,
                     "; ".join(details))


def _near_ball(level):
    g = build_grid(3, level)
    lam = lebesgue(3, level)
    m = g.areas * (1 + 0.2 * g.dirs[:, 2] ** 2)
    m *= lam.total_mass / m.sum()
    rep = solve(AtomicMeasure(g.dirs, m), lam, SolveOptions(2.0), grid=g)
    res = ma_residual(rep.body, m / g.areas, None, 2.0, dirs=g.dirs)
    return rep, float(np.max(np.abs(res)))


def test_c12_monge_ampere(criterion):
    g = build_grid(3, 3)
    ball = max(np.max(np.abs(ma_residual(ball_polytope(g, r), r ** 2.0, p=2.0, dirs=g.dirs)))
               for r in (0.5, 1.0, 2.0))
    levels = {L: _near_ball(L) for L in (2, 3, 4)}
    res = [levels[L][1] for L in (2, 3, 4)]
    conv = all(rep.converged for rep, _ in levels.values())
    ok = ball <= 1e-10 and conv and res[2] <= 5e-2 and res[0] > res[1] > res[2]
    assert criterion(12, "Monge-Ampere residual: ball analytic, near-ball decreasing", ok,
                     f"ball {ball:.1e}; near-ball levels 2,3,4: "
                     + ", ".join(f"{v:.1e}" for v in res))


def test_c13_weak_convergence(criterion):
    g = build_grid(2, 5)
    lam = lebesgue(2, 2)
    K0 = ball_polytope(g)
    Ks = []
    for i in range(1, 11):
        r = np.ones(len(g))
        r[0] += 2.0 ** -i
        Ks.append(hull_of_radial(g, r))
    d = weak_convergence_probe(Ks, K0, lam, lambda u: u[:, 0] ** 2)
    ok = bool(np.all(np.diff(d) < 0)) and d[-1] < 1e-4
    assert criterion(13, "weak convergence under a single-vertex perturbation", ok,
                     f"i=1: {d[0]:.1e}, i=10: {d[-1]:.1e}")
