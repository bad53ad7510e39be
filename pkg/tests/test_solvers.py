import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from riskquad.core import DiscreteRv, StatInterval
from riskquad.solvers import (
    LpProblem,
    NonConvexError,
    UnboundedObjectiveError,
    argmin_interval_pwl,
    compass_search,
    minimize_scalar_convex,
    minimize_subgradient,
    solve_lp,
)
from riskquad.constructions import error_from_loss, project_error, Flags
from riskquad.measures import koenker_bassett_loss, vapnik_loss


def test_scalar_quadratic():
    x, v = minimize_scalar_convex(lambda c: (c - 3.0) ** 2)
    assert abs(x - 3.0) <= 1e-8 and abs(v) <= 1e-15


def test_scalar_kink():
    x, v = minimize_scalar_convex(lambda c: abs(c))
    assert abs(x) <= 1e-8 and abs(v) <= 1e-8


def test_scalar_mse_of_rv():
    u5 = DiscreteRv.uniform([1, 2, 3, 4, 5])
    x, v = minimize_scalar_convex(lambda c: u5.moment(lambda t: (t - c) ** 2))
    assert abs(x - 3.0) <= 1e-6
    assert abs(v - 2.0) <= 1e-12


def test_scalar_unbounded_detected():
    with pytest.raises(UnboundedObjectiveError):
        minimize_scalar_convex(lambda c: -c)


def test_scalar_with_infinite_regions():
    def f(c):
        return (c - 0.25) ** 2 if -1.0 <= c <= 1.0 else math.inf

    x, v = minimize_scalar_convex(f, bracket=(-40.0, 40.0))
    assert abs(x - 0.25) <= 1e-8


def test_pwl_median():
    u3 = DiscreteRv.uniform([1, 2, 3])
    err = error_from_loss(koenker_bassett_loss(0.5), Flags(True, True, True))
    dev, interval = project_error(err, u3)
    assert interval == StatInterval(2, 2)
    assert dev == pytest.approx(2.0 / 3.0)


def test_pwl_vapnik_flat():
    z = DiscreteRv([-2, 2], [0.5, 0.5])
    err = error_from_loss(vapnik_loss(1.0), Flags(False, True, True))
    dev, interval = project_error(err, z)
    assert interval == StatInterval(-1, 1)
    assert dev == pytest.approx(1.0)


def test_pwl_single_kink():
    assert argmin_interval_pwl(lambda c: abs(c - 5.0), [5.0]) == StatInterval(5, 5)


def test_pwl_rejects_nonconvex():
    with pytest.raises(NonConvexError):
        argmin_interval_pwl(lambda c: -abs(c), [-1.0, 0.0, 1.0])


def test_pwl_inside_scalar_min():
    # scalar minimizer lands inside the exact pwl interval
    z = DiscreteRv([-2, 2], [0.5, 0.5])
    err = error_from_loss(vapnik_loss(1.0), Flags(False, True, True))
    interval = project_error(err, z)[1]
    c, _ = minimize_scalar_convex(lambda c: err.fn(z.shift(-c)))
    assert interval.lo - 1e-8 <= c <= interval.hi + 1e-8


def test_subgradient_simplex_symmetric():
    def project(w):
        w = np.maximum(w, 0.0)
        s = w.sum()
        return w / s if s > 0 else np.full_like(w, 1.0 / w.size)

    res = minimize_subgradient(
        lambda w: float(w @ w),
        lambda w: 2.0 * w,
        project,
        np.array([0.9, 0.05, 0.05]),
        steps=4000,
    )
    x, v = compass_search(lambda w: float(w @ w), res.x, step=0.2, project=project)
    assert np.allclose(x, 1.0 / 3.0, atol=1e-5)
    assert v == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_compass_polish():
    x, v = compass_search(lambda z: float((z[0] - 1) ** 2 + abs(z[1] + 2)), np.zeros(2), step=1.0)
    assert abs(x[0] - 1) < 1e-9 and abs(x[1] + 2) < 1e-9


# -- LP ------------------------------------------------------------------------


def test_lp_vertex_example():
    sol = solve_lp(
        LpProblem(
            c=np.array([0.0, -1.0]),
            a_eq=np.array([[0.5, 0.5]]),
            b_eq=np.array([1.0]),
            bounds=[(0, 2), (0, 2)],
        )
    )
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [0.0, 2.0], atol=1e-9)


def test_lp_trivial_and_statuses():
    sol = solve_lp(LpProblem(c=np.array([0.0]), a_eq=np.array([[1.0]]), b_eq=np.array([1.0])))
    assert sol.status == "optimal" and sol.x[0] == pytest.approx(1.0) and sol.objective == pytest.approx(0.0)
    assert solve_lp(LpProblem(c=np.array([-1.0]), bounds=[(0, None)])).status == "unbounded"
    inf = solve_lp(LpProblem(c=np.array([1.0]), a_eq=np.array([[1.0]]), b_eq=np.array([5.0]), bounds=[(0, 1)]))
    assert inf.status == "infeasible"


def _random_lp(rng, n, m_eq, m_ub):
    c = rng.uniform(-2, 2, n)
    a_eq = rng.uniform(-1, 1, (m_eq, n)) if m_eq else None
    a_ub = rng.uniform(-1, 1, (m_ub, n)) if m_ub else None
    x_feas = rng.uniform(0, 2, n)
    b_eq = a_eq @ x_feas if m_eq else None
    b_ub = a_ub @ x_feas + rng.uniform(0, 1, m_ub) if m_ub else None
    bounds = [(0.0, float(rng.uniform(2.5, 5.0))) for _ in range(n)]
    return LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub, bounds=bounds)


def _scipy_solve(p):
    return linprog(
        p.c,
        A_eq=p.a_eq,
        b_eq=p.b_eq,
        A_ub=p.a_ub,
        b_ub=p.b_ub,
        bounds=p.bounds,
        method="highs",
    )


def test_lp_matches_scipy_on_random_problems():
    rng = np.random.default_rng(12)
    for trial in range(40):
        n = int(rng.integers(2, 7))
        p = _random_lp(rng, n, int(rng.integers(0, min(3, n))), int(rng.integers(0, 4)))
        ours = solve_lp(p)
        ref = _scipy_solve(p)
        assert ours.status == "optimal" and ref.status == 0
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)


def _enumerate_vertices(p):
    """Brute-force vertex enumeration oracle on small LPs with finite boxes."""
    n = p.c.size
    rows = []
    rhs = []
    if p.a_eq is not None:
        for r, b in zip(p.a_eq, p.b_eq):
            rows.append((r, b, "eq"))
    if p.a_ub is not None:
        for r, b in zip(p.a_ub, p.b_ub):
            rows.append((r, b, "ub"))
    for i, (lo, hi) in enumerate(p.bounds):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append((e, lo, "lb"))
        rows.append((e, hi, "ub_box"))
    best = math.inf
    eq_rows = [(r, b) for r, b, kind in rows if kind == "eq"]
    ineq_rows = [(r, b, kind) for r, b, kind in rows if kind != "eq"]
    need = n - len(eq_rows)
    for combo in itertools.combinations(range(len(ineq_rows)), need):
        a = [r for r, _ in eq_rows] + [ineq_rows[i][0] for i in combo]
        b = [b for _, b in eq_rows] + [ineq_rows[i][1] for i in combo]
        a = np.asarray(a)
        if a.shape[0] != n:
            continue
        try:
            x = np.linalg.solve(a, np.asarray(b))
        except np.linalg.LinAlgError:
            continue
        ok = True
        if p.a_eq is not None:
            ok &= bool(np.all(np.abs(p.a_eq @ x - p.b_eq) <= 1e-8))
        if p.a_ub is not None:
            ok &= bool(np.all(p.a_ub @ x <= p.b_ub + 1e-8))
        for i, (lo, hi) in enumerate(p.bounds):
            ok &= lo - 1e-8 <= x[i] <= hi + 1e-8
        if ok:
            best = min(best, float(p.c @ x))
    return best


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(5)
    for trial in range(12):
        n = int(rng.integers(2, 5))
        p = _random_lp(rng, n, int(rng.integers(0, 2)), int(rng.integers(0, 3)))
        ours = solve_lp(p)
        oracle = _enumerate_vertices(p)
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(oracle, abs=1e-8)


def test_subgradient_matches_lp():
    # min c.w over the simplex: LP vs projected subgradient
    rng = np.random.default_rng(3)
    c = rng.uniform(-1, 1, 4)
    lp = solve_lp(
        LpProblem(
            c=c,
            a_eq=np.ones((1, 4)),
            b_eq=np.ones(1),
            bounds=[(0.0, None)] * 4,
        )
    )

    def project(w):
        u = np.sort(w)[::-1]
        css = np.cumsum(u)
        rho = np.nonzero(u * np.arange(1, 5) > (css - 1.0))[0][-1]
        theta = (css[rho] - 1.0) / float(rho + 1)
        return np.maximum(w - theta, 0.0)

    res = minimize_subgradient(lambda w: float(c @ w), lambda w: c, project, np.full(4, 0.25), steps=20000)
    x, v = compass_search(lambda w: float(c @ w), res.x, step=0.25, project=project)
    assert v == pytest.approx(lp.objective, abs=1e-4)
