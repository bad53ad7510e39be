import math

import numpy as np
import pytest

from riskquad.core import DiscreteRv, cvar_direct, expectation
from riskquad.constructions import regret_to_risk
from riskquad.divergence import _kl_risk, make_divergence
from riskquad.dual import cvar_envelope
from riskquad.measures import CatalogSpec, make_catalog_quadrangle
from riskquad.robust import (
    DroProblem,
    EpiSpec,
    dro_envelope_value,
    dro_solve,
    epi_regret,
    epi_regret_divroot,
    epi_regret_fn,
    epi_risk_dual,
    epi_risk_primal,
    kernel_l2_regret,
    kernel_quadratic_regret,
    portfolio_optimize,
)

from helpers import random_rv


def _cvar_spec(alpha, probs, epsilon, kernel="quadratic"):
    if kernel == "quadratic":
        kern, kconj, kscalar = kernel_quadratic_regret()
    else:
        kern, kconj = kernel_l2_regret()
        kscalar = None
    inv = 1.0 / (1.0 - alpha)
    return EpiSpec(
        base_risk=lambda y: cvar_direct(y, alpha),
        kernel=kern,
        epsilon=epsilon,
        base_regret=lambda y: inv * y.mean_pos(),
        base_envelope=cvar_envelope(alpha, probs),
        kernel_conj=kconj,
        kernel_conj_scalar=kscalar,
    )


# -- epi-regularization ----------------------------------------------------------


def test_epi_constant_fidelity_exact():
    p = np.array([0.5, 0.5])
    spec = _cvar_spec(0.5, np.array([1.0]), 1.0)
    for c in (-3.0, 0.0, 5.0):
        spec_c = _cvar_spec(0.5, np.array([1.0]), 1.0)
        assert epi_risk_primal(spec_c, DiscreteRv.constant(c)) == c


def test_epi_bounds():
    rng = np.random.default_rng(0)
    for _ in range(6):
        x = random_rv(rng, max_atoms=3)
        spec = _cvar_spec(0.5, x.probs, 1.0)
        v = epi_risk_primal(spec, x)
        assert v >= expectation(x) - 1e-9
        assert v <= cvar_direct(x, 0.5) + 1e-9  # Y = 0 upper bound


def test_epi_primal_dual_and_grid_2atoms():
    p = np.array([0.5, 0.5])
    x = DiscreteRv([-1.0, 1.0], p)
    spec = _cvar_spec(0.5, p, 1.0)
    vp = epi_risk_primal(spec, x)
    vd = epi_risk_dual(spec, x)
    assert abs(vp - vd) <= 1e-6
    # grid oracle over Y: coarse scan plus one local refinement
    kern, _, _ = kernel_quadratic_regret()

    def val_at(y1, y2):
        y = np.array([y1, y2])
        return cvar_direct(DiscreteRv(x.values - y, p), 0.5) + kern(DiscreteRv(y, p))

    grid = np.linspace(-3, 3, 121)
    coarse = [(val_at(a, b), a, b) for a in grid for b in grid]
    best, a0, b0 = min(coarse)
    fine = np.linspace(-0.1, 0.1, 81)
    best = min(best, min(val_at(a0 + da, b0 + db) for da in fine for db in fine))
    assert vp <= best + 1e-9
    assert vp >= best - 1e-4


def test_epi_primal_dual_3atoms():
    rng = np.random.default_rng(1)
    for _ in range(4):
        x = random_rv(rng, max_atoms=3, span=2.0)
        while x.n_atoms != 3:
            x = random_rv(rng, max_atoms=3, span=2.0)
        eps = float(rng.uniform(0.3, 2.0))
        spec = _cvar_spec(0.5, x.probs, eps)
        vp = epi_risk_primal(spec, x)
        vd = epi_risk_dual(spec, x)
        assert abs(vp - vd) <= 1e-4


def test_epi_dual_l2_kernel_matches_primal():
    p = np.array([0.5, 0.5])
    x = DiscreteRv([-1.0, 1.0], p)
    spec = _cvar_spec(0.5, p, 1.0, kernel="l2")
    vp = epi_risk_primal(spec, x)
    vd = epi_risk_dual(spec, x)
    assert abs(vp - vd) <= 1e-4


def test_epi_eps_limit_recovers_mean():
    # with a kernel whose conjugate is positive off Q = 1, eps -> 0 forces Q = 1
    p = np.array([0.5, 0.5])
    x = DiscreteRv([-1.0, 1.0], p)
    spec = _cvar_spec(0.5, p, 1e-6)
    assert epi_risk_dual(spec, x) == pytest.approx(expectation(x), abs=1e-3)
    assert epi_risk_primal(spec, x) == pytest.approx(expectation(x), abs=1e-2)


def test_epi_risk_midpoint_convexity():
    # convexity of the epi-regularized risk on a shared atom grid
    rng = np.random.default_rng(11)
    p = np.array([0.4, 0.6])
    spec = _cvar_spec(0.5, p, 0.8)
    for _ in range(4):
        a = rng.uniform(-2, 2, 2)
        b = rng.uniform(-2, 2, 2)
        va = epi_risk_primal(spec, DiscreteRv(a, p))
        vb = epi_risk_primal(spec, DiscreteRv(b, p))
        vm = epi_risk_primal(spec, DiscreteRv(0.5 * (a + b), p))
        assert vm <= 0.5 * (va + vb) + 1e-7


def test_epi_regret_identity():
    # projecting the epi-regularized regret reproduces the epi-regularized risk
    rng = np.random.default_rng(2)
    for _ in range(2):
        x = random_rv(rng, max_atoms=3, span=2.0)
        spec = _cvar_spec(0.5, x.probs, 1.0)
        vp = epi_risk_primal(spec, x)
        r_route, _ = regret_to_risk(epi_regret_fn(spec), x, want_interval=False)
        assert abs(r_route - vp) <= 1e-5


def test_epi_regret_zero_and_self_convolution_bound():
    p = np.array([0.5, 0.5])
    spec = _cvar_spec(0.5, p, 1.0)
    assert epi_regret(spec, DiscreteRv.constant(0.0)) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(4):
        x = random_rv(rng, max_atoms=2)
        base = 2.0 * x.mean_pos()
        kern = lambda y: 2.0 * y.mean_pos()
        self_spec = EpiSpec(
            base_risk=lambda y: cvar_direct(y, 0.5),
            kernel=kern,
            epsilon=1.0,
            base_regret=lambda y: 2.0 * y.mean_pos(),
        )
        assert epi_regret(self_spec, x) <= base + 1e-9


def test_epi_divroot_per_atom():
    kl = make_divergence("kl")
    p = np.array([0.5, 0.5])
    x = DiscreteRv([-1.0, 1.0], p)
    box = (np.zeros(2), np.full(2, 2.0))
    val = epi_regret_divroot(box, kl, 1.0, x)
    # 2-d grid oracle
    best = -math.inf
    qs = np.linspace(1e-9, 2.0, 2001)
    phi = lambda t: t * math.log(t) - t + 1.0
    for q1 in qs:
        for q2 in qs:
            pen = 0.5 * (phi(q1) + phi(q2))
            best = max(best, 0.5 * (-q1 + q2) - pen)
    assert val == pytest.approx(best, abs=1e-6)
    assert epi_regret_divroot(box, kl, 1.0, DiscreteRv.constant(0.0)) == pytest.approx(0.0, abs=1e-10)


def test_epi_divroot_degenerate_penalty_recovers_base():
    # a zero penalty on the domain recovers the base regret support value
    zero_phi = make_divergence("kl")

    class ZeroDiv:
        phi = staticmethod(lambda t: np.zeros_like(np.asarray(t, dtype=float)))

    p = np.array([0.5, 0.5])
    x = DiscreteRv([-1.0, 1.0], p)
    box = (np.zeros(2), np.full(2, 2.0))
    val = epi_regret_divroot(box, ZeroDiv(), 1.0, x)
    assert val == pytest.approx(2.0 * x.mean_pos(), abs=1e-9)


# -- DRO ---------------------------------------------------------------------------


def test_dro_routes_agree_and_matches_evar_grid():
    rng = np.random.default_rng(4)
    scen = rng.uniform(-1.0, 1.5, size=(3, 2))
    tau = 0.3
    sol = dro_solve(DroProblem(scen, make_divergence("kl"), tau), steps=800)
    assert sol.route_gap <= 1e-4
    env_val = dro_envelope_value(DroProblem(scen, make_divergence("kl"), tau), sol.weights)
    assert abs(env_val - sol.value) <= 1e-4
    best = math.inf
    for w1 in np.arange(0.0, 1.0001, 0.0025):
        w = np.array([w1, 1.0 - w1])
        v, _ = _kl_risk(DiscreteRv(-(scen @ w), None), tau)
        best = min(best, v)
    assert sol.value == pytest.approx(best, abs=1e-4)


def test_dro_tau_limits():
    rng = np.random.default_rng(5)
    scen = rng.uniform(-0.5, 0.8, size=(3, 2))
    lo = dro_solve(DroProblem(scen, make_divergence("kl"), 1e-6), steps=400)
    best_mean = math.inf
    worst_case = math.inf
    for w1 in np.arange(0.0, 1.0001, 0.0025):
        w = np.array([w1, 1.0 - w1])
        best_mean = min(best_mean, float(np.mean(-(scen @ w))))
        worst_case = min(worst_case, float(np.max(-(scen @ w))))
    assert lo.value == pytest.approx(best_mean, abs=5e-3)  # sqrt(2 tau) sigma smoothing term
    hi = dro_solve(DroProblem(scen, make_divergence("kl"), 1e6), steps=400)
    assert hi.value == pytest.approx(worst_case, abs=5e-3)


def test_dro_riskfree_dominance():
    # one risk-free asset dominating every atom of the risky one
    scen = np.array([[0.05, -0.1], [0.05, 0.02], [0.05, 0.04]])
    sol = dro_solve(DroProblem(scen, make_divergence("kl"), 0.5), steps=800)
    assert sol.weights[0] == pytest.approx(1.0, abs=1e-3)
    assert sol.value == pytest.approx(-0.05, abs=1e-3)


def test_dro_worst_case_density_feasible():
    rng = np.random.default_rng(6)
    scen = rng.uniform(-1, 1, size=(4, 2))
    prob = DroProblem(scen, make_divergence("kl"), 0.4)
    sol = dro_solve(prob, steps=800)
    q = sol.worst_case_density
    assert np.all(q >= -1e-9)
    assert float(np.dot(prob.probs, q)) == pytest.approx(1.0, abs=1e-6)
    kl_val = float(np.dot(prob.probs, q * np.log(np.maximum(q, 1e-300)) - q + 1.0))
    assert kl_val <= 0.4 + 1e-6


def test_dro_infeasible_target_mean():
    scen = np.array([[0.1, 0.2], [0.0, 0.1]])
    with pytest.raises(ValueError):
        dro_solve(DroProblem(scen, make_divergence("kl"), 0.3, target_mean=0.9))


# -- portfolio front end --------------------------------------------------------------


def test_portfolio_single_asset():
    scen = np.array([[0.1], [-0.2], [0.05]])
    w, v = portfolio_optimize(None, scen, cvar_alpha=0.5)
    assert w[0] == pytest.approx(1.0)
    assert v == pytest.approx(cvar_direct(DiscreteRv(-scen[:, 0]), 0.5), abs=1e-9)


def test_portfolio_identical_assets():
    scen = np.tile(np.array([[0.1], [-0.2], [0.05]]), (1, 2))
    w, v = portfolio_optimize(None, scen, cvar_alpha=0.5)
    assert v == pytest.approx(cvar_direct(DiscreteRv(-scen[:, 0]), 0.5), abs=1e-9)
    assert w.sum() == pytest.approx(1.0)


def _grid_cvar_portfolio(scen, alpha, step=0.01):
    """0.01-step weight grid with one local refinement pass (the objective is
    piecewise linear in w, so the coarse grid alone resolves only to
    slope * step)."""

    def value(w1):
        ww = np.array([w1, 1.0 - w1])
        return cvar_direct(DiscreteRv(-(scen @ ww), None), alpha)

    grid = np.arange(0.0, 1.0 + step / 2, step)
    vals = [value(w1) for w1 in grid]
    i = int(np.argmin(vals))
    lo = max(grid[i] - step, 0.0)
    hi = min(grid[i] + step, 1.0)
    fine = np.linspace(lo, hi, 4001)
    return min(min(vals), min(value(w1) for w1 in fine))


def test_portfolio_cvar_lp_vs_weight_grid():
    rng = np.random.default_rng(7)
    for _ in range(4):
        scen = rng.uniform(-1.0, 1.0, size=(3, 2))
        w, v = portfolio_optimize(None, scen, cvar_alpha=0.5)
        best = _grid_cvar_portfolio(scen, 0.5)
        assert v == pytest.approx(best, abs=1e-4)
        # the LP never loses to any coarse grid point
        for w1 in np.arange(0.0, 1.0001, 0.01):
            ww = np.array([w1, 1.0 - w1])
            assert v <= cvar_direct(DiscreteRv(-(scen @ ww), None), 0.5) + 1e-9


def test_portfolio_generic_quartet_route():
    q = make_catalog_quadrangle(CatalogSpec("quantile", {"alpha": 0.5}))
    rng = np.random.default_rng(8)
    scen = rng.uniform(-1.0, 1.0, size=(3, 2))
    w_lp, v_lp = portfolio_optimize(None, scen, cvar_alpha=0.5)
    w_gen, v_gen = portfolio_optimize(q, scen, steps=2500)
    assert v_gen == pytest.approx(v_lp, abs=1e-4)


def test_portfolio_mean_constraint():
    scen = np.array([[0.1, -0.05], [0.02, 0.08], [-0.04, 0.03]])
    means = scen.mean(axis=0)
    target = 0.5 * (means[0] + means[1])
    w, v = portfolio_optimize(None, scen, cvar_alpha=0.5, target_mean=target)
    assert float(w @ means) == pytest.approx(target, abs=1e-8)
    with pytest.raises(ValueError):
        portfolio_optimize(None, scen, cvar_alpha=0.5, target_mean=1.0)
