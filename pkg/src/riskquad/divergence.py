"""Divergence functionals and the quadrangle families they generate.

A scalar divergence function phi (convex, closed, phi(1) = 0, 1 interior to
its domain) induces the dual functional J(Q) = E[phi(Q)] on density vectors.
Its sublevel balls define worst-case-expectation families; equivalently the
perspective transform of the conjugate parent produces the same positively
homogeneous family.  For a budget beta > 0 the scaled construction yields a
complete quadrangle whose regret is inf_l l*(beta + E[phi*(X/l)]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import DiscreteRv, StatInterval, cvar_direct, ess_bounds, expectation, quantile_interval
from .constructions import (
    ErrorFn,
    Flags,
    Quadrangle,
    QuadrangleFlags,
    RegretFn,
    mean_center_regret,
    project_error,
    regret_to_risk,
)
from .solvers import LpProblem, bisect_root, flat_interval, minimize_scalar_convex, solve_lp

__all__ = [
    "DivergenceFn",
    "StochasticDivergenceJ",
    "make_divergence",
    "verify_conjugate",
    "divergence_value",
    "family_eval_perspective",
    "family_eval_envelope",
    "make_divergence_quadrangle",
    "perspective_quadrangle",
    "classify_divergence",
    "cvar_indicator_regret",
    "cvar_indicator_regret_family",
    "PHI_REGISTRY",
]

_LOG_LO, _LOG_HI = math.log(1e-8), math.log(1e8)


@dataclass(frozen=True)
class DivergenceFn:
    """Scalar convex divergence function with its convex conjugate.

    kind is "divergence" when phi = +inf on negatives (dom inside [0, inf)),
    "extended" otherwise.  conj_grad, when given, is a derivative selection
    of phi* used for closed-form worst-case densities.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    phi_conj: Callable[[np.ndarray], np.ndarray]
    dom: tuple[float, float]
    kind: str
    label: str
    conj_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _phi_kl(x):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.inf)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos]) - x[pos] + 1.0
    out[x == 0] = 1.0
    return out


def _phi_tv(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, np.abs(x - 1.0), np.inf)


def _phi_conj_tv(z):
    z = np.asarray(z, dtype=float)
    return np.where(z <= 1.0, -1.0 + np.maximum(z + 1.0, 0.0), np.inf)


def _phi_pearson(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, (x - 1.0) ** 2, np.inf)


def _phi_conj_pearson(z):
    z = np.asarray(z, dtype=float)
    return np.where(z + 2.0 >= 0, (z + 2.0) ** 2 / 4.0 - 1.0, -1.0)


def make_divergence(name: str, q: Optional[float] = None) -> DivergenceFn:
    """Named divergence functions with verified conjugates."""
    if name == "kl":
        return DivergenceFn(
            phi=_phi_kl,
            phi_conj=lambda z: np.exp(np.minimum(np.asarray(z, dtype=float), 700.0)) - 1.0,
            dom=(0.0, math.inf),
            kind="divergence",
            label="kl",
            conj_grad=lambda z: np.exp(np.minimum(np.asarray(z, dtype=float), 700.0)),
        )
    if name == "tv":
        return DivergenceFn(
            phi=_phi_tv,
            phi_conj=_phi_conj_tv,
            dom=(0.0, math.inf),
            kind="divergence",
            label="tv",
            conj_grad=None,  # subdifferential is set-valued; use the LP route
        )
    if name == "pearson":
        return DivergenceFn(
            phi=_phi_pearson,
            phi_conj=_phi_conj_pearson,
            dom=(0.0, math.inf),
            kind="divergence",
            label="pearson",
            conj_grad=lambda z: np.maximum((np.asarray(z, dtype=float) + 2.0) / 2.0, 0.0),
        )
    if name == "extended_pearson":
        return DivergenceFn(
            phi=lambda x: (np.asarray(x, dtype=float) - 1.0) ** 2,
            phi_conj=lambda z: np.asarray(z, dtype=float) ** 2 / 4.0 + np.asarray(z, dtype=float),
            dom=(-math.inf, math.inf),
            kind="extended",
            label="extended_pearson",
            conj_grad=lambda z: np.asarray(z, dtype=float) / 2.0 + 1.0,
        )
    if name == "gen_extended_pearson":
        if q is None or not 0.0 < q < 1.0:
            raise ValueError("gen_extended_pearson requires q in (0,1)")

        def phi(x):
            x = np.asarray(x, dtype=float)
            return np.where(x > 1.0, (x - 1.0) ** 2 / (1.0 - q), (x - 1.0) ** 2 / q)

        def phi_conj(z):
            z = np.asarray(z, dtype=float)
            return np.where(z > 0.0, (1.0 - q) * z**2 / 4.0 + z, q * z**2 / 4.0 + z)

        def conj_grad(z):
            z = np.asarray(z, dtype=float)
            return np.where(z > 0.0, (1.0 - q) * z / 2.0 + 1.0, q * z / 2.0 + 1.0)

        return DivergenceFn(phi, phi_conj, (-math.inf, math.inf), "extended", f"gen_extended_pearson({q:g})", conj_grad)
    raise ValueError(f"unknown divergence {name!r}")


PHI_REGISTRY = ("kl", "tv", "pearson", "extended_pearson", "gen_extended_pearson")


def verify_conjugate(div: DivergenceFn, z_grid=None, tol: float = 1e-8) -> float:
    """Max gap between phi_conj and the numeric conjugate sup_x (xz - phi(x))."""
    if z_grid is None:
        z_grid = np.linspace(-3.0, 0.9 if div.label == "tv" else 3.0, 25)
    worst = 0.0
    lo = div.dom[0] if math.isfinite(div.dom[0]) else -60.0
    hi = div.dom[1] if math.isfinite(div.dom[1]) else 60.0
    xs = np.linspace(lo, hi, 20001)
    phis = np.asarray(div.phi(xs), dtype=float)
    for z in z_grid:
        target = float(np.asarray(div.phi_conj(np.array([z])))[0])
        if not math.isfinite(target):
            continue
        num = float(np.max(xs * z - phis))
        # golden-section refinement around the coarse argmax (concave inner fn)
        i = int(np.argmax(xs * z - phis))
        a, b = xs[max(i - 2, 0)], xs[min(i + 2, xs.size - 1)]

        def neg(xv, z=z):
            return -(xv * z - float(np.asarray(div.phi(np.array([xv])))[0]))

        _, neg_best = minimize_scalar_convex(neg, tol=1e-13, bracket=(a, b))
        num = max(num, -neg_best)
        worst = max(worst, abs(num - target))
    if worst > tol:
        raise ValueError(f"conjugate mismatch for {div.label}: gap {worst:.2e}")
    return worst


@dataclass(frozen=True)
class StochasticDivergenceJ:
    """Dual functional on density vectors, J(q) -> [0, inf].

    classification: "divergence_root" (domain closure {Q >= 0}),
    "stochastic_divergence" ({Q >= 0, E[Q] = 1}), or "general".
    """

    fn: Callable[[np.ndarray, np.ndarray], float]
    classification: str
    phi: Optional[DivergenceFn] = None
    label: str = ""

    def __call__(self, q: np.ndarray, probs: np.ndarray) -> float:
        return self.fn(q, probs)

    @staticmethod
    def from_phi(div: DivergenceFn, normalized: bool) -> "StochasticDivergenceJ":
        """J(Q) = E[phi(Q)], optionally restricted to the density set E[Q] = 1."""

        def fn(q, probs):
            q = np.asarray(q, dtype=float)
            probs = np.asarray(probs, dtype=float)
            if normalized and abs(float(np.dot(probs, q)) - 1.0) > 1e-9:
                return math.inf
            vals = np.asarray(div.phi(q), dtype=float)
            if np.any(np.isinf(vals)):
                return math.inf
            return float(np.dot(probs, vals))

        kind = "stochastic_divergence" if normalized else "divergence_root"
        label = f"E[{div.label}(Q)]" + ("|density" if normalized else "")
        return StochasticDivergenceJ(fn, kind, div, label)


def divergence_value(j, q, probs) -> float:
    """J(Q) for a StochasticDivergenceJ, DivergenceFn, or raw callable."""
    q = np.asarray(q, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if isinstance(j, StochasticDivergenceJ):
        return j.fn(q, probs)
    if isinstance(j, DivergenceFn):
        vals = np.asarray(j.phi(q), dtype=float)
        return math.inf if np.any(np.isinf(vals)) else float(np.dot(probs, vals))
    return float(j(q, probs))


# -- perspective route ---------------------------------------------------------


def family_eval_perspective(
    parent: Callable[[DiscreteRv], float],
    tau: float,
    x: DiscreteRv,
    log_bracket: tuple[float, float] = (_LOG_LO, _LOG_HI),
) -> float:
    """inf_{l > 0} l * (parent(X / l) + tau) by golden section in log l.

    Minima escaping to the lower bracket edge are reported with their limit
    value: the recession of l * parent(X / l), i.e. the scaled parent term
    without the vanishing l * tau contribution.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")

    def g(t):
        lam = math.exp(t)
        val = parent(x.scale(1.0 / lam))
        return lam * (val + tau) if math.isfinite(val) else math.inf

    t_star, val = minimize_scalar_convex(g, tol=1e-12, bracket=log_bracket)
    edge = 1e-3 * (log_bracket[1] - log_bracket[0])
    if t_star - log_bracket[0] < edge:
        lam = math.exp(log_bracket[0])
        limit = lam * parent(x.scale(1.0 / lam))
        return min(val, limit)
    return val


# -- envelope route -------------------------------------------------------------


def _density_point_mass(x: DiscreteRv) -> np.ndarray:
    """The density putting all mass on the top atoms."""
    v, p = x.values, x.probs
    top = v >= v[-1] - 1e-15
    q = np.zeros_like(p)
    q[top] = 1.0 / float(p[top].sum())
    return q


def _per_atom_argmax(div: DivergenceFn, z: np.ndarray) -> np.ndarray:
    """argmax_q (q z - phi(q)) per atom, via conj_grad or a golden scan."""
    if div.conj_grad is not None:
        q = np.asarray(div.conj_grad(z), dtype=float)
        lo, hi = div.dom
        return np.clip(q, lo if math.isfinite(lo) else -1e12, hi if math.isfinite(hi) else 1e12)
    out = np.empty_like(z)
    lo = div.dom[0] if math.isfinite(div.dom[0]) else -1e6
    hi = div.dom[1] if math.isfinite(div.dom[1]) else 1e6
    for i, zi in enumerate(z):
        def h(qv, zi=zi):
            val = float(np.asarray(div.phi(np.array([qv])))[0])
            return -(qv * zi - val)

        qi, _ = minimize_scalar_convex(h, tol=1e-11, bracket=(lo, hi))
        out[i] = qi
    return out


def _envelope_sup_phi(
    div: DivergenceFn, tau: float, x: DiscreteRv, normalized: bool
) -> tuple[float, np.ndarray]:
    """sup{ E[QX] : E[phi(Q)] <= tau (, E[Q] = 1) } with the maximizing density.

    Worst-case densities have the parametric form q_i = (phi*)'((x_i - mu)/l);
    mu is fixed by the density constraint (bisection) and l by the divergence
    budget (bisection), both monotone.
    """
    v, p = x.values, x.probs
    if x.is_constant():
        return float(v[0]), np.ones_like(p)
    if normalized:
        q_top = _density_point_mass(x)
        if divergence_value(div, q_top, p) <= tau:
            return float(v[-1]), q_top

    def q_of(lam: float, mu: float) -> np.ndarray:
        return _per_atom_argmax(div, (v - mu) / lam)

    def solve_mu(lam: float) -> float:
        if not normalized:
            return 0.0

        def mass(mu):
            return float(np.dot(p, q_of(lam, mu))) - 1.0

        lo, hi = float(v[0]) - 1.0, float(v[-1]) + 1.0
        span = float(v[-1] - v[0]) + 1.0
        for _ in range(200):
            if mass(lo) > 0:
                break
            lo -= span
            span *= 2.0
        span = float(v[-1] - v[0]) + 1.0
        for _ in range(200):
            if mass(hi) < 0:
                break
            hi += span
            span *= 2.0
        return bisect_root(mass, lo, hi, iters=200)

    def budget(lam: float) -> float:
        mu = solve_mu(lam)
        return divergence_value(div, q_of(lam, mu), p) - tau

    lam_lo, lam_hi = 1e-9, 1.0
    for _ in range(120):
        if budget(lam_hi) < 0:
            break
        lam_hi *= 2.0
    for _ in range(120):
        if budget(lam_lo) > 0:
            break
        lam_lo = max(lam_lo / 4.0, 1e-14)
        if lam_lo <= 1e-14:
            break
    if budget(lam_lo) <= 0:
        # even tiny smoothing stays within budget: effectively unconstrained
        lam_star = lam_lo
    else:
        lam_star = bisect_root(budget, lam_lo, lam_hi, iters=200)
    mu = solve_mu(lam_star)
    q = q_of(lam_star, mu)
    return float(np.dot(p, q * v)), q


def _envelope_sup_tv(tau: float, x: DiscreteRv, normalized: bool) -> tuple[float, np.ndarray]:
    """LP route for the polyhedral total-variation ball."""
    v, p = x.values, x.probs
    m = v.size
    # variables [q_1..q_m, s_1..s_m]; max sum p_i q_i v_i
    c = np.concatenate([-p * v, np.zeros(m)])
    a_ub = []
    b_ub = []
    for i in range(m):
        row = np.zeros(2 * m)
        row[i], row[m + i] = 1.0, -1.0
        a_ub.append(row.copy())  # q_i - s_i <= 1
        b_ub.append(1.0)
        row = np.zeros(2 * m)
        row[i], row[m + i] = -1.0, -1.0
        a_ub.append(row)  # -q_i - s_i <= -1
        b_ub.append(-1.0)
    row = np.zeros(2 * m)
    row[m:] = p
    a_ub.append(row)
    b_ub.append(tau)
    a_eq = None
    b_eq = None
    if normalized:
        a_eq = np.zeros((1, 2 * m))
        a_eq[0, :m] = p
        b_eq = np.ones(1)
    bounds = [(0.0, None)] * m + [(0.0, None)] * m
    sol = solve_lp(LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, a_ub=np.asarray(a_ub), b_ub=np.asarray(b_ub), bounds=bounds))
    if sol.status != "optimal":
        raise RuntimeError(f"tv envelope LP {sol.status}")
    q = sol.x[:m]
    return float(np.dot(p, q * v)), q


def family_eval_envelope(j: StochasticDivergenceJ, tau: float, x: DiscreteRv) -> tuple[float, np.ndarray]:
    """sup{ E[QX] : J(Q) <= tau } over densities, with the maximizing density.

    Polyhedral balls (total variation) go through the LP; phi-generated balls
    use the per-atom parametric maximizer; other J fall back to a projected
    ascent with budget bisection toward the center.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    normalized = j.classification == "stochastic_divergence"
    if j.phi is not None and j.phi.label == "tv":
        return _envelope_sup_tv(tau, x, normalized)
    if j.phi is not None:
        return _envelope_sup_phi(j.phi, tau, x, normalized)
    return _envelope_sup_generic(j, tau, x, normalized)


def _envelope_sup_generic(j, tau, x, normalized) -> tuple[float, np.ndarray]:
    """Projected ascent with feasibility restored by bisection toward Q = 1."""
    v, p = x.values, x.probs
    m = v.size
    center = np.ones(m)
    assert j.fn(center, p) <= tau + 1e-12, "center density must be feasible"

    def project(q):
        q = np.maximum(q, 0.0)
        if normalized:
            s = float(np.dot(p, q))
            q = q / s if s > 0 else center.copy()
        if j.fn(q, p) <= tau:
            return q
        lo_t, hi_t = 0.0, 1.0

        def feas(t):
            return j.fn(center + t * (q - center), p) - tau

        for _ in range(80):
            mid = 0.5 * (lo_t + hi_t)
            if feas(mid) <= 0:
                lo_t = mid
            else:
                hi_t = mid
        return center + lo_t * (q - center)

    q = center.copy()
    best_q, best = q, float(np.dot(p, q * v))
    step = 1.0
    grad = p * v
    gn = float(np.linalg.norm(grad)) or 1.0
    for k in range(1, 4001):
        q = project(q + (step / math.sqrt(k)) * grad / gn)
        val = float(np.dot(p, q * v))
        if val > best + 1e-15:
            best, best_q = val, q.copy()
    return best, best_q


# -- divergence quadrangles ---------------------------------------------------------


def _phi_regret(div: DivergenceFn, beta: float) -> RegretFn:
    """V(X) = inf_{l>0} l * (beta + E[phi*(X/l)])."""

    def fn(x: DiscreteRv) -> float:
        v, p = x.values, x.probs

        def g(t):
            lam = math.exp(t)
            vals = np.asarray(div.phi_conj(v / lam), dtype=float)
            if np.any(np.isinf(vals)) or np.any(np.isnan(vals)):
                return math.inf
            return lam * (beta + float(np.dot(p, vals)))

        t_star, val = minimize_scalar_convex(g, tol=1e-12, bracket=(_LOG_LO, _LOG_HI))
        return val

    return RegretFn(fn=fn, flags=Flags(True, div.kind == "divergence", False), label=f"{div.label}_regret({beta:g})")


def _kl_risk(x: DiscreteRv, beta: float) -> tuple[float, float]:
    """Entropic-tail risk inf_l l*(beta + ln E[exp(X/l)]) and the optimal l.

    Uses shifted exponentials throughout; when the infimum is attained in the
    l -> 0 limit the essential supremum is returned with l = 0.
    """
    v, p = x.values, x.probs
    vmax = float(v[-1])
    if x.is_constant():
        return vmax, 0.0
    p_top = float(p[v >= vmax - 1e-15].sum())
    if beta >= -math.log(p_top):
        # no interior stationary point: the ess-sup limit is the infimum
        return vmax, 0.0

    def lse(lam):
        return vmax + lam * math.log(float(np.dot(p, np.exp((v - vmax) / lam))))

    def g(t):
        lam = math.exp(t)
        return lam * beta + lse(lam)

    t_star, val = minimize_scalar_convex(g, tol=1e-13, bracket=(_LOG_LO, _LOG_HI))
    lam = math.exp(t_star)

    def dg(lam):
        w = p * np.exp((v - vmax) / lam)
        mean_w = float(np.dot(w, v)) / float(w.sum())
        return beta + math.log(float(np.dot(p, np.exp((v - vmax) / lam)))) + vmax / lam - mean_w / lam

    # polish the stationary point: g'(l) = beta + ln E e^{X/l} - E[X e]/l E[e]
    lo, hi = lam / 8.0, lam * 8.0
    if dg(lo) < 0 < dg(hi):
        lam = bisect_root(dg, lo, hi, iters=200)
    val = lam * beta + lse(lam)
    return val, lam


def make_divergence_quadrangle(div: DivergenceFn, beta: float, fast: bool = True) -> Quadrangle:
    """The quadrangle generated by a divergence function at budget beta.

    Named divergences take their closed forms; the generic path evaluates the
    regret by a one-dimensional search in the perspective multiplier and
    projects the rest.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    v_regret = _phi_regret(div, beta)
    err = mean_center_regret(v_regret)
    monotone = div.kind == "divergence"
    flags = QuadrangleFlags(True, monotone, False, monotone)

    label = f"{div.label}_quadrangle({beta:g})"
    if fast and div.label == "kl":
        def risk(x):
            return _kl_risk(x, beta)[0]

        def statistic(x):
            val, lam = _kl_risk(x, beta)
            if lam == 0.0:
                return StatInterval.point(float(x.values[-1]))
            v, p = x.values, x.probs
            vmax = float(v[-1])
            return StatInterval.point(vmax + lam * math.log(float(np.dot(p, np.exp((v - vmax) / lam)))))

        return Quadrangle(
            risk=risk,
            deviation=lambda x: risk(x) - x.mean(),
            regret=v_regret.fn,
            error=err.fn,
            statistic=statistic,
            flags=flags,
            label=label,
            error_fn=err,
            regret_fn=v_regret,
        )
    if fast and div.label == "tv":
        if beta >= 2.0:
            raise ValueError("total-variation budget must lie in (0, 2)")

        def risk(x):
            lo, hi = ess_bounds(x)
            return 0.5 * beta * hi + (1.0 - 0.5 * beta) * cvar_direct(x, beta / 2.0)

        def statistic(x):
            # derived from the shifted-regret optimality condition: the argmin
            # is the midpoint set between the essential supremum and the
            # (beta/2)-quantile interval (checked against the generic route)
            q = quantile_interval(x, beta / 2.0)
            hi = ess_bounds(x)[1]
            return StatInterval(0.5 * (hi + q.lo), 0.5 * (hi + q.hi))

        return Quadrangle(
            risk=risk,
            deviation=lambda x: risk(x) - x.mean(),
            regret=v_regret.fn,
            error=err.fn,
            statistic=statistic,
            flags=flags,
            label=label,
            error_fn=err,
            regret_fn=v_regret,
        )
    if fast and div.label == "extended_pearson":
        rt = math.sqrt(beta)

        def risk(x):
            return x.mean() + rt * x.std()

        return Quadrangle(
            risk=risk,
            deviation=lambda x: rt * x.std(),
            regret=lambda x: x.mean() + rt * math.sqrt(max(x.moment(lambda t: t * t), 0.0)),
            error=lambda x: rt * math.sqrt(max(x.moment(lambda t: t * t), 0.0)),
            statistic=lambda x: StatInterval.point(x.mean()),
            flags=flags,
            label=label,
            error_fn=err,
            regret_fn=v_regret,
        )
    if fast and div.label == "pearson":
        coef = beta + 1.0

        def vreg(x):
            return math.sqrt(coef * x.moment(lambda t: np.maximum(t, 0.0) ** 2))

        def risk_stat(x):
            def g(c):
                return c + vreg(x.shift(-c))

            cstar, val = minimize_scalar_convex(g, tol=1e-12, hint=x.mean())
            return val, flat_interval(lambda c: g(c) - x.mean(), cstar, val - x.mean())

        return Quadrangle(
            risk=lambda x: risk_stat(x)[0],
            deviation=lambda x: risk_stat(x)[0] - x.mean(),
            regret=vreg,
            error=lambda x: vreg(x) - x.mean(),
            statistic=lambda x: risk_stat(x)[1],
            flags=flags,
            label=label,
            error_fn=ErrorFn(fn=lambda x: vreg(x) - x.mean(), flags=Flags(True, True, False)),
            regret_fn=RegretFn(fn=vreg, flags=Flags(True, True, False)),
        )
    if fast and div.label.startswith("gen_extended_pearson"):
        from .measures import expectile_value

        q_level = _gep_level(div)

        def error_fast(x):
            return math.sqrt(
                beta
                * x.moment(
                    lambda t: q_level * np.maximum(t, 0.0) ** 2 + (1.0 - q_level) * np.maximum(-t, 0.0) ** 2
                )
            )

        def deviation(x):
            e = expectile_value(x, q_level)
            return error_fast(x.shift(-e))

        return Quadrangle(
            risk=lambda x: deviation(x) + x.mean(),
            deviation=deviation,
            regret=lambda x: error_fast(x) + x.mean(),
            error=error_fast,
            statistic=lambda x: StatInterval.point(expectile_value(x, q_level)),
            flags=QuadrangleFlags(True, False, False, False),
            label=label,
            error_fn=ErrorFn(fn=error_fast, flags=Flags(True, False, False)),
            regret_fn=RegretFn(fn=lambda x: error_fast(x) + x.mean(), flags=Flags(True, False, False)),
        )

    # generic path
    def risk(x):
        return regret_to_risk(v_regret, x)[0]

    def statistic(x):
        return regret_to_risk(v_regret, x)[1]

    return Quadrangle(
        risk=risk,
        deviation=lambda x: risk(x) - x.mean(),
        regret=v_regret.fn,
        error=err.fn,
        statistic=statistic,
        flags=flags,
        label=label + "|generic",
        error_fn=err,
        regret_fn=v_regret,
    )


def _gep_level(div: DivergenceFn) -> float:
    # label carries the level: gen_extended_pearson(q)
    inside = div.label[div.label.index("(") + 1 : div.label.rindex(")")]
    return float(inside)


def perspective_quadrangle(base: Quadrangle, tau: float) -> Quadrangle:
    """Apply the perspective transform to every member of a quadrangle."""
    members = {
        name: (lambda fn: lambda x: family_eval_perspective(fn, tau, x))(getattr(base, name))
        for name in ("risk", "deviation", "regret", "error")
    }
    v_regret = RegretFn(fn=members["regret"], flags=Flags(True, base.flags.monotone, False))

    def statistic(x):
        return regret_to_risk(v_regret, x)[1]

    return Quadrangle(
        risk=members["risk"],
        deviation=members["deviation"],
        regret=members["regret"],
        error=members["error"],
        statistic=statistic,
        flags=QuadrangleFlags(True, base.flags.monotone, False, base.flags.monotone),
        label=f"perspective({tau:g})*{base.label}",
        error_fn=ErrorFn(fn=members["error"], flags=Flags(True, base.flags.monotone, False)),
        regret_fn=v_regret,
    )


# -- classification ------------------------------------------------------------------


def classify_divergence(
    j: StochasticDivergenceJ | Callable,
    probs,
    rng: Optional[np.random.Generator] = None,
    n_samples: int = 60,
) -> dict:
    """Sampled verification of the divergence-root/stochastic-divergence clauses."""
    rng = rng or np.random.default_rng(0)
    p = np.asarray(probs, dtype=float)
    m = p.size
    fn = j.fn if isinstance(j, StochasticDivergenceJ) else j
    ones = np.ones(m)
    report: dict[str, bool] = {}
    report["zero_at_one"] = abs(fn(ones, p)) <= 1e-9

    nonneg = True
    for _ in range(n_samples):
        q = rng.uniform(0.0, 3.0, m)
        val = fn(q, p)
        if math.isfinite(val) and val < -1e-9:
            nonneg = False
    report["nonnegative"] = nonneg

    unique = True
    for _ in range(n_samples):
        d = rng.normal(size=m)
        d -= np.dot(p, d)  # stay on the mass hyperplane
        if float(np.linalg.norm(d)) < 1e-12:
            continue
        q = ones + 0.35 * d / np.linalg.norm(d)
        if np.all(q >= 0):
            val = fn(q, p)
            if math.isfinite(val) and val <= 1e-12:
                unique = False
    report["unique_minimizer_at_one"] = unique

    # domain shape: negative coordinates must escape the domain
    q_neg = ones.copy()
    q_neg[0] = -0.5
    report["rejects_negative_density"] = not math.isfinite(fn(q_neg, p))
    # normalized domains must reject off-hyperplane densities
    q_off = ones * 1.4
    off_finite = math.isfinite(fn(q_off, p))
    core = report["zero_at_one"] and report["nonnegative"] and report["unique_minimizer_at_one"]
    if core and report["rejects_negative_density"]:
        report["classification"] = "divergence_root" if off_finite else "stochastic_divergence"
    else:
        report["classification"] = "general"
    return report


# -- the indicator regret that generates CVaR ------------------------------------------


def cvar_indicator_regret(x: DiscreteRv) -> float:
    """0 when E[X + 1]_+ <= 1, +inf otherwise."""
    return 0.0 if x.moment(lambda v: np.maximum(v + 1.0, 0.0)) <= 1.0 + 1e-12 else math.inf


def cvar_indicator_regret_family(tau: float) -> RegretFn:
    """Perspective family of the indicator regret: tau * inf{l > 0 : E[X + l]_+ <= l}.

    Projecting this regret at tau = alpha/(1-alpha) reproduces the alpha-tail
    CVaR.
    """

    def fn(x: DiscreteRv) -> float:
        v, p = x.values, x.probs
        mean = x.mean()
        scale = 1.0 + float(np.max(np.abs(v)))
        if mean > 1e-12 * scale:
            return math.inf  # g(l) = E[X+l]_+ - l tends to E[X] > 0: infeasible
        if float(v[-1]) <= 0.0:
            return 0.0  # g(0) = E[X]_+ = 0 already feasible

        def g(lam):
            return float(np.dot(p, np.maximum(v + lam, 0.0))) - lam

        tol = 1e-13 * scale
        hi = 1.0
        for _ in range(80):
            if g(hi) <= tol:
                break
            hi *= 2.0
        if g(hi) > tol:
            return math.inf
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) <= tol:
                hi = mid
            else:
                lo = mid
        return tau * hi

    return RegretFn(fn=fn, flags=Flags(True, True, False), label=f"cvar_indicator_family({tau:g})")
