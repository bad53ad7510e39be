"""The catalog of concrete quadrangles with closed-form fast paths.

Families: scaled standard-deviation (mean-based), quantile (CVaR), second-order
CVaR, quantile symmetric average (CVaR-norm), its union variant (Vapnik /
epsilon-insensitive), expectile in squared and piecewise-linear form, the
piecewise-linear mean family, and the biased mean family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DiscreteRv, StatInterval, cvar_direct, ess_bounds, expectation, p_norm, quantile_interval
from .constructions import (
    ErrorFn,
    Flags,
    MomentMaxSpec,
    Quadrangle,
    QuadrangleFlags,
    RegretFn,
    ScalarLoss,
    error_from_loss,
    error_from_moment_max,
    mean_center_error,
    project_error,
    regret_to_risk,
)

__all__ = [
    "CatalogSpec",
    "make_catalog_quadrangle",
    "expectile_value",
    "alpha_set",
    "qsau_statistic_union",
    "qsau_printed_risk",
    "cvar2_risk",
    "cvar2_regret",
    "koenker_bassett_loss",
    "vapnik_loss",
    "asymmetric_mse_loss",
    "CATALOG_FAMILIES",
]

CATALOG_FAMILIES = {
    "standard_mean": ("lam",),
    "quantile": ("alpha",),
    "cvar2": ("alpha",),
    "qsa": ("alpha",),
    "qsau": ("eps",),
    "expectile_mse": ("q",),
    "expectile_pl": ("K",),
    "mean_pl": (),
    "biased_mean": ("x",),
}


@dataclass(frozen=True)
class CatalogSpec:
    """Family name plus its parameters; validated on construction."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in CATALOG_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(CATALOG_FAMILIES)}")
        wanted = set(CATALOG_FAMILIES[self.family])
        got = set(self.params)
        if got != wanted:
            raise ValueError(f"family {self.family!r} takes params {sorted(wanted)}, got {sorted(got)}")
        p = self.params
        if self.family == "standard_mean" and not p["lam"] > 0:
            raise ValueError("lam must be positive")
        if self.family in ("quantile", "cvar2", "qsa") and not 0.0 < p["alpha"] < 1.0:
            raise ValueError("alpha must lie in (0,1)")
        if self.family == "qsau" and not p["eps"] >= 0.0:
            raise ValueError("eps must be nonnegative")
        if self.family == "expectile_mse" and not 0.0 < p["q"] < 1.0:
            raise ValueError("q must lie in (0,1)")
        if self.family == "expectile_pl" and not p["K"] > 0.0:
            raise ValueError(
                "K must be positive: the expectile changes character across q = 1/2, "
                "and the piecewise-linear family is only exposed on the coherent side"
            )


# -- scalar losses for the expectation-type families -------------------------------


def koenker_bassett_loss(alpha: float) -> ScalarLoss:
    """e(z) = (alpha/(1-alpha)) z_+ + z_-."""
    s = alpha / (1.0 - alpha)
    return ScalarLoss.from_pieces([(s, 0.0), (-1.0, 0.0)], label=f"koenker_bassett({alpha:g})")


def vapnik_loss(eps: float) -> ScalarLoss:
    """e(z) = (|z| - eps)_+, the epsilon-insensitive loss."""
    if eps == 0.0:
        return ScalarLoss.from_pieces([(1.0, 0.0), (-1.0, 0.0)], label="vapnik(0)")
    return ScalarLoss.from_pieces([(1.0, -eps), (-1.0, -eps), (0.0, 0.0)], label=f"vapnik({eps:g})")


def asymmetric_mse_loss(q: float) -> ScalarLoss:
    """e(z) = q z_+^2 + (1-q) z_-^2."""

    def fn(z):
        z = np.asarray(z, dtype=float)
        return q * np.maximum(z, 0.0) ** 2 + (1.0 - q) * np.maximum(-z, 0.0) ** 2

    def deriv(z):
        z = np.asarray(z, dtype=float)
        return 2.0 * q * np.maximum(z, 0.0) - 2.0 * (1.0 - q) * np.maximum(-z, 0.0)

    return ScalarLoss(fn, deriv, deriv, kinks=(), pieces=None, label=f"asymmetric_mse({q:g})")


# -- expectiles -----------------------------------------------------------------------


def expectile_value(x: DiscreteRv, q: float) -> float:
    """The unique C with q E[(X-C)_+] = (1-q) E[(X-C)_-].

    The balance function is piecewise linear and strictly decreasing in C, so
    the root is located by a segment scan and solved exactly.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("expectile level must lie in (0,1)")
    v = x.values
    if x.is_constant():
        return float(v[0])

    def h(c):
        d = v - c
        return float(np.dot(x.probs, q * np.maximum(d, 0.0) - (1.0 - q) * np.maximum(-d, 0.0)))

    lo, hi = float(v[0]), float(v[-1])
    hs = [h(c) for c in v]
    idx = 0
    for i in range(len(v) - 1):
        if hs[i] >= 0.0 >= hs[i + 1]:
            idx = i
            break
    a, b = float(v[idx]), float(v[idx + 1])
    ha, hb = hs[idx], hs[idx + 1]
    if ha == hb:
        return 0.5 * (a + b)
    return a - ha * (b - a) / (hb - ha)


def _expectile_q_from_k(k: float) -> float:
    return (1.0 + k) / (1.0 + 2.0 * k)


# -- second-order CVaR integrals --------------------------------------------------------


def _tail_segments(x: DiscreteRv):
    """Per CDF-segment coefficients of CVaR_b = (A_i - v_i b)/(1-b) on (pi_{i-1}, pi_i).

    On the last segment CVaR_b is identically ess sup, so its log coefficient
    A_i - v_i is pinned to zero exactly.
    """
    v, p = x.values, x.probs
    cum = np.cumsum(p)
    tail_sum = np.concatenate((np.cumsum((p * v)[::-1])[::-1], [0.0]))
    segs = []
    lo = 0.0
    for i in range(v.size):
        last = i == v.size - 1
        hi = 1.0 if last else float(cum[i])
        a_i = float(v[i]) if last else float(v[i] * cum[i] + tail_sum[i + 1])
        segs.append((lo, hi, float(v[i]), a_i))
        lo = hi
    return segs


def _integral_cvar(segs, a: float, b: float) -> float:
    """Integral of CVaR_beta over [a, b] in closed form per segment."""
    total = 0.0
    for lo, hi, vi, ai in segs:
        s, t = max(a, lo), min(b, hi)
        if t <= s:
            continue
        coef = ai - vi  # log coefficient; exactly zero on the last segment
        if coef != 0.0:
            total += coef * (math.log(1.0 - s) - math.log(1.0 - t))
        total += vi * (t - s)
    return total


def cvar2_risk(x: DiscreteRv, alpha: float) -> float:
    """(1/(1-alpha)) * integral of CVaR_beta over (alpha, 1), exactly."""
    segs = _tail_segments(x)
    return _integral_cvar(segs, alpha, 1.0) / (1.0 - alpha)


def cvar2_regret(x: DiscreteRv, alpha: float) -> float:
    """(1/(1-alpha)) * integral of [CVaR_beta]_+ over (0, 1), exactly.

    CVaR_beta is continuous and nondecreasing in beta: the positive part of
    the integrand starts at the unique root, solved per segment from the
    (a_i - v_i b)/(1 - b) representation.
    """
    segs = _tail_segments(x)
    if x.mean() >= 0.0:
        start = 0.0
    elif segs[-1][2] <= 0.0:  # ess sup <= 0: integrand never positive
        return 0.0
    else:
        start = None
        for lo, hi, vi, ai in segs:
            b_end = min(hi, 1.0 - 1e-15)
            f_lo = (ai - vi * lo) / (1.0 - lo)
            f_hi = (ai - vi * b_end) / (1.0 - b_end)
            if f_lo < 0.0 <= f_hi:
                start = min(max(ai / vi, lo), hi) if vi != 0.0 else lo
                break
        if start is None:
            # no sign change located although ess sup > 0: the mean sits at
            # zero within rounding and the integrand is nonnegative throughout
            start = 0.0
    return _integral_cvar(segs, start, 1.0) / (1.0 - alpha)


# -- the alpha-set of the union family ----------------------------------------------------


def _half_spread_interval(x: DiscreteRv, alpha: float) -> StatInterval:
    """The set (1/2)(q_{(1+alpha)/2}(X) - q_{(1-alpha)/2}(X)) as an interval."""
    if alpha == 0.0:
        q = quantile_interval(x, 0.5)
        return StatInterval(0.5 * (q.lo - q.hi), 0.5 * (q.hi - q.lo))
    qh = quantile_interval(x, (1.0 + alpha) / 2.0)
    ql = quantile_interval(x, (1.0 - alpha) / 2.0)
    return StatInterval(0.5 * (qh.lo - ql.hi), 0.5 * (qh.hi - ql.lo))


def _alpha_breakpoints(x: DiscreteRv) -> np.ndarray:
    cum = np.cumsum(x.probs)[:-1]
    pts = [0.0]
    for c in cum:
        for a in (2.0 * c - 1.0, 1.0 - 2.0 * c):
            if 0.0 < a < 1.0:
                pts.append(float(a))
    return np.unique(np.asarray(pts))


def alpha_set(x: DiscreteRv, eps: float) -> list[StatInterval]:
    """The set of levels alpha in [0,1) whose symmetric quantile half-spread covers eps.

    Returned as a finite union of closed intervals computed from the
    piecewise-constant quantile functions on the atom grid.
    """
    lo_b, hi_b = ess_bounds(x)
    bound = 0.5 * (hi_b - lo_b)
    if not 0.0 <= eps < bound:
        raise ValueError(f"eps must satisfy 0 <= eps < {bound} for this r.v.")
    bps = _alpha_breakpoints(x)
    cells: list[tuple[float, float, bool]] = []
    # candidate points: breakpoints and midpoints of the cells between them
    edges = list(bps) + [1.0]
    qualifying = []
    for i, a in enumerate(edges[:-1]):
        nxt = edges[i + 1]
        here = _half_spread_interval(x, a).contains(eps, tol=1e-12)
        mid_a = 0.5 * (a + nxt)
        mid = _half_spread_interval(x, mid_a).contains(eps, tol=1e-12)
        qualifying.append((a, nxt, here, mid))
    intervals: list[list[float]] = []

    def push(lo, hi):
        if intervals and lo <= intervals[-1][1] + 1e-15:
            intervals[-1][1] = max(intervals[-1][1], hi)
        else:
            intervals.append([lo, hi])

    for a, nxt, here, mid in qualifying:
        if here:
            push(a, a)
        if mid:
            push(a, nxt if nxt < 1.0 else nxt - 1e-12)
    return [StatInterval(lo, hi) for lo, hi in intervals]


def qsau_statistic_union(x: DiscreteRv, eps: float) -> list[StatInterval]:
    """Union over the alpha-set of the symmetric quantile averages.

    The two quantile selections are coupled through the spread equation:
    contributed midpoints are (a + b)/2 over a in q_{(1+alpha)/2},
    b in q_{(1-alpha)/2} with (a - b)/2 = eps, i.e. the interval
    [max(ql.lo + eps, qh.lo - eps), min(ql.hi + eps, qh.hi - eps)].
    """
    cells = alpha_set(x, eps)
    bps = _alpha_breakpoints(x)
    out: list[list[float]] = []

    def mid_interval(a: float) -> Optional[StatInterval]:
        qh = quantile_interval(x, (1.0 + a) / 2.0) if a > 0 else quantile_interval(x, 0.5)
        ql = quantile_interval(x, (1.0 - a) / 2.0) if a > 0 else qh
        lo = max(ql.lo + eps, qh.lo - eps)
        hi = min(ql.hi + eps, qh.hi - eps)
        if lo > hi + 1e-12:
            return None
        return StatInterval(lo, max(lo, hi))

    def push(iv: Optional[StatInterval]):
        if iv is None:
            return
        out.append([iv.lo, iv.hi])

    for cell in cells:
        probe = {cell.lo, cell.hi}
        inside = bps[(bps > cell.lo) & (bps < cell.hi)]
        probe.update(float(b) for b in inside)
        ordered = sorted(probe)
        for a, b in zip(ordered, ordered[1:] + [None]):
            push(mid_interval(a))
            if b is not None:
                push(mid_interval(0.5 * (a + b)))
    merged = sorted((lo, hi) for lo, hi in out)
    final: list[list[float]] = []
    for lo, hi in merged:
        if final and lo <= final[-1][1] + 1e-12:
            final[-1][1] = max(final[-1][1], hi)
        else:
            final.append([lo, hi])
    return [StatInterval(lo, hi) for lo, hi in final]


# -- the catalog --------------------------------------------------------------------------


def make_catalog_quadrangle(spec: CatalogSpec) -> Quadrangle:
    """Instantiate a catalog family with its printed closed forms."""
    fam = spec.family
    p = spec.params
    if fam == "standard_mean":
        return _standard_mean(p["lam"])
    if fam == "quantile":
        return _quantile(p["alpha"])
    if fam == "cvar2":
        return _cvar2(p["alpha"])
    if fam == "qsa":
        return _qsa(p["alpha"])
    if fam == "qsau":
        return _qsau(p["eps"])
    if fam == "expectile_mse":
        return _expectile_mse(p["q"])
    if fam == "expectile_pl":
        return _expectile_pl(p["K"])
    if fam == "mean_pl":
        return _mean_pl()
    if fam == "biased_mean":
        return _biased_mean(p["x"])
    raise AssertionError(fam)


def _standard_mean(lam: float) -> Quadrangle:
    err = ErrorFn(
        fn=lambda x: lam * p_norm(x, 2.0),
        flags=Flags(positively_homogeneous=True, monotone=False, expectation_type=False),
        label=f"l2_error({lam:g})",
    )
    return Quadrangle(
        risk=lambda x: x.mean() + lam * x.std(),
        deviation=lambda x: lam * x.std(),
        regret=lambda x: x.mean() + lam * p_norm(x, 2.0),
        error=err.fn,
        statistic=lambda x: StatInterval.point(x.mean()),
        flags=QuadrangleFlags(True, False, False, False),
        label=f"standard_mean({lam:g})",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )


def _quantile(alpha: float) -> Quadrangle:
    loss = koenker_bassett_loss(alpha)
    err = error_from_loss(loss, Flags(True, True, True), label=f"koenker_bassett({alpha:g})")
    scale = 1.0 / (1.0 - alpha)
    v_regret = RegretFn(
        fn=lambda x: scale * x.mean_pos(),
        flags=Flags(True, True, True),
        label=f"scaled_partial_moment({alpha:g})",
        loss=ScalarLoss.from_pieces([(scale, 0.0), (0.0, 0.0)]),
    )
    return Quadrangle(
        risk=lambda x: cvar_direct(x, alpha),
        deviation=lambda x: cvar_direct(x.shift(-x.mean()), alpha),
        regret=v_regret.fn,
        error=err.fn,
        statistic=lambda x: quantile_interval(x, alpha),
        flags=QuadrangleFlags(True, True, True, True),
        label=f"quantile({alpha:g})",
        error_fn=err,
        regret_fn=v_regret,
    )


def _cvar2(alpha: float) -> Quadrangle:
    err = ErrorFn(
        fn=lambda x: cvar2_regret(x, alpha) - x.mean(),
        flags=Flags(True, True, False),
        label=f"cvar2_error({alpha:g})",
    )
    v_regret = RegretFn(
        fn=lambda x: cvar2_regret(x, alpha),
        flags=Flags(True, True, False),
        label=f"cvar2_regret({alpha:g})",
    )
    return Quadrangle(
        risk=lambda x: cvar2_risk(x, alpha),
        deviation=lambda x: cvar2_risk(x, alpha) - x.mean(),
        regret=v_regret.fn,
        error=err.fn,
        statistic=lambda x: StatInterval.point(cvar_direct(x, alpha)),
        flags=QuadrangleFlags(True, True, False, True),
        label=f"cvar2({alpha:g})",
        error_fn=err,
        regret_fn=v_regret,
    )


def _qsa_breakpoints(x: DiscreteRv) -> np.ndarray:
    v = x.values
    mids = 0.5 * (v[:, None] + v[None, :])
    return np.unique(np.concatenate([v, mids.ravel()]))


def _qsa(alpha: float) -> Quadrangle:
    def cvar_norm(x: DiscreteRv) -> float:
        return (1.0 - alpha) * cvar_direct(x.abs(), alpha)

    err = ErrorFn(
        fn=cvar_norm,
        flags=Flags(True, True, False),
        label=f"cvar_norm({alpha:g})",
        shift_breakpoints=_qsa_breakpoints,
    )
    a_lo = (1.0 - alpha) / 2.0
    a_hi = (1.0 + alpha) / 2.0

    def risk(x):
        return 0.5 * ((1.0 + alpha) * cvar_direct(x, a_lo) + (1.0 - alpha) * cvar_direct(x, a_hi))

    def statistic(x):
        ql = quantile_interval(x, a_lo)
        qh = quantile_interval(x, a_hi)
        return StatInterval.weighted_sum([ql, qh], [0.5, 0.5])

    return Quadrangle(
        risk=risk,
        deviation=lambda x: risk(x) - x.mean(),
        regret=lambda x: cvar_norm(x) + x.mean(),
        error=err.fn,
        statistic=statistic,
        flags=QuadrangleFlags(True, True, False, True),
        label=f"qsa({alpha:g})",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )


def _qsau(eps: float) -> Quadrangle:
    loss = vapnik_loss(eps)
    ph = eps == 0.0
    err = error_from_loss(loss, Flags(ph, True, True), label=f"vapnik({eps:g})")
    v_regret = mean_center_error(err)

    def statistic(x):
        return project_error(err, x)[1]

    def risk(x):
        return regret_to_risk(v_regret, x)[0]

    return Quadrangle(
        risk=risk,
        deviation=lambda x: risk(x) - x.mean(),
        regret=v_regret.fn,
        error=err.fn,
        statistic=statistic,
        flags=QuadrangleFlags(ph, True, True, ph),
        label=f"qsau({eps:g})",
        error_fn=err,
        regret_fn=v_regret,
    )


def qsau_printed_risk(x: DiscreteRv, eps: float, alpha: float) -> float:
    """The closed-form risk at a level alpha drawn from the alpha-set."""
    a_lo = (1.0 - alpha) / 2.0
    a_hi = (1.0 + alpha) / 2.0
    return 0.5 * ((1.0 + alpha) * cvar_direct(x, a_lo) + (1.0 - alpha) * cvar_direct(x, a_hi)) - (1.0 - alpha) * eps


def _expectile_mse(q: float) -> Quadrangle:
    loss = asymmetric_mse_loss(q)
    err = error_from_loss(loss, Flags(False, False, True), label=f"asymmetric_mse({q:g})")

    def deviation(x):
        e = expectile_value(x, q)
        d = x.values - e
        return float(np.dot(x.probs, q * np.maximum(d, 0.0) ** 2 + (1.0 - q) * np.maximum(-d, 0.0) ** 2))

    return Quadrangle(
        risk=lambda x: deviation(x) + x.mean(),
        deviation=deviation,
        regret=lambda x: err.fn(x) + x.mean(),
        error=err.fn,
        statistic=lambda x: StatInterval.point(expectile_value(x, q)),
        flags=QuadrangleFlags(False, False, True, False),
        label=f"expectile_mse({q:g})",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )


def _expectile_pl(k: float) -> Quadrangle:
    q = _expectile_q_from_k(k)
    spec = MomentMaxSpec(((-1.0, 0.0, 0.0), (0.0, 1.0 / k, 0.0)))
    err = error_from_moment_max(spec, Flags(True, True, False), label=f"expectile_pl_error({k:g})")

    def statistic_value(x):
        return expectile_value(x, q)

    return Quadrangle(
        risk=statistic_value,
        deviation=lambda x: expectile_value(x.shift(-x.mean()), q),
        regret=lambda x: err.fn(x) + x.mean(),
        error=err.fn,
        statistic=lambda x: StatInterval.point(statistic_value(x)),
        flags=QuadrangleFlags(True, True, False, True),
        label=f"expectile_pl({k:g})",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )


def _mean_pl() -> Quadrangle:
    spec = MomentMaxSpec(((-1.0, 1.0, 0.0), (0.0, 1.0, 0.0)))
    err = error_from_moment_max(spec, Flags(True, True, False), label="adjusted_mean_abs_error")

    def deviation(x):
        return x.shift(-x.mean()).mean_pos()

    return Quadrangle(
        risk=lambda x: deviation(x) + x.mean(),
        deviation=deviation,
        regret=lambda x: err.fn(x) + x.mean(),
        error=err.fn,
        statistic=lambda x: StatInterval.point(x.mean()),
        flags=QuadrangleFlags(True, True, False, True),
        label="mean_pl",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )


def _biased_mean(x0: float) -> Quadrangle:
    xp, xn = max(x0, 0.0), max(-x0, 0.0)
    spec = MomentMaxSpec(((-1.0, 1.0, -xp), (0.0, 1.0, -xn)))
    err = error_from_moment_max(spec, Flags(x0 == 0.0, True, False), label=f"superexpectation_error({x0:g})")

    def deviation(x):
        return x.shift(-x.mean() - x0).mean_pos() - xn

    return Quadrangle(
        risk=lambda x: deviation(x) + x.mean(),
        deviation=deviation,
        regret=lambda x: err.fn(x) + x.mean(),
        error=err.fn,
        statistic=lambda x: StatInterval.point(x0 + x.mean()),
        flags=QuadrangleFlags(x0 == 0.0, True, False, x0 == 0.0),
        label=f"biased_mean({x0:g})",
        error_fn=err,
        regret_fn=mean_center_error(err),
    )
