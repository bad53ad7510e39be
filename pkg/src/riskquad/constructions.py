"""Building complete quadrangles from errors or regrets, and combining them.

A quadrangle bundles five evaluators: risk, deviation, regret, error, and the
statistic (the interval of constant shifts attaining the projection minima).
Errors and regrets generate the rest: deviation by projecting the error over
constant shifts, risk by the shifted-regret minimum, with both argmin
intervals provably equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DiscreteRv, StatInterval, expectation
from .solvers import (
    LpProblem,
    ObjectiveInfiniteError,
    argmin_interval_pwl,
    compass_search,
    flat_interval,
    minimize_scalar_convex,
    minimize_subgradient,
    solve_lp,
)

__all__ = [
    "Flags",
    "ScalarLoss",
    "MomentMaxSpec",
    "ErrorFn",
    "RegretFn",
    "Quadrangle",
    "QuadrangleFlags",
    "SubregularityError",
    "error_from_loss",
    "error_from_moment_max",
    "project_error",
    "regret_to_risk",
    "mean_center_error",
    "mean_center_regret",
    "quadrangle_from_error",
    "check_subregular_error",
    "check_monotone_error",
    "mix_quadrangles",
    "scale_quadrangle",
    "revert_quadrangles",
    "expectation_quadrangle",
    "error_from_coherent_risk",
]


class SubregularityError(ValueError):
    """A sampled axiom of the error/regret contract failed."""


@dataclass(frozen=True)
class Flags:
    positively_homogeneous: bool = False
    monotone: bool = False
    expectation_type: bool = False


# -- scalar losses -------------------------------------------------------------


@dataclass(frozen=True)
class ScalarLoss:
    """Pointwise loss e with one-sided derivatives; v(x) = x + e(x) is its regret twin.

    ``pieces`` (slope, intercept) is set when e is the max of finitely many
    affine pieces, which unlocks exact breakpoint scans and LP encodings.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    d_left: Callable[[np.ndarray], np.ndarray]
    d_right: Callable[[np.ndarray], np.ndarray]
    kinks: tuple[float, ...] = ()
    pieces: Optional[tuple[tuple[float, float], ...]] = None
    label: str = ""

    @property
    def piecewise_linear(self) -> bool:
        return self.pieces is not None

    @staticmethod
    def from_pieces(pieces: Sequence[tuple[float, float]], label: str = "") -> "ScalarLoss":
        """e(z) = max_k (s_k z + b_k) from affine pieces sorted by slope."""
        ps = sorted(set((float(s), float(b)) for s, b in pieces))
        slopes = np.array([s for s, _ in ps])
        icpts = np.array([b for _, b in ps])

        def fn(z):
            z = np.asarray(z, dtype=float)
            return np.max(np.multiply.outer(z, slopes) + icpts, axis=-1)

        def d_right(z):
            z = np.asarray(z, dtype=float)
            vals = np.multiply.outer(z, slopes) + icpts
            best = np.max(vals, axis=-1, keepdims=True)
            active = vals >= best - 1e-12 * (1.0 + np.abs(best))
            s = np.broadcast_to(slopes, vals.shape)
            return np.max(np.where(active, s, -np.inf), axis=-1)

        def d_left(z):
            z = np.asarray(z, dtype=float)
            vals = np.multiply.outer(z, slopes) + icpts
            best = np.max(vals, axis=-1, keepdims=True)
            active = vals >= best - 1e-12 * (1.0 + np.abs(best))
            s = np.broadcast_to(slopes, vals.shape)
            return np.min(np.where(active, s, np.inf), axis=-1)

        kinks = []
        for (s1, b1), (s2, b2) in zip(ps[:-1], ps[1:]):
            if s2 - s1 > 1e-15:
                kinks.append((b1 - b2) / (s2 - s1))
        return ScalarLoss(fn, d_left, d_right, tuple(sorted(set(kinks))), tuple(ps), label)


def _loss_to_regret_loss(loss: ScalarLoss) -> ScalarLoss:
    """v(x) = x + e(x)."""
    pieces = None
    if loss.pieces is not None:
        pieces = tuple((s + 1.0, b) for s, b in loss.pieces)
    return ScalarLoss(
        fn=lambda z: np.asarray(z, dtype=float) + loss.fn(z),
        d_left=lambda z: 1.0 + loss.d_left(z),
        d_right=lambda z: 1.0 + loss.d_right(z),
        kinks=loss.kinks,
        pieces=pieces,
        label=(loss.label + "+x") if loss.label else "",
    )


@dataclass(frozen=True)
class MomentMaxSpec:
    """Functionals of the form max_j (a_j E[Z] + b_j E[Z_+] + c_j), b_j >= 0.

    Piecewise linear in constant shifts of Z, hence LP-encodable and amenable
    to exact breakpoint scans.
    """

    terms: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        for _, b, _ in self.terms:
            if b < 0:
                raise ValueError("E[Z_+] coefficients must be nonnegative")

    def value(self, x: DiscreteRv) -> float:
        m = x.mean()
        t = x.mean_pos()
        return max(a * m + b * t + c for a, b, c in self.terms)

    def shifted(self, delta_a: float) -> "MomentMaxSpec":
        return MomentMaxSpec(tuple((a + delta_a, b, c) for a, b, c in self.terms))

    def shift_breakpoints(self, x: DiscreteRv) -> np.ndarray:
        """Kinks of C -> value(X - C): atom values plus branch crossings."""
        v, p = x.values, x.probs
        mean = x.mean()
        pts = list(v)
        # per segment, each branch is affine: h_j(C) = icpt_j + slope_j * C
        seg_edges = np.concatenate(([-np.inf], v, [np.inf]))
        tail_p = np.concatenate((np.cumsum(p[::-1])[::-1], [0.0]))
        tail_s = np.concatenate((np.cumsum((p * v)[::-1])[::-1], [0.0]))
        for i in range(len(seg_edges) - 1):
            lo, hi = seg_edges[i], seg_edges[i + 1]
            pgt, sgt = tail_p[i], tail_s[i]
            lines = [(a * mean + b * sgt + c, -(a + b * pgt)) for a, b, c in self.terms]
            for j in range(len(lines)):
                for k in range(j + 1, len(lines)):
                    (i1, s1), (i2, s2) = lines[j], lines[k]
                    if abs(s1 - s2) > 1e-14:
                        cstar = (i2 - i1) / (s1 - s2)
                        if lo - 1e-12 <= cstar <= hi + 1e-12 and math.isfinite(cstar):
                            pts.append(cstar)
        return np.unique(np.asarray(pts, dtype=float))


# -- error / regret wrappers -----------------------------------------------------


@dataclass(frozen=True)
class ErrorFn:
    """Nonnegative functional quantifying nonzeroness; eval(0) = 0."""

    fn: Callable[[DiscreteRv], float]
    flags: Flags = Flags()
    label: str = ""
    loss: Optional[ScalarLoss] = None
    moment_max: Optional[MomentMaxSpec] = None
    shift_breakpoints: Optional[Callable[[DiscreteRv], np.ndarray]] = None

    def __call__(self, x: DiscreteRv) -> float:
        return self.fn(x)


@dataclass(frozen=True)
class RegretFn:
    """Functional quantifying displeasure with a loss mix; eval >= E."""

    fn: Callable[[DiscreteRv], float]
    flags: Flags = Flags()
    label: str = ""
    loss: Optional[ScalarLoss] = None
    moment_max: Optional[MomentMaxSpec] = None
    shift_breakpoints: Optional[Callable[[DiscreteRv], np.ndarray]] = None

    def __call__(self, x: DiscreteRv) -> float:
        return self.fn(x)


def error_from_loss(loss: ScalarLoss, flags: Flags | None = None, label: str = "") -> ErrorFn:
    if flags is None:
        flags = Flags(expectation_type=True)
    return ErrorFn(
        fn=lambda x: x.moment(loss.fn),
        flags=replace(flags, expectation_type=True),
        label=label or loss.label,
        loss=loss,
    )


def error_from_moment_max(spec: MomentMaxSpec, flags: Flags, label: str = "") -> ErrorFn:
    return ErrorFn(
        fn=spec.value,
        flags=flags,
        label=label,
        moment_max=spec,
        shift_breakpoints=spec.shift_breakpoints,
    )


def mean_center_error(err: ErrorFn) -> RegretFn:
    """V(X) = E(X) + E[X]."""
    loss = _loss_to_regret_loss(err.loss) if err.loss is not None else None
    mm = err.moment_max.shifted(1.0) if err.moment_max is not None else None
    return RegretFn(
        fn=lambda x: err.fn(x) + x.mean(),
        flags=err.flags,
        label=err.label,
        loss=loss,
        moment_max=mm,
        shift_breakpoints=err.shift_breakpoints,
    )


def mean_center_regret(v: RegretFn) -> ErrorFn:
    """E(X) = V(X) - E[X]."""
    loss = None
    if v.loss is not None:
        pieces = tuple((s - 1.0, b) for s, b in v.loss.pieces) if v.loss.pieces else None
        loss = ScalarLoss(
            fn=lambda z: v.loss.fn(z) - np.asarray(z, dtype=float),
            d_left=lambda z: v.loss.d_left(z) - 1.0,
            d_right=lambda z: v.loss.d_right(z) - 1.0,
            kinks=v.loss.kinks,
            pieces=pieces,
            label=v.loss.label,
        )
    mm = v.moment_max.shifted(-1.0) if v.moment_max is not None else None
    return ErrorFn(
        fn=lambda x: v.fn(x) - x.mean(),
        flags=v.flags,
        label=v.label,
        loss=loss,
        moment_max=mm,
        shift_breakpoints=v.shift_breakpoints,
    )


# -- statistic machinery -----------------------------------------------------------


def _shift_breakpoints(f, x: DiscreteRv) -> Optional[np.ndarray]:
    if f.shift_breakpoints is not None:
        return np.asarray(f.shift_breakpoints(x), dtype=float)
    if f.moment_max is not None:
        return f.moment_max.shift_breakpoints(x)
    if f.loss is not None and f.loss.piecewise_linear:
        v = x.values
        if f.loss.kinks:
            pts = (v[:, None] - np.asarray(f.loss.kinks)[None, :]).ravel()
        else:
            pts = v
        return np.unique(pts)
    return None


def _stat_from_derivatives(loss: ScalarLoss, x: DiscreteRv, around: float) -> StatInterval:
    """Statistic from the one-sided derivative criterion.

    {C : E[e'_-(X-C)] <= 0 <= E[e'_+(X-C)]}; both expectations are
    nonincreasing in C, so each endpoint is a monotone crossing.
    """
    v, p = x.values, x.probs

    def g_plus(c):
        return float(np.dot(p, loss.d_right(v - c)))

    def g_minus(c):
        return float(np.dot(p, loss.d_left(v - c)))

    span0 = max(1.0, float(v[-1] - v[0]))

    def expand(g, start, direction, want):
        # march until the predicate holds; g is monotone nonincreasing in c
        c, step = start, span0
        for _ in range(60):
            val = g(c)
            ok = val >= 0.0 if want == "nonneg" else (val > 0.0 if want == "pos" else (val < 0.0 if want == "neg" else val <= 0.0))
            if ok:
                return c
            c += direction * step
            step *= 2.0
        return c

    def mono_crossing(g, target_sign):
        # largest c with g(c) >= 0 when target_sign > 0, else smallest c with g(c) <= 0
        if target_sign > 0:
            a = expand(g, float(v[0]) - span0, -1.0, "nonneg")
            b = expand(g, float(v[-1]) + span0, +1.0, "neg")
        else:
            a = expand(g, float(v[0]) - span0, -1.0, "pos")
            b = expand(g, float(v[-1]) + span0, +1.0, "nonpos")
        for _ in range(200):
            m = 0.5 * (a + b)
            gm = g(m)
            if target_sign > 0:
                if gm >= 0.0:
                    a = m
                else:
                    b = m
            else:
                if gm <= 0.0:
                    b = m
                else:
                    a = m
        return a if target_sign > 0 else b

    hi = mono_crossing(g_plus, +1)
    lo = mono_crossing(g_minus, -1)
    if loss.kinks:
        candidates = np.unique((v[:, None] - np.asarray(loss.kinks)[None, :]).ravel())
        for i, c in enumerate((lo, hi)):
            near = candidates[np.abs(candidates - c) <= 1e-8 * (1.0 + abs(c))]
            if near.size:
                snapped = float(near[np.argmin(np.abs(near - c))])
                if i == 0:
                    lo = snapped
                else:
                    hi = snapped
    if hi < lo:
        lo = hi = 0.5 * (lo + hi)
    return StatInterval(lo, hi)


def project_error(err: ErrorFn, x: DiscreteRv, tol: float = 1e-10) -> tuple[float, StatInterval]:
    """D(X) = min_C E(X - C) together with the full argmin interval."""

    def g(c):
        return err.fn(x.shift(-c))

    bps = _shift_breakpoints(err, x)
    if bps is not None:
        interval = argmin_interval_pwl(g, bps)
        return g(interval.lo), interval
    if err.loss is not None:
        interval = _stat_from_derivatives(err.loss, x, x.mean())
        return g(interval.midpoint), interval
    try:
        cstar, fstar = minimize_scalar_convex(g, tol=tol, hint=x.mean())
    except ObjectiveInfiniteError as exc:
        raise ObjectiveInfiniteError("error infinite on all shifts") from exc
    return fstar, flat_interval(g, cstar, fstar)


def regret_to_risk(
    v: RegretFn, x: DiscreteRv, tol: float = 1e-10, want_interval: bool = True
) -> tuple[float, StatInterval]:
    """R(X) = min_C {C + V(X - C)} together with the full argmin interval.

    ``want_interval=False`` skips the flat-set recovery and returns a point
    interval at the located minimizer (cheaper when only the value matters).
    """

    def g(c):
        return c + v.fn(x.shift(-c))

    bps = _shift_breakpoints(v, x)
    if bps is not None:
        interval = argmin_interval_pwl(g, bps)
        return g(interval.lo), interval
    if v.loss is not None:
        err_loss = ScalarLoss(
            fn=lambda z: v.loss.fn(z) - np.asarray(z, dtype=float),
            d_left=lambda z: v.loss.d_left(z) - 1.0,
            d_right=lambda z: v.loss.d_right(z) - 1.0,
            kinks=v.loss.kinks,
        )
        interval = _stat_from_derivatives(err_loss, x, x.mean())
        return g(interval.midpoint), interval
    try:
        cstar, fstar = minimize_scalar_convex(g, tol=tol, hint=x.mean())
    except ObjectiveInfiniteError as exc:
        raise ObjectiveInfiniteError("regret objective infinite on all shifts") from exc
    if not want_interval:
        return fstar, StatInterval.point(cstar)
    # recover the flat set on the mean-centered objective, which coincides
    # with the paired error's projection objective: the two routes then
    # resolve the same sublevel set at the same threshold
    mean = x.mean()
    interval = flat_interval(lambda c: g(c) - mean, cstar, fstar - mean)
    return fstar, interval


# -- quadrangle bundle --------------------------------------------------------------


@dataclass(frozen=True)
class QuadrangleFlags:
    positively_homogeneous: bool = False
    monotone: bool = False
    expectation_type: bool = False
    coherent: bool = False  # monotone and positively homogeneous


@dataclass(frozen=True)
class Quadrangle:
    """Risk, deviation, regret, error evaluators plus the statistic."""

    risk: Callable[[DiscreteRv], float]
    deviation: Callable[[DiscreteRv], float]
    regret: Callable[[DiscreteRv], float]
    error: Callable[[DiscreteRv], float]
    statistic: Callable[[DiscreteRv], StatInterval]
    flags: QuadrangleFlags
    label: str = ""
    error_fn: Optional[ErrorFn] = None
    regret_fn: Optional[RegretFn] = None


def _sample_rvs(rng: np.random.Generator, n: int, max_atoms: int = 6, span: float = 4.0):
    out = []
    for _ in range(n):
        k = int(rng.integers(2, max_atoms + 1))
        vals = rng.uniform(-span, span, size=k)
        probs = rng.dirichlet(np.ones(k))
        out.append(DiscreteRv(vals, probs))
    return out


def check_subregular_error(err: ErrorFn, rng: Optional[np.random.Generator] = None) -> None:
    """Sampled falsification of the error axioms; raises naming the clause."""
    rng = rng or np.random.default_rng(0)
    zero = DiscreteRv.constant(0.0)
    if abs(err.fn(zero)) > 1e-9:
        raise SubregularityError("zero-fidelity failed: error at the zero r.v. is nonzero")
    for x in _sample_rvs(rng, 12) + [DiscreteRv.constant(1.0), DiscreteRv.constant(-1.0)]:
        if err.fn(x) < -1e-9:
            raise SubregularityError("nonnegativity failed: negative error value")
    for x in _sample_rvs(rng, 6) + [DiscreteRv.constant(1.0), DiscreteRv.constant(-1.0)]:
        lam = 1.0
        hit = False
        for _ in range(40):
            if err.fn(x.scale(lam)) > 1e-12:
                hit = True
                break
            lam *= 2.0
        if not hit:
            raise SubregularityError("scale-positivity failed: error vanishes along a nonzero ray")


def check_monotone_error(err: ErrorFn, rng: Optional[np.random.Generator] = None, n: int = 200) -> bool:
    """Sampled test of E(X) <= |E[X]| for X <= 0 (monotonicity of the pair)."""
    rng = rng or np.random.default_rng(1)
    for _ in range(n):
        k = int(rng.integers(1, 7))
        vals = -rng.uniform(0.0, 5.0, size=k)
        probs = rng.dirichlet(np.ones(k))
        x = DiscreteRv(vals, probs)
        if err.fn(x) > abs(x.mean()) + 1e-9:
            return False
    return True


def quadrangle_from_error(
    err: ErrorFn,
    label: str = "",
    monotone: Optional[bool] = None,
    check: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Quadrangle:
    """The unique quadrangle generated by a subregular error measure."""
    if check:
        check_subregular_error(err, rng)
    if monotone is None:
        monotone = check_monotone_error(err, rng)
    v = mean_center_error(err)
    ph = err.flags.positively_homogeneous
    flags = QuadrangleFlags(
        positively_homogeneous=ph,
        monotone=monotone,
        expectation_type=err.flags.expectation_type,
        coherent=monotone and ph,
    )

    from functools import lru_cache

    @lru_cache(maxsize=256)
    def _proj(x: DiscreteRv):
        return project_error(err, x)

    return Quadrangle(
        risk=lambda x: x.mean() + _proj(x)[0],
        deviation=lambda x: _proj(x)[0],
        regret=v.fn,
        error=err.fn,
        statistic=lambda x: _proj(x)[1],
        flags=flags,
        label=label or err.label,
        error_fn=err,
        regret_fn=v,
    )


# -- mixing -------------------------------------------------------------------------


def _mixed_error_value(errors: Sequence[ErrorFn], weights: np.ndarray, x: DiscreteRv) -> float:
    """min { sum_k w_k E_k(X - C_k) : sum_k w_k C_k = 0 }."""
    r = len(errors)
    if r == 1:
        return errors[0].fn(x)
    all_pl = all(e.loss is not None and e.loss.piecewise_linear for e in errors)
    if all_pl:
        return _mixed_error_lp(errors, weights, x)
    if r == 2:
        w1, w2 = weights

        def g(c1):
            c2 = -w1 * c1 / w2
            return w1 * errors[0].fn(x.shift(-c1)) + w2 * errors[1].fn(x.shift(-c2))

        _, fstar = minimize_scalar_convex(g, tol=1e-11, hint=0.0)
        return fstar

    # general case: eliminate the last shift and run subgradient + polish
    def unpack(cs):
        c_last = -float(np.dot(weights[:-1], cs)) / weights[-1]
        return np.concatenate([cs, [c_last]])

    def obj(cs):
        full = unpack(cs)
        return float(sum(w * e.fn(x.shift(-c)) for w, e, c in zip(weights, errors, full)))

    def num_grad(cs):
        h = 1e-6
        g = np.zeros_like(cs)
        f0 = obj(cs)
        for i in range(cs.size):
            step = np.zeros_like(cs)
            step[i] = h
            g[i] = (obj(cs + step) - f0) / h
        return g

    res = minimize_subgradient(obj, num_grad, lambda z: z, np.zeros(r - 1), steps=3000, tol=1e-10)
    xs, fs = compass_search(obj, res.x, step=0.5, tol=1e-11)
    return min(fs, res.value)


def _mixed_error_lp(errors: Sequence[ErrorFn], weights: np.ndarray, x: DiscreteRv) -> float:
    """Exact LP for mixtures of expectation-type piecewise-linear errors."""
    r = len(errors)
    v, p = x.values, x.probs
    m = v.size
    # variables: C_1..C_r (free), then t_{k,i} (free, epigraph of the loss)
    n_var = r + r * m
    c_obj = np.zeros(n_var)
    rows_ub, rhs_ub = [], []
    for k, e in enumerate(errors):
        for i in range(m):
            tcol = r + k * m + i
            c_obj[tcol] = weights[k] * p[i]
            for s, b in e.loss.pieces:
                row = np.zeros(n_var)
                # t >= s*(v_i - C_k) + b  ->  -t - s*C_k <= -b - s*v_i
                row[tcol] = -1.0
                row[k] = -s
                rows_ub.append(row)
                rhs_ub.append(-(b + s * v[i]))
    a_eq = np.zeros((1, n_var))
    a_eq[0, :r] = weights
    sol = solve_lp(
        LpProblem(
            c=c_obj,
            a_eq=a_eq,
            b_eq=np.zeros(1),
            a_ub=np.asarray(rows_ub),
            b_ub=np.asarray(rhs_ub),
        )
    )
    if sol.status != "optimal":
        raise RuntimeError(f"mixed-error LP came back {sol.status}")
    return float(sol.objective)


def mix_quadrangles(quartets: Sequence[Quadrangle], weights) -> Quadrangle:
    """Weighted mixture: risk/deviation/statistic are weighted sums; regret and
    error are constrained minima over per-component shifts summing to zero."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {w.sum()}, not 1")
    if len(quartets) != w.size:
        raise ValueError("one weight per quadrangle required")
    qs = list(quartets)
    errors = [q.error_fn for q in qs]
    have_errors = all(e is not None for e in errors)

    def risk(x):
        return float(sum(wk * q.risk(x) for wk, q in zip(w, qs)))

    def deviation(x):
        return float(sum(wk * q.deviation(x) for wk, q in zip(w, qs)))

    def statistic(x):
        return StatInterval.weighted_sum([q.statistic(x) for q in qs], w)

    if have_errors:
        def error(x):
            return _mixed_error_value(errors, w, x)
    else:
        def error(x):
            raise NotImplementedError("component error functionals unavailable")

    def regret(x):
        return error(x) + x.mean()

    flags = QuadrangleFlags(
        positively_homogeneous=all(q.flags.positively_homogeneous for q in qs),
        monotone=all(q.flags.monotone for q in qs),
        expectation_type=False,
        coherent=all(q.flags.coherent for q in qs),
    )
    err_fn = ErrorFn(fn=error, flags=Flags(flags.positively_homogeneous, flags.monotone, False)) if have_errors else None
    return Quadrangle(
        risk=risk,
        deviation=deviation,
        regret=regret,
        error=error,
        statistic=statistic,
        flags=flags,
        label="mix(" + ",".join(q.label for q in qs) + ")",
        error_fn=err_fn,
        regret_fn=RegretFn(fn=regret) if have_errors else None,
    )


# -- scaling ------------------------------------------------------------------------


def scale_quadrangle(q: Quadrangle, lam: float, mode: str = "affine") -> Quadrangle:
    """Scale a quadrangle.

    affine: R = (1-l)E + l R0, D = l D0, V = (1-l)E + l V0, E = l E0, statistic
    unchanged (monotone only survives l <= 1).  perspective: F(X) = l F0(X/l)
    for all members, statistic scaled accordingly.
    """
    if lam <= 0:
        raise ValueError("scale factor must be positive")
    if mode == "affine":
        flags = QuadrangleFlags(
            positively_homogeneous=q.flags.positively_homogeneous,
            monotone=q.flags.monotone and lam <= 1.0,
            expectation_type=q.flags.expectation_type,
            coherent=q.flags.coherent and lam <= 1.0,
        )
        err_fn = None
        if q.error_fn is not None:
            base = q.error_fn
            err_fn = ErrorFn(
                fn=lambda x: lam * base.fn(x),
                flags=replace(base.flags, monotone=base.flags.monotone and lam <= 1.0),
                label=base.label,
                loss=None if base.loss is None else _scale_loss_affine(base.loss, lam),
                moment_max=None if base.moment_max is None else MomentMaxSpec(
                    tuple((lam * a, lam * b, lam * c) for a, b, c in base.moment_max.terms)
                ),
                shift_breakpoints=base.shift_breakpoints,
            )
        return Quadrangle(
            risk=lambda x: (1.0 - lam) * x.mean() + lam * q.risk(x),
            deviation=lambda x: lam * q.deviation(x),
            regret=lambda x: (1.0 - lam) * x.mean() + lam * q.regret(x),
            error=lambda x: lam * q.error(x),
            statistic=q.statistic,
            flags=flags,
            label=f"affine({lam})*{q.label}",
            error_fn=err_fn,
            regret_fn=None if err_fn is None else mean_center_error(err_fn),
        )
    if mode == "perspective":
        return Quadrangle(
            risk=lambda x: lam * q.risk(x.scale(1.0 / lam)),
            deviation=lambda x: lam * q.deviation(x.scale(1.0 / lam)),
            regret=lambda x: lam * q.regret(x.scale(1.0 / lam)),
            error=lambda x: lam * q.error(x.scale(1.0 / lam)),
            statistic=lambda x: q.statistic(x.scale(1.0 / lam)).scale(lam),
            flags=q.flags,
            label=f"perspective({lam})*{q.label}",
        )
    raise ValueError(f"unknown scaling mode {mode!r}")


def _scale_loss_affine(loss: ScalarLoss, lam: float) -> ScalarLoss:
    pieces = tuple((lam * s, lam * b) for s, b in loss.pieces) if loss.pieces else None
    return ScalarLoss(
        fn=lambda z: lam * loss.fn(z),
        d_left=lambda z: lam * loss.d_left(z),
        d_right=lambda z: lam * loss.d_right(z),
        kinks=loss.kinks,
        pieces=pieces,
        label=loss.label,
    )


# -- reverting ----------------------------------------------------------------------


def revert_quadrangles(q1: Quadrangle, q2: Quadrangle) -> Quadrangle:
    """Reverted quadrangle: S(X) = (S1(X) - S2(-X))/2 in interval arithmetic,
    D(X) = (D1(X) + D2(-X))/2, R = E + D, E(X) = min_C (E1(C+X)+E2(C-X))/2.
    Monotonicity is not preserved."""

    def deviation(x):
        return 0.5 * (q1.deviation(x) + q2.deviation(x.neg()))

    def statistic(x):
        s1 = q1.statistic(x)
        s2 = q2.statistic(x.neg())
        return StatInterval.weighted_sum([s1, s2.reflect()], [0.5, 0.5])

    def error(x):
        def g(c):
            return 0.5 * (q1.error(x.shift(c)) + q2.error(x.neg().shift(c)))

        bps = None
        if q1.error_fn is not None and q2.error_fn is not None:
            # kinks of c -> E1(x + c) sit at the negated shift breakpoints
            b1 = _shift_breakpoints(q1.error_fn, x)
            b2 = _shift_breakpoints(q2.error_fn, x.neg())
            if b1 is not None and b2 is not None:
                bps = np.unique(np.concatenate([-b1, -b2]))
        if bps is not None:
            interval = argmin_interval_pwl(g, bps)
            return g(interval.lo)
        _, fstar = minimize_scalar_convex(g, tol=1e-11, hint=0.0)
        return fstar

    flags = QuadrangleFlags(
        positively_homogeneous=q1.flags.positively_homogeneous and q2.flags.positively_homogeneous,
        monotone=False,
        expectation_type=False,
        coherent=False,
    )
    return Quadrangle(
        risk=lambda x: x.mean() + deviation(x),
        deviation=deviation,
        regret=lambda x: x.mean() + error(x),
        error=error,
        statistic=statistic,
        flags=flags,
        label=f"revert({q1.label},{q2.label})",
        error_fn=ErrorFn(fn=error, flags=Flags(flags.positively_homogeneous, False, False)),
    )


# -- expectation quadrangles -----------------------------------------------------------


def _validate_loss_block(loss: ScalarLoss) -> None:
    z0 = float(np.asarray(loss.fn(np.array([0.0])))[0])
    if abs(z0) > 1e-12:
        raise SubregularityError("loss property failed: e(0) != 0")
    grid = np.linspace(-20.0, 20.0, 401)
    vals = np.asarray(loss.fn(grid), dtype=float)
    finite = np.isfinite(vals)
    if np.any(vals[finite] < -1e-12):
        raise SubregularityError("loss property failed: e takes negative values")
    neg_side = vals[(grid < 0) & finite]
    pos_side = vals[(grid > 0) & finite]
    if not (np.any(neg_side > 1e-12) and np.any(pos_side > 1e-12)):
        raise SubregularityError("loss property failed: e vanishes on a whole half-line")
    g = grid[finite]
    v = vals[finite]
    mids = 0.5 * (v[:-2] + v[2:])
    if np.any(v[1:-1] > mids + 1e-7 * (1.0 + np.abs(mids))):
        raise SubregularityError("loss property failed: midpoint convexity violated")


def _loss_is_two_piece_through_zero(loss: ScalarLoss) -> bool:
    if loss.pieces is not None:
        active = [piece for piece in loss.pieces if abs(piece[1]) <= 1e-14]
        return len(active) == len(loss.pieces) and len(loss.pieces) <= 2
    # numeric homogeneity probe
    for z in (-2.3, -1.0, 0.7, 1.9):
        for lam in (0.5, 2.0, 7.0):
            a = float(loss.fn(np.array([lam * z]))[0])
            b = float(loss.fn(np.array([z]))[0])
            if not math.isfinite(a) or abs(a - lam * b) > 1e-9 * (1.0 + abs(a)):
                return False
    return True


def _loss_monotone_pair(loss: ScalarLoss) -> bool:
    zs = -np.geomspace(1e-3, 50.0, 60)
    vals = np.asarray(loss.fn(zs), dtype=float)
    return bool(np.all(vals <= np.abs(zs) + 1e-9))


def expectation_quadrangle(loss: ScalarLoss, label: str = "", check: bool = True) -> Quadrangle:
    """Quadrangle generated by E(X) = E[e(X)], V(X) = E[x + e(x)].

    The statistic solves the one-sided derivative criterion
    E[e'_-(X-C)] <= 0 <= E[e'_+(X-C)], scanned exactly on breakpoints for
    piecewise-linear losses.
    """
    if check:
        _validate_loss_block(loss)
    ph = _loss_is_two_piece_through_zero(loss)
    mono = _loss_monotone_pair(loss)
    err = error_from_loss(loss, Flags(ph, mono, True), label=label or loss.label)
    return quadrangle_from_error(err, label=label or loss.label, monotone=mono, check=False)


# -- seminorm errors from coherent risks -------------------------------------------------


def error_from_coherent_risk(risk: Callable[[DiscreteRv], float], flags: Flags, label: str = "") -> ErrorFn:
    """E(X) := R(|X|) for a monotone (generally coherent) subregular risk."""
    if not flags.monotone:
        raise ValueError("seminorm error construction requires a monotone risk")
    return ErrorFn(
        fn=lambda x: risk(x.abs()),
        flags=Flags(positively_homogeneous=flags.positively_homogeneous, monotone=False, expectation_type=False),
        label=label,
    )
