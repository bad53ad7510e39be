"""Conjugate duality on the atom space: numerical Fenchel conjugates, risk
envelopes for positively homogeneous functionals, and the dual axiom checks.

Densities Q live on the same probability grid as the random variables, paired
through <X, Q> = E[XQ] = sum_i p_i x_i q_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DiscreteRv, StatInterval
from .solvers import LpProblem, compass_search, minimize_subgradient, solve_lp

__all__ = [
    "Envelope",
    "cvar_envelope",
    "mean_envelope",
    "mean_abs_risk_envelope",
    "expectile_envelope",
    "stddev_deviation_envelope",
    "envelope_sup",
    "conjugate_eval",
    "envelope_extract",
    "dual_axiom_check",
    "DualReport",
]


@dataclass(frozen=True)
class Envelope:
    """Dual set of density vectors Q, polyhedral or membership-oracle.

    Polyhedral data is expressed directly on the q coordinates (probability
    weights are baked into the rows).  ``support`` optionally overrides the
    support-function computation with a closed form.
    """

    kind: str  # "risk" | "regret" | "deviation" | "error"
    probs: np.ndarray
    label: str = ""
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    member: Optional[Callable[[np.ndarray], bool]] = None
    support: Optional[Callable[[np.ndarray], float]] = None
    sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None

    @property
    def center(self) -> np.ndarray:
        m = self.probs.size
        return np.ones(m) if self.kind in ("risk", "regret") else np.zeros(m)

    @property
    def polyhedral(self) -> bool:
        return self.member is None

    def contains(self, q: np.ndarray, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float)
        if self.member is not None:
            return bool(self.member(q))
        ok = True
        if self.a_eq is not None:
            ok &= bool(np.all(np.abs(self.a_eq @ q - self.b_eq) <= tol))
        if self.a_ub is not None:
            ok &= bool(np.all(self.a_ub @ q <= self.b_ub + tol))
        if self.lb is not None:
            ok &= bool(np.all(q >= self.lb - tol))
        if self.ub is not None:
            ok &= bool(np.all(q <= self.ub + tol))
        return ok


def cvar_envelope(alpha: float, probs) -> Envelope:
    """{Q : 0 <= Q <= 1/(1-alpha), E[Q] = 1}."""
    p = np.asarray(probs, dtype=float)
    m = p.size
    return Envelope(
        kind="risk",
        probs=p,
        label=f"cvar({alpha:g})",
        a_eq=p.reshape(1, -1),
        b_eq=np.ones(1),
        lb=np.zeros(m),
        ub=np.full(m, 1.0 / (1.0 - alpha)),
    )


def mean_envelope(probs) -> Envelope:
    """The singleton {1}."""
    p = np.asarray(probs, dtype=float)
    m = p.size
    eye = np.eye(m)
    return Envelope(
        kind="risk",
        probs=p,
        label="mean",
        a_eq=eye,
        b_eq=np.ones(m),
    )


def mean_abs_risk_envelope(probs) -> Envelope:
    """{Q : E[Q] = 1, Q_i - Q_j <= 1}, the dual set of E[X - EX]_+ + E[X]."""
    p = np.asarray(probs, dtype=float)
    m = p.size
    rows = []
    for i in range(m):
        for j in range(m):
            if i != j:
                r = np.zeros(m)
                r[i], r[j] = 1.0, -1.0
                rows.append(r)
    return Envelope(
        kind="risk",
        probs=p,
        label="mean_abs",
        a_eq=p.reshape(1, -1),
        b_eq=np.ones(1),
        a_ub=np.asarray(rows),
        b_ub=np.ones(len(rows)),
        lb=np.zeros(m),
    )


def expectile_envelope(q_level: float, probs) -> Envelope:
    """{Q >= 0 : E[Q] = 1, (1-q) Q_i <= q Q_j}, coherent for q > 1/2."""
    if not 0.5 < q_level < 1.0:
        raise ValueError("expectile envelope requires q in (1/2, 1)")
    p = np.asarray(probs, dtype=float)
    m = p.size
    rows = []
    for i in range(m):
        for j in range(m):
            if i != j:
                r = np.zeros(m)
                r[i] = 1.0 - q_level
                r[j] = -q_level
                rows.append(r)
    return Envelope(
        kind="risk",
        probs=p,
        label=f"expectile({q_level:g})",
        a_eq=p.reshape(1, -1),
        b_eq=np.ones(1),
        a_ub=np.asarray(rows),
        b_ub=np.zeros(len(rows)),
        lb=np.zeros(m),
    )


def stddev_deviation_envelope(lam: float, probs) -> Envelope:
    """{Q : E[Q] = 0, ||Q||_2 <= lam}, the dual set of lam * sigma(X)."""
    p = np.asarray(probs, dtype=float)

    def member(q):
        q = np.asarray(q, dtype=float)
        if abs(float(np.dot(p, q))) > 1e-9:
            return False
        return float(np.dot(p, q * q)) <= lam * lam + 1e-9

    def support(values):
        x = DiscreteRv(values, p)
        return lam * x.std()

    def sampler(rng):
        z = rng.normal(size=p.size)
        z = z - float(np.dot(p, z))
        norm = math.sqrt(float(np.dot(p, z * z))) or 1.0
        return z * (lam * rng.uniform(0.0, 1.0) / norm)

    return Envelope(kind="deviation", probs=p, label=f"stddev({lam:g})", member=member, support=support, sampler=sampler)


def envelope_sup(env: Envelope, values) -> tuple[float, Optional[np.ndarray]]:
    """sup_{Q in env} E[XQ] with a maximizer when available."""
    x = np.asarray(values, dtype=float)
    if env.support is not None:
        return env.support(x), None
    if env.polyhedral:
        c = -(env.probs * x)
        m = x.size
        bounds = []
        for i in range(m):
            lo = env.lb[i] if env.lb is not None else None
            hi = env.ub[i] if env.ub is not None else None
            bounds.append((lo, hi))
        sol = solve_lp(LpProblem(c=c, a_eq=env.a_eq, b_eq=env.b_eq, a_ub=env.a_ub, b_ub=env.b_ub, bounds=bounds))
        if sol.status != "optimal":
            raise RuntimeError(f"envelope support LP {sol.status}")
        return -sol.objective, sol.x
    # membership-oracle ascent with pullback toward the center
    p = env.probs
    center = env.center.astype(float)
    q = center.copy()
    best_q, best = q.copy(), float(np.dot(p, q * x))
    grad = p * x
    gn = float(np.linalg.norm(grad)) or 1.0
    for k in range(1, 3001):
        cand = q + (1.0 / math.sqrt(k)) * grad / gn
        if not env.contains(cand):
            lo_t, hi_t = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo_t + hi_t)
                if env.contains(center + mid * (cand - center)):
                    lo_t = mid
                else:
                    hi_t = mid
            cand = center + lo_t * (cand - center)
        q = cand
        val = float(np.dot(p, q * x))
        if val > best + 1e-15:
            best, best_q = val, q.copy()
    return best, best_q


def conjugate_eval(
    f: Callable[[DiscreteRv], float],
    q,
    probs,
    box: float = 50.0,
    steps: int = 3000,
    starts: int = 3,
    seed: int = 0,
) -> float:
    """sup_X (E[XQ] - f(X)) over value vectors in [-box, box]^m.

    Concave maximization by projected subgradient ascent with a compass
    polish; growth at the box edge under box inflation reports +inf.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(probs, dtype=float)
    rng = np.random.default_rng(seed)

    def value(vals, b=box):
        return float(np.dot(p, q * vals)) - f(DiscreteRv(vals, p))

    # recession probe: growth along constant and coordinate rays means +inf
    m = q.size
    rays = [np.ones(m), -np.ones(m)]
    rays += [r for i in range(m) for r in (_ray(m, i), -_ray(m, i))]
    for d in rays:
        near, far = value(0.5 * box * d), value(box * d)
        if math.isfinite(near) and far > near + 1e-7 * (1.0 + abs(near)) and far > value(0.25 * box * d) + 1e-7:
            return math.inf

    def solve_in(b):
        def neg(vals):
            return -value(vals)

        def grad(vals):
            h = 1e-6 * (1.0 + np.abs(vals))
            g = np.zeros_like(vals)
            f0 = neg(vals)
            for i in range(vals.size):
                step = np.zeros_like(vals)
                step[i] = h[i]
                g[i] = (neg(vals + step) - f0) / h[i]
            return g

        def project(vals):
            return np.clip(vals, -b, b)

        best_v, best = None, math.inf
        for s in range(starts):
            x0 = np.zeros(q.size) if s == 0 else rng.uniform(-b / 4, b / 4, q.size)
            res = minimize_subgradient(neg, grad, project, x0, steps=steps, tol=1e-12)
            xs, fs = compass_search(neg, res.x, step=b / 8.0, project=project, tol=1e-11, diagonals=True)
            if fs < best:
                best, best_v = fs, xs
        return -best, best_v

    val1, arg1 = solve_in(box)
    if float(np.max(np.abs(arg1))) >= box * (1.0 - 1e-6):
        val2, arg2 = solve_in(4.0 * box)
        if val2 > val1 + 1e-6 * (1.0 + abs(val1)):
            return math.inf
        return val2
    return val1


def _ray(m: int, i: int) -> np.ndarray:
    e = np.zeros(m)
    e[i] = 1.0
    return e


def envelope_extract(
    f: Callable[[DiscreteRv], float],
    probs,
    kind: str = "risk",
    label: str = "",
    known: Optional[Envelope] = None,
    rng: Optional[np.random.Generator] = None,
) -> Envelope:
    """Envelope of a positively homogeneous closed convex functional.

    Known catalog envelopes pass through; otherwise a membership oracle is
    built from the conjugate (inside iff conjugate value <= 1e-8).  Sampled
    positive homogeneity is a precondition.
    """
    p = np.asarray(probs, dtype=float)
    rng = rng or np.random.default_rng(0)
    for _ in range(6):
        vals = rng.uniform(-2.0, 2.0, p.size)
        x = DiscreteRv(vals, p)
        base = f(x)
        for lam in (0.5, 2.0, 7.0):
            scaled = f(x.scale(lam))
            if abs(scaled - lam * base) > 1e-7 * (1.0 + abs(scaled)):
                raise ValueError("functional is not positively homogeneous on samples")
    if known is not None:
        return known

    def member(q):
        return conjugate_eval(f, q, p, box=20.0, steps=1200, starts=2) <= 1e-8

    return Envelope(kind=kind, probs=p, label=label or "oracle", member=member)


@dataclass
class DualReport:
    clauses: dict[str, bool]
    details: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())


def _sample_envelope_points(env: Envelope, rng: np.random.Generator, n: int) -> list[np.ndarray]:
    pts = []
    if env.sampler is not None:
        for _ in range(n):
            pts.append(env.sampler(rng))
        return pts
    if env.polyhedral:
        m = env.probs.size
        for _ in range(n):
            direction = rng.normal(size=m)
            _, q = envelope_sup_direction(env, direction)
            if q is not None:
                pts.append(q)
    return pts


def envelope_sup_direction(env: Envelope, direction) -> tuple[float, Optional[np.ndarray]]:
    """Maximize an arbitrary linear objective (not probability weighted)."""
    d = np.asarray(direction, dtype=float)
    if not env.polyhedral:
        raise ValueError("direction maximization needs a polyhedral envelope")
    m = d.size
    bounds = []
    for i in range(m):
        lo = env.lb[i] if env.lb is not None else None
        hi = env.ub[i] if env.ub is not None else None
        bounds.append((lo, hi))
    sol = solve_lp(LpProblem(c=-d, a_eq=env.a_eq, b_eq=env.b_eq, a_ub=env.a_ub, b_ub=env.b_ub, bounds=bounds))
    if sol.status != "optimal":
        return math.nan, None
    return -sol.objective, sol.x


def dual_axiom_check(
    env: Envelope,
    kind: Optional[str] = None,
    rng: Optional[np.random.Generator] = None,
    n_samples: int = 20,
    margin: float = 1e-9,
) -> DualReport:
    """Check the conjugate characterization clauses for the envelope's kind.

    Kinds: error/deviation center at 0, regret/risk at 1; deviation/risk
    envelopes live on the hyperplane E[Q] = 0 / 1; the separation clause asks
    for a witness density beating the threshold for sampled nonzero
    (nonconstant) X.
    """
    kind = kind or env.kind
    rng = rng or np.random.default_rng(0)
    p = env.probs
    m = p.size
    clauses: dict[str, bool] = {}
    details: dict[str, str] = {}

    center = np.ones(m) if kind in ("risk", "regret") else np.zeros(m)
    clauses["center_membership"] = env.contains(center)

    if kind in ("risk", "deviation"):
        target = 1.0 if kind == "risk" else 0.0
        ok = True
        worst = 0.0
        for q in _sample_envelope_points(env, rng, n_samples):
            gap = abs(float(np.dot(p, q)) - target)
            worst = max(worst, gap)
            ok &= gap <= 1e-9
        clauses["hyperplane"] = ok
        details["hyperplane"] = f"max |E[Q] - {target}| = {worst:.2e}"

    ok = True
    worst = math.inf
    for _ in range(n_samples):
        vals = rng.uniform(-3.0, 3.0, m)
        if kind in ("risk", "deviation"):
            if np.allclose(vals, vals[0]):
                continue  # separation is only claimed for nonconstant X
        else:
            if np.allclose(vals, 0.0):
                continue
        sup, _ = envelope_sup(env, vals)
        threshold = float(np.dot(p, vals)) if kind in ("risk", "regret") else 0.0
        gap = sup - threshold
        worst = min(worst, gap)
        ok &= gap > margin
    clauses["separation"] = ok
    details["separation"] = f"min margin = {worst:.2e}"
    return DualReport(clauses, details)
