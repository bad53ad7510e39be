"""Generalized linear regression: minimizing quadrangle errors of residuals.

Expectation-type piecewise-linear errors and moment-max errors go through an
exact LP; smooth errors run a multi-start subgradient descent with a compass
polish.  The fitted residual statistic certifies the tracking property
0 in S(residual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import DiscreteRv, StatInterval, cvar_direct
from .constructions import ErrorFn, Quadrangle, project_error
from .measures import koenker_bassett_loss, vapnik_loss, asymmetric_mse_loss, make_catalog_quadrangle, CatalogSpec
from .solvers import LpProblem, compass_search, minimize_subgradient, solve_lp

__all__ = [
    "Dataset",
    "FitResult",
    "fit_linear",
    "regression_equivalence_check",
    "track_statistic",
    "fit_named",
    "nu_svc",
    "NAMED_MODELS",
]

NAMED_MODELS = ("quantile", "expectile_pl", "expectile_mse", "svr", "mean_pl", "biased_mean")


@dataclass(frozen=True)
class Dataset:
    """Observations (rows) of regressors plus a target, with atom weights."""

    features: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def __init__(self, features, target, weights=None):
        f = np.atleast_2d(np.asarray(features, dtype=float))
        t = np.asarray(target, dtype=float).ravel()
        if f.shape[0] != t.size:
            f = f.T
        if f.shape[0] != t.size:
            raise ValueError("row counts of features and target disagree")
        if weights is None:
            w = np.full(t.size, 1.0 / t.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.size != t.size:
                raise ValueError("weights length mismatch")
            if np.any(w < 0):
                raise ValueError("negative weight")
            s = float(w.sum())
            if abs(s - 1.0) > 1e-9:
                raise ValueError(f"weights sum to {s}, not 1")
            w = w / s
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "weights", w)

    @property
    def n_obs(self) -> int:
        return self.target.size

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass
class FitResult:
    intercept: float
    coefficients: np.ndarray
    objective: float
    residual_rv: DiscreteRv
    statistic_of_residual: StatInterval
    nonunique: bool = False

    def predict(self, features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        return self.intercept + f @ self.coefficients


def _residual_rv(data: Dataset, intercept: float, coefs: np.ndarray) -> DiscreteRv:
    z = data.target - intercept - data.features @ coefs
    return DiscreteRv(z, data.weights)


def _fit_lp_pieces(err: ErrorFn, data: Dataset) -> tuple[np.ndarray, float, bool]:
    """LP for expectation-type piecewise-linear losses: epigraph per residual."""
    pieces = err.loss.pieces
    n, d = data.n_obs, data.n_features
    nv = 1 + d + n  # intercept, coefficients, epigraph vars
    c = np.zeros(nv)
    c[1 + d :] = data.weights
    rows, rhs = [], []
    for i in range(n):
        xi = data.features[i]
        for s, b in pieces:
            # t_i >= s * (y_i - c0 - xi.c) + b
            row = np.zeros(nv)
            row[0] = -s
            row[1 : 1 + d] = -s * xi
            row[1 + d + i] = -1.0
            rows.append(row)
            rhs.append(-(b + s * data.target[i]))
    sol = solve_lp(LpProblem(c=c, a_ub=np.asarray(rows), b_ub=np.asarray(rhs)))
    if sol.status != "optimal":
        raise RuntimeError(f"regression LP {sol.status}")
    beta = sol.x[: 1 + d]
    nonunique = any(j <= d for j in sol.degenerate_columns)
    return beta, float(sol.objective), nonunique


def _fit_lp_moment_max(err: ErrorFn, data: Dataset) -> tuple[np.ndarray, float, bool]:
    """LP for max-of-moments errors: u_i models (residual)_+, m the max."""
    terms = err.moment_max.terms
    n, d = data.n_obs, data.n_features
    nv = 1 + d + n + 1  # intercept, coefs, u_i, m
    c = np.zeros(nv)
    c[-1] = 1.0
    w = data.weights
    ybar = float(np.dot(w, data.target))
    xbar = w @ data.features
    rows, rhs = [], []
    for i in range(n):
        # u_i >= y_i - c0 - x_i.c   ->   -u_i - c0 - x_i.c <= -y_i
        row = np.zeros(nv)
        row[0] = -1.0
        row[1 : 1 + d] = -data.features[i]
        row[1 + d + i] = -1.0
        rows.append(row)
        rhs.append(-data.target[i])
    for a, b, cc in terms:
        # m >= a * E[Z] + b * E[U] + cc, with E[Z] = ybar - c0 - xbar.c
        row = np.zeros(nv)
        row[0] = -a
        row[1 : 1 + d] = -a * xbar
        row[1 + d : 1 + d + n] = b * w
        row[-1] = -1.0
        rows.append(row)
        rhs.append(-a * ybar - cc)
    bounds = [(None, None)] * (1 + d) + [(0.0, None)] * n + [(None, None)]
    sol = solve_lp(LpProblem(c=c, a_ub=np.asarray(rows), b_ub=np.asarray(rhs), bounds=bounds))
    if sol.status != "optimal":
        raise RuntimeError(f"regression LP {sol.status}")
    beta = sol.x[: 1 + d]
    nonunique = any(j <= d for j in sol.degenerate_columns)
    return beta, float(sol.objective), nonunique


def _fit_numeric(err: ErrorFn, data: Dataset, seed: int, steps: int) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed)
    n, d = data.n_obs, data.n_features

    def obj(beta):
        return err.fn(_residual_rv(data, beta[0], beta[1:]))

    def grad(beta):
        h = 1e-6
        g = np.zeros_like(beta)
        f0 = obj(beta)
        for i in range(beta.size):
            step = np.zeros_like(beta)
            step[i] = h
            g[i] = (obj(beta + step) - f0) / h
        return g

    # least-squares start plus perturbations
    design = np.hstack([np.ones((n, 1)), data.features])
    ls, *_ = np.linalg.lstsq(design, data.target, rcond=None)
    best_beta, best = None, math.inf
    for s in range(5):
        if s == 0:
            b0 = ls.copy()
        elif s == 1:
            b0 = np.zeros(1 + d)
        else:
            b0 = ls + rng.normal(scale=0.5, size=1 + d)
        res = minimize_subgradient(obj, grad, lambda z: z, b0, steps=steps, tol=1e-12)
        bs, fs = compass_search(obj, res.x, step=0.5, tol=1e-12)
        if fs < best:
            best, best_beta = fs, bs
    return best_beta, best


def fit_linear(
    err: ErrorFn,
    data: Dataset,
    seed: int = 0,
    steps: int = 4000,
) -> FitResult:
    """Minimize err(Y - c0 - X.c) over intercept and coefficients."""
    nonunique = False
    if err.loss is not None and err.loss.piecewise_linear:
        beta, objective, nonunique = _fit_lp_pieces(err, data)
    elif err.moment_max is not None:
        beta, objective, nonunique = _fit_lp_moment_max(err, data)
    else:
        beta, objective = _fit_numeric(err, data, seed, steps)
    resid = _residual_rv(data, beta[0], beta[1:])
    _, stat = project_error(err, resid)
    return FitResult(
        intercept=float(beta[0]),
        coefficients=np.asarray(beta[1:], dtype=float),
        objective=float(objective),
        residual_rv=resid,
        statistic_of_residual=stat,
        nonunique=nonunique,
    )


def regression_equivalence_check(err: ErrorFn, data: Dataset, seed: int = 0) -> dict:
    """Compare unconstrained error minimization with the constrained
    deviation form (deviation minimized over slopes, intercept shifted so
    zero enters the residual statistic)."""
    fit = fit_linear(err, data, seed=seed)

    d = data.n_features

    def dev_obj(coefs):
        z = data.target - data.features @ coefs
        return project_error(err, DiscreteRv(z, data.weights))[0]

    def grad(coefs):
        h = 1e-6
        g = np.zeros_like(coefs)
        f0 = dev_obj(coefs)
        for i in range(coefs.size):
            step = np.zeros_like(coefs)
            step[i] = h
            g[i] = (dev_obj(coefs + step) - f0) / h
        return g

    start = fit.coefficients.copy()
    res = minimize_subgradient(dev_obj, grad, lambda z: z, start, steps=1500, tol=1e-12)
    coefs, dval = compass_search(dev_obj, res.x, step=0.25, tol=1e-12)
    z = data.target - data.features @ coefs
    resid0 = DiscreteRv(z, data.weights)
    _, stat = project_error(err, resid0)
    intercept = stat.midpoint
    shifted = resid0.shift(-intercept)
    constrained_error = err.fn(shifted)
    _, shifted_stat = project_error(err, shifted)
    return {
        "unconstrained_objective": fit.objective,
        "constrained_objective": constrained_error,
        "deviation_value": dval,
        "tracking": shifted_stat.contains(0.0, tol=1e-7),
        "gap": abs(fit.objective - constrained_error),
    }


def track_statistic(fit: FitResult, quartet: Quadrangle, tol: float = 1e-7) -> bool:
    """Whether zero lies in the quadrangle statistic of the fitted residual."""
    return quartet.statistic(fit.residual_rv).contains(0.0, tol=tol)


def fit_named(model: str, data: Dataset, seed: int = 0, **params) -> FitResult:
    """Named estimators dispatching to the catalog errors.

    quantile(alpha), expectile_pl(K), expectile_mse(q), svr(eps), mean_pl,
    biased_mean(x).
    """
    if model == "quantile":
        q = make_catalog_quadrangle(CatalogSpec("quantile", {"alpha": params["alpha"]}))
    elif model == "expectile_pl":
        q = make_catalog_quadrangle(CatalogSpec("expectile_pl", {"K": params["K"]}))
    elif model == "expectile_mse":
        q = make_catalog_quadrangle(CatalogSpec("expectile_mse", {"q": params["q"]}))
    elif model == "svr":
        q = make_catalog_quadrangle(CatalogSpec("qsau", {"eps": params["eps"]}))
    elif model == "mean_pl":
        q = make_catalog_quadrangle(CatalogSpec("mean_pl", {}))
    elif model == "biased_mean":
        q = make_catalog_quadrangle(CatalogSpec("biased_mean", {"x": params["x"]}))
    else:
        raise ValueError(f"unknown model {model!r}; choose from {NAMED_MODELS}")
    return fit_linear(q.error_fn, data, seed=seed)


def nu_svc(alpha: float, data: Dataset, seed: int = 0, steps: int = 6000) -> tuple[np.ndarray, float, float]:
    """Soft-margin classification: minimize the alpha-tail average of the
    margin loss -y (w.x + w0) over the unit ball in w.

    Returns (direction, intercept, objective), the objective being the exact
    tail average at the returned decision.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    y = data.target
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("targets must be -1/+1")
    f = data.features
    w = data.weights
    d = data.n_features
    rng = np.random.default_rng(seed)
    inv = 1.0 / (1.0 - alpha)

    def losses(theta):
        wb, w0 = theta[:d], theta[d]
        return -y * (f @ wb + w0)

    def obj(theta):
        c = theta[d + 1]
        ell = losses(theta)
        return c + inv * float(np.dot(w, np.maximum(ell - c, 0.0)))

    def grad(theta):
        c = theta[d + 1]
        ell = losses(theta)
        active = (ell - c) > 0
        g = np.zeros_like(theta)
        aw = w * active
        # d ell_i / d wb = -y_i x_i ; d ell_i / d w0 = -y_i
        g[:d] = inv * ((-y * aw) @ f)
        g[d] = inv * float(np.dot(aw, -y))
        g[d + 1] = 1.0 - inv * float(aw.sum())
        return g

    def project(theta):
        nb = float(np.linalg.norm(theta[:d]))
        if nb > 1.0:
            theta = theta.copy()
            theta[:d] /= nb
        return theta

    best_theta, best = None, math.inf
    for s in range(3):
        t0 = np.zeros(d + 2) if s == 0 else np.concatenate([rng.normal(size=d) * 0.5, [0.0, 0.0]])
        res = minimize_subgradient(obj, grad, project, t0, steps=steps, tol=1e-12)
        ts, fs = compass_search(obj, res.x, step=0.25, project=project, tol=1e-12)
        if fs < best:
            best, best_theta = fs, ts
    wb, w0 = best_theta[:d], float(best_theta[d])
    margin_rv = DiscreteRv(-y * (f @ wb + w0), w)
    objective = cvar_direct(margin_rv, alpha)
    return wb, w0, objective
