"""Command-line front end: catalog evaluation, envelopes, divergence family
sweeps, regression, portfolio selection, DRO, epi-regularization, and the
invariant checker.

Reports print numbers at 12 significant digits; JSON output is stable-keyed
and round-trips bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DiscreteRv, InvalidDistribution, ess_bounds, expectation
from .checks import run_quadrangle_checks
from .constructions import Quadrangle
from .divergence import (
    PHI_REGISTRY,
    StochasticDivergenceJ,
    family_eval_envelope,
    make_divergence,
    make_divergence_quadrangle,
)
from .dual import cvar_envelope, dual_axiom_check, envelope_sup, expectile_envelope, mean_abs_risk_envelope, mean_envelope
from .measures import CATALOG_FAMILIES, CatalogSpec, make_catalog_quadrangle
from .regression import Dataset, NAMED_MODELS, fit_named, track_statistic
from .robust import DroProblem, EpiSpec, dro_solve, epi_risk_dual, epi_risk_primal, kernel_quadratic_regret, portfolio_optimize

__all__ = ["main", "run_command", "RunConfig", "ingest_rv_csv", "fmt12"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2


def fmt12(v: float) -> float:
    """Round-trip a float through 12 significant digits."""
    return float(f"{v:.12g}")


@dataclass
class RunConfig:
    command: str
    input_path: Optional[str] = None
    spec: Optional[dict] = None
    params: dict = field(default_factory=dict)
    tol: float = 1e-9
    max_iter: int = 4000
    seed: int = 0
    output_format: str = "table"
    output_path: Optional[str] = None
    taus: Optional[list[float]] = None
    epsilons: Optional[list[float]] = None
    model: Optional[str] = None
    target: Optional[str] = None
    target_mean: Optional[float] = None


def ingest_rv_csv(path: str) -> DiscreteRv:
    """Read atoms from a CSV with header value,prob (or a single value column)."""
    values: list[float] = []
    probs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InvalidDistribution(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    has_header = "value" in header
    body = rows[1:] if has_header else rows
    if has_header and "prob" in header:
        vi, pi = header.index("value"), header.index("prob")
        cols = 2
    else:
        vi, pi, cols = 0, None, 1
    if not body:
        raise InvalidDistribution(f"{path}: no data rows")
    for lineno, row in enumerate(body, start=2 if has_header else 1):
        try:
            values.append(float(row[vi]))
        except (ValueError, IndexError) as exc:
            raise InvalidDistribution(f"{path}:{lineno}: bad value cell {row!r}") from exc
        if pi is not None:
            try:
                p = float(row[pi])
            except (ValueError, IndexError) as exc:
                raise InvalidDistribution(f"{path}:{lineno}: bad prob cell {row!r}") from exc
            if p < 0:
                raise InvalidDistribution(f"{path}:{lineno}: negative prob {p}")
            probs.append(p)
    if pi is None:
        rv = DiscreteRv(values)
        delta = 0.0
    else:
        total = sum(probs)
        delta = abs(total - 1.0)
        if delta > 1e-4:
            raise InvalidDistribution(f"{path}: probs sum to {total!r}")
        # CSV rounding tolerance is looser than the constructor's; rescale here
        rv = DiscreteRv(values, [p / total for p in probs])
    print(f"# read {len(values)} rows from {path} (normalization delta {delta:.3e})", file=sys.stderr)
    return rv


def ingest_dataset_csv(path: str, target: Optional[str] = None) -> Dataset:
    """CSV with a header row; the target column defaults to the last one."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one data row")
    header = [c.strip() for c in rows[0]]
    tcol = header.index(target) if target else len(header) - 1
    wcol = header.index("weight") if "weight" in header else None
    feats, ys, ws = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric cell") from exc
        ys.append(vals[tcol])
        if wcol is not None:
            ws.append(vals[wcol])
        feats.append([v for i, v in enumerate(vals) if i not in (tcol, wcol)])
    return Dataset(np.asarray(feats), np.asarray(ys), np.asarray(ws) if ws else None)


def ingest_scenarios_csv(path: str) -> tuple[np.ndarray, Optional[np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    header = [c.strip().lower() for c in rows[0]]
    try:
        float(rows[0][0])
        body, pcol = rows, None
    except ValueError:
        body = rows[1:]
        pcol = header.index("prob") if "prob" in header else None
    mat = np.asarray([[float(c) for c in r] for r in body])
    if pcol is None:
        return mat, None
    probs = mat[:, pcol]
    keep = [i for i in range(mat.shape[1]) if i != pcol]
    return mat[:, keep], probs


def build_quadrangle(spec: dict) -> Quadrangle:
    """From a JSON spec {family|phi, params {...}}."""
    if "family" in spec:
        return make_catalog_quadrangle(CatalogSpec(spec["family"], dict(spec.get("params", {}))))
    if "phi" in spec:
        params = dict(spec.get("params", {}))
        beta = params.pop("beta")
        div = make_divergence(spec["phi"], **params)
        return make_divergence_quadrangle(div, beta)
    raise ValueError("spec must carry 'family' or 'phi'")


def _emit(cfg: RunConfig, payload: dict) -> None:
    if cfg.output_format == "json":
        text = json.dumps(payload, sort_keys=True, indent=2)
    else:
        lines = []
        for key, val in payload.items():
            if isinstance(val, dict):
                lines.append(f"{key}:")
                for k2, v2 in val.items():
                    lines.append(f"  {k2:28s} {v2}")
            elif isinstance(val, list):
                lines.append(f"{key}:")
                for item in val:
                    lines.append(f"  {item}")
            else:
                lines.append(f"{key:30s} {val}")
        text = "\n".join(lines)
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _interval_payload(s) -> list[float]:
    return [fmt12(s.lo), fmt12(s.hi)]


def run_command(cfg: RunConfig) -> int:
    """Dispatch a command; returns the process exit code."""
    try:
        return _dispatch(cfg)
    except (InvalidDistribution, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _dispatch(cfg: RunConfig) -> int:
    if cfg.command == "eval":
        q = build_quadrangle(cfg.spec)
        x = ingest_rv_csv(cfg.input_path)
        s = q.statistic(x)
        _emit(cfg, {
            "label": q.label,
            "risk": fmt12(q.risk(x)),
            "deviation": fmt12(q.deviation(x)),
            "regret": fmt12(q.regret(x)),
            "error": fmt12(q.error(x)),
            "statistic": _interval_payload(s),
            "tolerance": cfg.tol,
        })
        return EXIT_OK

    if cfg.command == "statistic":
        q = build_quadrangle(cfg.spec)
        x = ingest_rv_csv(cfg.input_path)
        _emit(cfg, {"label": q.label, "statistic": _interval_payload(q.statistic(x))})
        return EXIT_OK

    if cfg.command == "envelope":
        x = ingest_rv_csv(cfg.input_path)
        spec = cfg.spec or {}
        fam = spec.get("family")
        params = spec.get("params", {})
        p = x.probs
        if fam == "quantile":
            env = cvar_envelope(params["alpha"], p)
            q = make_catalog_quadrangle(CatalogSpec("quantile", {"alpha": params["alpha"]}))
        elif fam == "mean_pl":
            env = mean_abs_risk_envelope(p)
            q = make_catalog_quadrangle(CatalogSpec("mean_pl", {}))
        elif fam == "expectile_pl":
            k = params["K"]
            q_level = (1.0 + k) / (1.0 + 2.0 * k)
            env = expectile_envelope(q_level, p)
            q = make_catalog_quadrangle(CatalogSpec("expectile_pl", {"K": k}))
        else:
            raise ValueError("envelope report supports families quantile, mean_pl, expectile_pl")
        rng = np.random.default_rng(cfg.seed)
        rep = dual_axiom_check(env, rng=rng)
        sup, _ = envelope_sup(env, x.values)
        _emit(cfg, {
            "label": env.label,
            "support_value": fmt12(sup),
            "primal_risk": fmt12(q.risk(x)),
            "support_gap": fmt12(abs(sup - q.risk(x))),
            "axioms": {k: ("pass" if v else "FAIL") for k, v in rep.clauses.items()},
            "details": rep.details,
        })
        return EXIT_OK

    if cfg.command == "family":
        x = ingest_rv_csv(cfg.input_path)
        spec = cfg.spec or {}
        phi_name = spec.get("phi", "kl")
        params = {k: v for k, v in spec.get("params", {}).items() if k != "beta"}
        div = make_divergence(phi_name, **params)
        j = StochasticDivergenceJ.from_phi(div, normalized=True)
        taus = cfg.taus or list(np.geomspace(1e-6, 1e6, 13))
        rows = []
        for tau in taus:
            val, _ = family_eval_envelope(j, tau, x)
            rows.append({"tau": fmt12(tau), "value": fmt12(val)})
        _emit(cfg, {
            "phi": phi_name,
            "mean": fmt12(expectation(x)),
            "ess_sup": fmt12(ess_bounds(x)[1]),
            "sweep": [f"tau={r['tau']:<16g} value={r['value']:.12g}" for r in rows]
            if cfg.output_format == "table"
            else rows,
        })
        return EXIT_OK

    if cfg.command == "regress":
        data = ingest_dataset_csv(cfg.input_path, cfg.target)
        model = cfg.model or "quantile"
        fit = fit_named(model, data, seed=cfg.seed, **cfg.params)
        spec_map = {
            "quantile": ("quantile", lambda p: {"alpha": p["alpha"]}),
            "expectile_pl": ("expectile_pl", lambda p: {"K": p["K"]}),
            "expectile_mse": ("expectile_mse", lambda p: {"q": p["q"]}),
            "svr": ("qsau", lambda p: {"eps": p["eps"]}),
            "mean_pl": ("mean_pl", lambda p: {}),
            "biased_mean": ("biased_mean", lambda p: {"x": p["x"]}),
        }
        fam, map_params = spec_map[model]
        quartet = make_catalog_quadrangle(CatalogSpec(fam, map_params(cfg.params)))
        _emit(cfg, {
            "model": model,
            "intercept": fmt12(fit.intercept),
            "coefficients": [fmt12(c) for c in fit.coefficients],
            "objective": fmt12(fit.objective),
            "residual_statistic": _interval_payload(fit.statistic_of_residual),
            "tracking": bool(track_statistic(fit, quartet)),
            "nonunique": fit.nonunique,
        })
        return EXIT_OK

    if cfg.command == "portfolio":
        scen, probs = ingest_scenarios_csv(cfg.input_path)
        spec = cfg.spec or {"family": "quantile", "params": {"alpha": 0.8}}
        if spec.get("family") == "quantile":
            w, v = portfolio_optimize(None, scen, probs=probs, target_mean=cfg.target_mean, cvar_alpha=spec["params"]["alpha"])
        else:
            q = build_quadrangle(spec)
            w, v = portfolio_optimize(q, scen, probs=probs, target_mean=cfg.target_mean, steps=cfg.max_iter, seed=cfg.seed)
        _emit(cfg, {"weights": [fmt12(c) for c in w], "risk": fmt12(v)})
        return EXIT_OK

    if cfg.command == "dro":
        scen, probs = ingest_scenarios_csv(cfg.input_path)
        spec = cfg.spec or {}
        phi_name = spec.get("phi", "kl")
        params = {k: v for k, v in spec.get("params", {}).items() if k not in ("tau",)}
        tau = spec.get("tau", cfg.params.get("tau", 1.0))
        div = make_divergence(phi_name, **params)
        sol = dro_solve(DroProblem(scen, div, tau, probs=probs, target_mean=cfg.target_mean), steps=cfg.max_iter, seed=cfg.seed)
        code = EXIT_OK if sol.route_gap <= 1e-4 else EXIT_SOLVER
        _emit(cfg, {
            "weights": [fmt12(c) for c in sol.weights],
            "value": fmt12(sol.value),
            "worst_case_density": [fmt12(c) for c in sol.worst_case_density],
            "route_gap": fmt12(sol.route_gap),
            "density_approximate": sol.density_approximate,
        })
        return code

    if cfg.command == "epi":
        x = ingest_rv_csv(cfg.input_path)
        alpha = cfg.params.get("alpha", 0.5)
        kern, kconj, kscalar = kernel_quadratic_regret()
        from .core import cvar_direct

        inv = 1.0 / (1.0 - alpha)
        spec = None
        rows = []
        for eps in cfg.epsilons or (0.25, 0.5, 1.0, 2.0):
            spec = EpiSpec(
                base_risk=lambda y: cvar_direct(y, alpha),
                kernel=kern,
                epsilon=eps,
                base_regret=lambda y: inv * y.mean_pos(),
                base_envelope=cvar_envelope(alpha, x.probs),
                kernel_conj=kconj,
                kernel_conj_scalar=kscalar,
            )
            vp = epi_risk_primal(spec, x)
            vd = epi_risk_dual(spec, x)
            rows.append({"epsilon": fmt12(eps), "primal": fmt12(vp), "dual": fmt12(vd), "gap": fmt12(abs(vp - vd))})
        worst = max(r["gap"] for r in rows)
        _emit(cfg, {
            "alpha": alpha,
            "sweep": [f"eps={r['epsilon']:<10g} primal={r['primal']:.12g} dual={r['dual']:.12g} gap={r['gap']:.3g}" for r in rows]
            if cfg.output_format == "table"
            else rows,
        })
        return EXIT_OK if worst <= 1e-4 else EXIT_SOLVER

    if cfg.command == "check":
        rng = np.random.default_rng(cfg.seed)
        specs: list[CatalogSpec]
        if cfg.spec:
            specs = [CatalogSpec(cfg.spec["family"], dict(cfg.spec.get("params", {})))]
        else:
            defaults = {
                "standard_mean": {"lam": 1.0},
                "quantile": {"alpha": 0.7},
                "cvar2": {"alpha": 0.5},
                "qsa": {"alpha": 0.5},
                "qsau": {"eps": 0.25},
                "expectile_mse": {"q": 0.75},
                "expectile_pl": {"K": 0.5},
                "mean_pl": {},
                "biased_mean": {"x": 0.5},
            }
            specs = [CatalogSpec(f, p) for f, p in defaults.items()]
        table = []
        all_ok = True
        for sp in specs:
            q = make_catalog_quadrangle(sp)
            for res in run_quadrangle_checks(q, rng=np.random.default_rng(cfg.seed), n_rvs=10):
                all_ok &= res.passed
                table.append(f"{sp.family:15s} {res.name:28s} {'pass' if res.passed else 'FAIL':5s} {res.detail}")
        _emit(cfg, {"checks": table, "all_passed": all_ok})
        return EXIT_OK if all_ok else EXIT_VALIDATION

    raise ValueError(f"unknown command {cfg.command!r}")


def _parse_spec(args) -> Optional[dict]:
    spec = None
    if args.spec:
        if args.spec.strip().startswith("{"):
            spec = json.loads(args.spec)
        else:
            with open(args.spec) as fh:
                spec = json.load(fh)
    inline = {}
    for key in ("alpha", "q", "eps", "beta", "lam", "K", "x"):
        val = getattr(args, key if key != "K" else "big_k", None)
        if val is not None:
            inline[key] = val
    if inline and spec is None:
        if args.phi:
            spec = {"phi": args.phi, "params": inline}
        elif args.family:
            spec = {"family": args.family, "params": inline}
    elif spec is None and (args.family or args.phi):
        spec = {"family": args.family} if args.family else {"phi": args.phi}
        spec.setdefault("params", {})
    if spec is not None and args.tau is not None:
        spec["tau"] = args.tau
    return spec


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="riskquad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("eval", "statistic", "envelope", "family", "regress", "portfolio", "dro", "epi", "check"):
        p = sub.add_parser(name)
        p.add_argument("--input", dest="input_path")
        p.add_argument("--spec", help="JSON spec or path to one")
        p.add_argument("--family", choices=sorted(CATALOG_FAMILIES))
        p.add_argument("--phi", choices=PHI_REGISTRY)
        p.add_argument("--alpha", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--lam", type=float)
        p.add_argument("--K", dest="big_k", type=float)
        p.add_argument("--x", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--taus", help="comma-separated tau grid")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--epsilons", help="comma-separated epsilon grid")
        p.add_argument("--model", choices=NAMED_MODELS)
        p.add_argument("--target")
        p.add_argument("--target-mean", dest="target_mean", type=float)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--max-iter", dest="max_iter", type=int, default=4000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", dest="output_format", choices=("table", "json"), default="table")
        p.add_argument("--output", dest="output_path")
    args = parser.parse_args(argv)
    params = {}
    for key, attr in (("alpha", "alpha"), ("q", "q"), ("eps", "eps"), ("beta", "beta"), ("K", "big_k"), ("x", "x"), ("tau", "tau")):
        val = getattr(args, attr, None)
        if val is not None:
            params[key] = val
    cfg = RunConfig(
        command=args.command,
        input_path=args.input_path,
        spec=_parse_spec(args),
        params=params,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        output_format=args.output_format,
        output_path=args.output_path,
        taus=[float(t) for t in args.taus.split(",")] if args.taus else None,
        epsilons=[float(e) for e in args.epsilons.split(",")] if args.epsilons else ([args.epsilon] if args.epsilon else None),
        model=args.model,
        target=args.target,
        target_mean=args.target_mean,
    )
    return run_command(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
