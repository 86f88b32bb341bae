"""Command-line interface: ``sirnet <command> --config run.json``.

Exit status: 0 success, 2 usage, 3 input error, 4 convergence failure,
5 identifiability failure, 6 non-invertible information, 1 other errors.
Set ``SIRNET_LOG_LEVEL`` (e.g. DEBUG) for more output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (
    ConvergenceError,
    IdentifiabilityError,
    InputError,
    NotInvertibleError,
    SimulationUnstableError,
    SirError,
)
from .evaluation import run_cv, run_temporal_holdout
from .fit import fit_sir
from .inference import compute_vcov
from .model import predict_mu
from .scoring import score_forecast
from .sim import CovariateSpec, SimConfig, default_config, simulate

log = logging.getLogger("sirnet")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_IDENT, EXIT_SINGULAR = range(7)


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, IdentifiabilityError):
        return EXIT_IDENT
    if isinstance(exc, (ConvergenceError, SimulationUnstableError)):
        return EXIT_CONVERGENCE
    if isinstance(exc, NotInvertibleError):
        return EXIT_SINGULAR
    if isinstance(exc, (InputError, FileNotFoundError)):
        return EXIT_INPUT
    return EXIT_ERROR


def _kmax(cfg):
    return (cfg.get("scoring") or {}).get("truncation")


def cmd_fit(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    opts = io.fit_options_from_config(cfg)
    fit = fit_sir(data, mask=args.mask_periods or None, options=opts)
    vcov = compute_vcov(fit, data) if fit.converged else None
    out = io.fit_to_dict(fit, vcov, data)
    io.write_json(args.out, out)
    print(f"fit: {fit.n_obs} observations, {fit.outer_iterations} outer iterations, "
          f"converged={fit.converged}, loglik={fit.loglik:.6f}")
    if vcov is not None:
        for name, est, sh, ss in zip(vcov.names, fit.params.psi, vcov.se_hessian, vcov.se_sandwich):
            print(f"  {name:<24} {est: .6f}  se(hess) {sh:.6f}  se(sandwich) {ss:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK if fit.converged else EXIT_CONVERGENCE


def cmd_predict(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    params = io.params_from_fit_dict(io.read_fit(args.fit))
    mu = predict_mu(params, data)
    y = data.y
    rows = []
    for s in range(y.T - 1):
        for i in range(y.n):
            for j in range(y.n):
                if i != j:
                    rows.append((y.periods[s + 1], y.actors[i], y.actors[j], float(mu[i, j, s])))
    io.write_csv(args.out, ("period", "source", "target", "mu"), rows)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return EXIT_OK


def cmd_score(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    mu = io.read_predictions(args.predictions, data.y)
    keep = ~np.isnan(mu)
    if not keep.any():
        raise InputError(f"{args.predictions}: no predictions to score")
    rep = score_forecast(data.y.response[keep], mu[keep], _kmax(cfg))
    io.write_json(args.out, {"schema": "sirnet.scores/v1", **rep.to_dict()})
    for k, v in rep.to_dict().items():
        print(f"  {k:<18} {v}")
    return EXIT_OK


def _write_report(rep, json_path, csv_path):
    io.write_json(json_path, rep.to_dict())
    if csv_path:
        rows = []
        for f in rep.folds:
            for model, sc in f.scores.items():
                for rule, val in sc.to_dict().items():
                    rows.append((model, f.label, rule, val))
        io.write_csv(csv_path, ("model", "fold", "rule", "value"), rows)
    agg = rep.aggregate()
    for model, rules in agg.items():
        print(model)
        for rule, st in rules.items():
            print(f"  {rule:<18} mean {st['mean']:.6f}  range [{st['min']:.6f}, {st['max']:.6f}]")


def cmd_cv(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    cv = dict(cfg.get("cv") or {})
    k = args.k if args.k is not None else cv.get("k", 10)
    m = args.m if args.m is not None else cv.get("m", 5)
    seed = args.seed if args.seed is not None else cv.get("seed", 0)
    overlap = args.overlap or bool(cv.get("overlap", False))
    rep = run_cv(data, k=k, m=m, seed=seed, overlap=overlap,
                 fit_options=io.fit_options_from_config(cfg), kmax=_kmax(cfg))
    if args.external:
        rep.external = io.read_external_scores(args.external)
    _write_report(rep, args.out, args.csv)
    return EXIT_OK


def cmd_holdout(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    horizons = args.horizons or (cfg.get("holdout") or {}).get("horizons", [2, 3, 4, 5])
    rep = run_temporal_holdout(data, horizons, fit_options=io.fit_options_from_config(cfg),
                               kmax=_kmax(cfg))
    if args.external:
        rep.external = io.read_external_scores(args.external)
    _write_report(rep, args.out, args.csv)
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    if args.sim_config:
        try:
            raw = json.loads(Path(args.sim_config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.sim_config}: invalid JSON: {exc}") from None
        for key in ("direct", "influence", "receiver"):
            if raw.get(key) is not None:
                raw[key] = tuple(CovariateSpec(**c) for c in raw[key])
        for key in ("theta", "alpha", "beta"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if args.seed is not None:
            raw["seed"] = args.seed
        try:
            return SimConfig(**raw)
        except TypeError as exc:
            raise InputError(f"{args.sim_config}: {exc}") from None
    return default_config(n=args.n, T=args.T, seed=args.seed or 0)


def cmd_simulate(args):
    cfg = _sim_config(args)
    result = simulate(cfg)
    io.write_simulation(result, args.out_dir)
    print(f"simulated n={cfg.n} T={cfg.T} seed={cfg.seed}; max linear predictor "
          f"{result.max_eta:.3f}; wrote {args.out_dir}")
    return EXIT_OK


def cmd_export(args):
    cfg = io.load_config(args.config)
    data = io.load_data(cfg)
    params = io.params_from_fit_dict(io.read_fit(args.fit))
    periods = list(data.y.periods[1:])
    if args.period not in periods:
        raise InputError(f"period {args.period!r} is not a modeled period")
    t = periods.index(args.period)
    W = data.Ws if args.side == "sender" else data.Wr
    rows = io.export_influence(params, W, args.side, t, data.y.actors, args.threshold)
    io.write_csv(args.out, ("actor", "other", "influence"), rows)
    print(f"wrote {len(rows)} edges to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sirnet", description="Social influence regression")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit the model and write fit.json")
    f.add_argument("--config", required=True)
    f.add_argument("--out", default="fit.json")
    f.add_argument("--mask-periods", type=int, nargs="*", help="modeled periods to exclude")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="write fitted rates for every modeled cell")
    pr.add_argument("--config", required=True)
    pr.add_argument("--fit", default="fit.json")
    pr.add_argument("--out", default="predictions.csv")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("score", help="score a predictions CSV against the events")
    s.add_argument("--config", required=True)
    s.add_argument("--predictions", required=True)
    s.add_argument("--out", default="scores.json")
    s.set_defaults(func=cmd_score)

    c = sub.add_parser("cv", help="random slice-exclusion cross-validation")
    c.add_argument("--config", required=True)
    c.add_argument("--k", type=int)
    c.add_argument("--m", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--overlap", action="store_true")
    c.add_argument("--external", help="CSV of externally computed baseline scores")
    c.add_argument("--out", default="cv_report.json")
    c.add_argument("--csv")
    c.set_defaults(func=cmd_cv)

    h = sub.add_parser("holdout", help="last-x-period temporal holdout")
    h.add_argument("--config", required=True)
    h.add_argument("--horizons", type=int, nargs="+")
    h.add_argument("--external")
    h.add_argument("--out", default="holdout_report.json")
    h.add_argument("--csv")
    h.set_defaults(func=cmd_holdout)

    sm = sub.add_parser("simulate", help="generate synthetic data files")
    sm.add_argument("--sim-config", help="JSON with SimConfig fields")
    sm.add_argument("--n", type=int, default=10)
    sm.add_argument("--T", type=int, default=60)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--out-dir", required=True)
    sm.set_defaults(func=cmd_simulate)

    e = sub.add_parser("export-influence", help="edge list of an influence matrix")
    e.add_argument("--config", required=True)
    e.add_argument("--fit", default="fit.json")
    e.add_argument("--side", choices=("sender", "receiver"), default="sender")
    e.add_argument("--period", required=True, help="modeled period label, YYYY-MM")
    e.add_argument("--threshold", type=float, default=0.0)
    e.add_argument("--out", default="influence_edges.csv")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    level = os.environ.get("SIRNET_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SirError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
