"""CSV ingestion, run-config handling and JSON/CSV serialization.

File formats
------------
events CSV      ``period,source,target,count`` (``count`` optional, default 1)
covariate CSV   ``period,source,target,name,value``
run-config      JSON, see :func:`load_config`
fit / reports   versioned JSON carrying a ``schema`` field
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .design import DirectDesign, InfluenceDesign, influence_scores
from .errors import InputError
from .fit import FitOptions, SirFit
from .inference import VcovResult
from .model import NetworkData, ParameterSet
from .periods import month_range, parse_month
from .tensor import DyadTensor, lag_log_transform, offdiag_mask

__all__ = [
    "ingest_events",
    "read_covariates",
    "ingest_designs",
    "load_config",
    "load_data",
    "fit_options_from_config",
    "fit_to_dict",
    "params_from_fit_dict",
    "export_influence",
    "write_json",
    "write_csv",
    "write_simulation",
    "read_external_scores",
    "read_predictions",
]

FIT_SCHEMA = "sirnet.fit/v1"
CONFIG_SCHEMA = "sirnet.config/v1"
ROLES = ("direct", "sender", "receiver", "both")
TRANSFORMS = ("identity", "log1p")
BUILTINS = ("identity", "ones")


# ---------------------------------------------------------------- writing

def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    write_text_atomic(path, dumps(obj))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- reading

def _read_rows(path, required: Sequence[str], optional: Sequence[str] = ()):
    """Yield ``(line_number, row_dict)`` after checking the header."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}:1: header lacks columns {missing}")
        cols = {c: header.index(c) for c in list(required) + [c for c in optional if c in header]}
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
            yield lineno, {c: raw[k].strip() for c, k in cols.items()}


def _number(text, path, lineno, column):
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"{path}:{lineno}: column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"{path}:{lineno}: column {column!r}: non-finite value {text!r}")
    return v


def _period(text, path, lineno, pindex):
    try:
        parse_month(text)
    except InputError:
        raise InputError(f"{path}:{lineno}: unparseable period {text!r}; expected YYYY-MM") from None
    return pindex.get(text)


def ingest_events(
    path, actors: Sequence[str], periods: Sequence[str], strict: bool = True
) -> DyadTensor:
    """Aggregate event records into an ``n x n x T`` count tensor.

    Cells without records are zero. With ``strict`` unknown actors are an
    error; otherwise their rows are dropped.
    """
    actors = list(actors)
    periods = list(periods)
    aindex = {a: k for k, a in enumerate(actors)}
    pindex = {p: k for k, p in enumerate(periods)}
    n, T = len(actors), len(periods)
    Y = np.zeros((n, n, T))
    for lineno, row in _read_rows(path, ("period", "source", "target"), ("count",)):
        t = _period(row["period"], path, lineno, pindex)
        if t is None:
            raise InputError(f"{path}:{lineno}: period {row['period']} outside declared range")
        src, tgt = row["source"], row["target"]
        if src == tgt:
            raise InputError(f"{path}:{lineno}: source equals target ({src}); self-ties are undefined")
        if src not in aindex or tgt not in aindex:
            if strict:
                bad = src if src not in aindex else tgt
                raise InputError(f"{path}:{lineno}: unknown actor {bad!r}")
            continue
        text = row.get("count", "")
        c = 1.0 if text == "" else _number(text, path, lineno, "count")
        if c < 0:
            raise InputError(f"{path}:{lineno}: negative count {c}")
        Y[aindex[src], aindex[tgt], t] += c
    return DyadTensor(Y, actors, periods)


def read_covariates(path, actors, periods, strict: bool = True) -> Dict[str, np.ndarray]:
    """Read dyadic covariates into ``{name: (n, n, T) array}``; NaN marks missing.

    Rows for periods outside the declared range are ignored.
    """
    aindex = {a: k for k, a in enumerate(actors)}
    pindex = {p: k for k, p in enumerate(periods)}
    n, T = len(actors), len(periods)
    out: Dict[str, np.ndarray] = {}
    for lineno, row in _read_rows(path, ("period", "source", "target", "name", "value")):
        t = _period(row["period"], path, lineno, pindex)
        if t is None:
            continue
        src, tgt, name = row["source"], row["target"], row["name"]
        if not name:
            raise InputError(f"{path}:{lineno}: empty covariate name")
        if src not in aindex or tgt not in aindex:
            if strict:
                bad = src if src not in aindex else tgt
                raise InputError(f"{path}:{lineno}: unknown actor {bad!r}")
            continue
        v = _number(row["value"], path, lineno, "value")
        arr = out.setdefault(name, np.full((n, n, T), np.nan))
        i, j = aindex[src], aindex[tgt]
        if not np.isnan(arr[i, j, t]):
            raise InputError(f"{path}:{lineno}: duplicate value for {name} {src}->{tgt} {row['period']}")
        arr[i, j, t] = v
    return out


def _carry_forward(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    for t in range(1, out.shape[2]):
        gap = np.isnan(out[:, :, t])
        out[:, :, t][gap] = out[:, :, t - 1][gap]
    return out


def _covariate_column(entry, raw, y: DyadTensor, fill: str, influence: bool) -> np.ndarray:
    """(n, n, T-1) column aligned with the modeled periods."""
    n, T = y.n, y.T
    name = entry["name"]
    lag = int(entry.get("lag", 1))
    if lag not in (0, 1):
        raise InputError(f"covariate {name}: lag must be 0 or 1")
    builtin = entry.get("builtin")
    if builtin is not None:
        if builtin not in BUILTINS:
            raise InputError(f"covariate {name}: unknown builtin {builtin!r}")
        base = np.eye(n) if builtin == "identity" else np.ones((n, n))
        return np.repeat(base[:, :, None], T - 1, axis=2)
    if name not in raw:
        raise InputError(f"covariate {name!r} not found in any covariate file")
    arr = raw[name]
    if fill == "carry-forward":
        arr = _carry_forward(arr)
    elif fill != "strict":
        raise InputError(f"unknown fill policy {fill!r}")
    col = arr[:, :, 1 - lag : T - lag]
    need = np.ones((n, n), dtype=bool) if influence else offdiag_mask(n)
    gaps = np.isnan(col) & need[:, :, None]
    if gaps.any():
        i, j, t = (int(v[0]) for v in np.nonzero(gaps))
        period = y.periods[t + 1 - lag]
        raise InputError(
            f"covariate {name!r}: missing value for {y.actors[i]}->{y.actors[j]} in {period} "
            f"({int(gaps.sum())} missing cells; fill policy {fill!r})"
        )
    col = np.nan_to_num(col, nan=0.0)
    transform = entry.get("transform", "identity")
    if transform not in TRANSFORMS:
        raise InputError(f"covariate {name}: unknown transform {transform!r}")
    if transform == "log1p":
        if np.any(col[need] <= -1):
            raise InputError(f"covariate {name}: log1p of a value <= -1")
        col = np.log1p(np.where(need[:, :, None], col, 0.0))
    return col


def ingest_designs(design: dict, raw: Dict[str, np.ndarray], y: DyadTensor):
    """Assemble the direct and influence designs described by ``design``.

    ``design`` keys: ``intercept`` (bool), ``lagged_dv`` (bool), ``reciprocal``
    (bool), ``fill`` ("strict" | "carry-forward") and ``covariates``: a list of
    ``{name, role, lag, transform, builtin, label}`` entries, ``role`` one of
    direct, sender, receiver, both.
    """
    fill = design.get("fill", "strict")
    n, T1 = y.n, y.T - 1
    z_cols, z_names, lag_terms = [], [], {}
    intercept = bool(design.get("intercept", True))
    if intercept:
        z_cols.append(np.ones((n, n, T1)))
        z_names.append("intercept")
    x = lag_log_transform(y).values
    if design.get("lagged_dv", False):
        z_cols.append(x)
        z_names.append("lag_dv")
        lag_terms["lag_dv"] = "lag"
    if design.get("reciprocal", False):
        z_cols.append(x.transpose(1, 0, 2))
        z_names.append("reciprocal_dv")
        lag_terms["reciprocal_dv"] = "reciprocal"
    s_cols, s_names, r_cols, r_names = [], [], [], []
    for entry in design.get("covariates", []):
        if "name" not in entry:
            raise InputError(f"covariate entry without a name: {entry}")
        role = entry.get("role", "direct")
        if role not in ROLES:
            raise InputError(f"covariate {entry['name']}: unknown role {role!r}")
        label = entry.get("label", entry["name"])
        col = _covariate_column(entry, raw, y, fill, influence=role != "direct")
        targets = {"direct": [(z_cols, z_names)], "sender": [(s_cols, s_names)],
                   "receiver": [(r_cols, r_names)],
                   "both": [(s_cols, s_names), (r_cols, r_names)]}[role]
        for cols, names in targets:
            if label in names:
                raise InputError(f"covariate name collision: {label!r}")
            cols.append(col)
            names.append(label)
    if not z_cols:
        raise InputError("direct design is empty; enable the intercept or add covariates")
    if not s_cols or not r_cols:
        raise InputError("influence designs need at least one sender and one receiver covariate")
    Z = DirectDesign(np.stack(z_cols, axis=3), tuple(z_names), intercept, lag_terms)
    shared = s_names == r_names and all(
        e.get("role") == "both" for e in design["covariates"] if e.get("role", "direct") != "direct"
    )
    Ws = InfluenceDesign(np.stack(s_cols, axis=3), tuple(s_names), "both" if shared else "sender")
    Wr = Ws if shared else InfluenceDesign(np.stack(r_cols, axis=3), tuple(r_names), "receiver")
    return Z, Ws, Wr


# ---------------------------------------------------------------- config

def load_config(path) -> dict:
    """Read a run-config and resolve file paths relative to its directory.

    Keys: ``events``, ``covariates`` (path or list), ``actors``, ``periods``
    (list, or ``{"start", "end"}``), ``strict_actors``, ``design``,
    ``estimator``, ``scoring``, ``cv``, ``holdout``.
    """
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    schema = cfg.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise InputError(f"{path}: unsupported config schema {schema!r}")
    if "events" not in cfg:
        raise InputError(f"{path}: config needs an 'events' file")
    base = path.parent
    cfg["events"] = str(base / cfg["events"])
    covs = cfg.get("covariates") or []
    if isinstance(covs, str):
        covs = [covs]
    cfg["covariates"] = [str(base / c) for c in covs]
    return cfg


def _infer_universe(cfg):
    actors = cfg.get("actors")
    periods = cfg.get("periods")
    if actors is not None and isinstance(periods, list):
        return list(actors), list(periods)
    seen_actors, seen_periods = set(), set()
    files = [(cfg["events"], ("period", "source", "target"))]
    files += [(c, ("period", "source", "target", "name", "value")) for c in cfg["covariates"]]
    for k, (f, req) in enumerate(files):
        for lineno, row in _read_rows(f, req):
            seen_actors.update((row["source"], row["target"]))
            if k == 0:
                parse_month(row["period"])
                seen_periods.add(row["period"])
    if actors is None:
        actors = sorted(seen_actors)
    if isinstance(periods, dict):
        periods = month_range(periods["start"], periods["end"])
    elif periods is None:
        if not seen_periods:
            raise InputError("cannot infer periods from an empty events file")
        periods = month_range(min(seen_periods, key=parse_month), max(seen_periods, key=parse_month))
    return list(actors), list(periods)


def load_data(cfg: dict) -> NetworkData:
    actors, periods = _infer_universe(cfg)
    strict = bool(cfg.get("strict_actors", True))
    y = ingest_events(cfg["events"], actors, periods, strict)
    raw: Dict[str, np.ndarray] = {}
    for c in cfg["covariates"]:
        for name, arr in read_covariates(c, actors, periods, strict).items():
            if name in raw:
                raise InputError(f"covariate {name!r} appears in more than one file")
            raw[name] = arr
    Z, Ws, Wr = ingest_designs(cfg.get("design", {}), raw, y)
    return NetworkData(y, Z, Ws, Wr)


def fit_options_from_config(cfg: dict) -> FitOptions:
    est = dict(cfg.get("estimator", {}))
    known = set(FitOptions.__dataclass_fields__)
    unknown = set(est) - known
    if unknown:
        raise InputError(f"unknown estimator options: {sorted(unknown)}")
    if est.get("beta_init") is not None:
        est["beta_init"] = tuple(est["beta_init"])
    return FitOptions(**est)


# ---------------------------------------------------------------- fits

def fit_to_dict(fit: SirFit, vcov: Optional[VcovResult], data: NetworkData) -> dict:
    theta_n, alpha_n, beta_n = fit.names
    out = {
        "schema": FIT_SCHEMA,
        "params": fit.params.to_dict(),
        "names": {"theta": list(theta_n), "alpha": list(alpha_n), "beta": list(beta_n)},
        "loglik": fit.loglik,
        "loglik_trace": list(fit.loglik_trace),
        "polish_trace": list(fit.polish_trace),
        "outer_iterations": fit.outer_iterations,
        "converged": fit.converged,
        "n_obs": fit.n_obs,
        "start_logliks": list(fit.start_logliks),
        "start_spread": fit.start_spread,
        "actors": list(data.y.actors),
        "periods": list(data.y.periods),
        "options": {k: (list(v) if isinstance(v, tuple) else v)
                    for k, v in fit.options.__dict__.items()},
    }
    if vcov is not None:
        out["inference"] = {"estimate": fit.params.psi.tolist(), **vcov.to_dict()}
    return out


def params_from_fit_dict(d: dict) -> ParameterSet:
    if d.get("schema") != FIT_SCHEMA:
        raise InputError(f"unsupported fit schema {d.get('schema')!r}")
    p = d["params"]
    return ParameterSet(p["theta"], p["alpha"], p["beta"])


def read_fit(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None


def export_influence(
    params: ParameterSet, W: InfluenceDesign, side: str, t: int, actors, threshold: float = 0.0
) -> List[tuple]:
    """Edge rows ``(actor, other, influence)`` with ``|influence| >= threshold``.

    ``influence`` is entry ``(i, i2)`` of the sender (``alpha``) or receiver
    (``beta``) influence matrix at modeled period ``t``; self-pairs are omitted.
    """
    if side not in ("sender", "receiver"):
        raise InputError(f"side must be 'sender' or 'receiver', got {side!r}")
    coef = params.alpha if side == "sender" else params.beta
    M = influence_scores(W, coef, t)
    rows = []
    n = M.shape[0]
    for i in range(n):
        for k in range(n):
            if i != k and abs(M[i, k]) >= threshold:
                rows.append((actors[i], actors[k], float(M[i, k])))
    return rows


# ---------------------------------------------------------------- predictions / external

def read_predictions(path, y: DyadTensor) -> np.ndarray:
    """Read ``period,source,target,mu`` rows into an (n, n, T-1) array."""
    aindex = {a: k for k, a in enumerate(y.actors)}
    pindex = {p: k - 1 for k, p in enumerate(y.periods) if k > 0}
    out = np.full((y.n, y.n, y.T - 1), np.nan)
    for lineno, row in _read_rows(path, ("period", "source", "target", "mu")):
        s = _period(row["period"], path, lineno, pindex)
        if s is None:
            raise InputError(f"{path}:{lineno}: period {row['period']} is not a modeled period")
        if row["source"] not in aindex or row["target"] not in aindex:
            raise InputError(f"{path}:{lineno}: unknown actor")
        i, j = aindex[row["source"]], aindex[row["target"]]
        if i == j:
            raise InputError(f"{path}:{lineno}: source equals target")
        out[i, j, s] = _number(row["mu"], path, lineno, "mu")
    return out


EXTERNAL_COLUMNS = ("model", "fold", "dawid_sebastiani", "logarithmic", "brier", "spherical", "rmse")


def read_external_scores(path) -> Dict[str, List[dict]]:
    """Externally computed baseline scores (e.g. a boosted model) keyed by model."""
    out: Dict[str, List[dict]] = {}
    for lineno, row in _read_rows(path, EXTERNAL_COLUMNS, ("n_cells",)):
        rec = {"fold": row["fold"]}
        for c in EXTERNAL_COLUMNS[2:]:
            rec[c] = _number(row[c], path, lineno, c)
        if row.get("n_cells"):
            rec["n_cells"] = int(_number(row["n_cells"], path, lineno, "n_cells"))
        out.setdefault(row["model"], []).append(rec)
    return out


# ---------------------------------------------------------------- simulation output

def write_simulation(result, directory) -> dict:
    """Write a simulated dataset as events/covariate CSVs plus a run-config.

    Covariates are written with lag 0 keyed by the response period they
    accompany, so ingesting the files reproduces the simulated designs.
    """
    directory = Path(directory)
    data, cfg = result.data, result.config
    y = data.y
    n, T = y.n, y.T
    ev_rows = []
    for t in range(T):
        for i in range(n):
            for j in range(n):
                if i != j and y.values[i, j, t] > 0:
                    ev_rows.append((y.periods[t], y.actors[i], y.actors[j], int(y.values[i, j, t])))
    write_csv(directory / "events.csv", ("period", "source", "target", "count"), ev_rows)

    entries = []
    cov_rows = []
    names_seen = set()

    def emit(spec, values, role, influence):
        if spec.name in names_seen:
            raise InputError(f"covariate name {spec.name!r} used twice")
        names_seen.add(spec.name)
        if spec.kind == "identity":
            entries.append({"name": spec.name, "role": role, "builtin": "identity"})
            return
        entries.append({"name": spec.name, "role": role, "lag": 0, "transform": "identity"})
        for s in range(T - 1):
            for i in range(n):
                for j in range(n):
                    if i == j and not influence:
                        continue
                    cov_rows.append((y.periods[s + 1], y.actors[i], y.actors[j], spec.name,
                                     float(values[i, j, s])))

    intercept = False
    for k, spec in enumerate(cfg.direct):
        if k == 0 and spec.kind == "intercept":
            intercept = True
            continue
        emit(spec, data.Z.values[:, :, :, k], "direct", False)
    role = "both" if cfg.receiver is None else "sender"
    for k, spec in enumerate(cfg.influence):
        emit(spec, data.Ws.values[:, :, :, k], role, True)
    if cfg.receiver is not None:
        for k, spec in enumerate(cfg.receiver):
            emit(spec, data.Wr.values[:, :, :, k], "receiver", True)
    write_csv(directory / "covariates.csv", ("period", "source", "target", "name", "value"), cov_rows)

    run_cfg = {
        "schema": CONFIG_SCHEMA,
        "events": "events.csv",
        "covariates": ["covariates.csv"],
        "actors": list(y.actors),
        "periods": list(y.periods),
        "design": {"intercept": intercept, "fill": "strict", "covariates": entries},
        "estimator": {"tol": 1e-8, "max_outer": 100, "seed": 0, "n_starts": 1},
        "cv": {"k": 10, "m": 5, "seed": 0},
        "holdout": {"horizons": [2, 3, 4, 5]},
    }
    write_json(directory / "config.json", run_cfg)
    truth = {"schema": "sirnet.truth/v1", "params": result.params.to_dict(),
             "max_eta": result.max_eta}
    write_json(directory / "truth.json", truth)
    return run_cfg
