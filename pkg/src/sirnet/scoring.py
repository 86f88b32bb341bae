"""Proper scoring rules for plug-in Poisson count forecasts.

All rules are oriented so that lower is better. The spherical score is
reported negated, ``-f(y) / ||f||_2``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import InputError

__all__ = ["ScoreReport", "score_cell", "score_cells", "score_forecast", "pmf_sq_sum", "RULES"]

RULES = ("dawid_sebastiani", "logarithmic", "brier", "spherical", "rmse")


def truncation_point(mu, y=0) -> int:
    """Upper summation index for ``sum_k f(k)^2``.

    Beyond ``mu + 10 sqrt(mu) + 20`` the Poisson pmf is below 1e-20 of its mode
    for every ``mu``, so the squared tail is far below 1e-12.
    """
    mu = np.asarray(mu, dtype=float)
    k = np.ceil(np.max(mu + 10.0 * np.sqrt(mu) + 20.0)) if mu.size else 20
    return int(max(k, np.max(y) if np.size(y) else 0))


def _log_pmf(k, mu):
    return k * np.log(mu) - mu - gammaln(k + 1.0)


def pmf_sq_sum(mu, kmax: Optional[int] = None) -> np.ndarray:
    """``sum_{k=0}^{kmax} f(k; mu)^2`` for each rate, by truncated series."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if kmax is None:
        kmax = truncation_point(mu)
    k = np.arange(kmax + 1, dtype=float)
    out = np.empty(mu.shape)
    # chunked to keep the (cells x kmax) table small
    flat = mu.reshape(-1)
    res = out.reshape(-1)
    step = max(1, 2_000_000 // (kmax + 1))
    for a in range(0, flat.size, step):
        m = flat[a : a + step, None]
        res[a : a + step] = np.exp(2.0 * _log_pmf(k[None, :], m)).sum(axis=1)
    return out


@dataclass(frozen=True)
class ScoreReport:
    dawid_sebastiani: float
    logarithmic: float
    brier: float
    spherical: float
    rmse: float
    n_cells: int

    def to_dict(self) -> dict:
        return asdict(self)


def _validate(y, mu):
    y = np.asarray(y, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if y.shape != mu.shape:
        raise InputError(f"{y.size} outcomes but {mu.size} forecasts")
    if np.any(~(mu > 0)) or not np.all(np.isfinite(mu)):
        raise InputError("forecast rates must be finite and strictly positive")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise InputError("outcomes must be nonnegative integers")
    return y, mu


def score_cells(y, mu, kmax: Optional[int] = None) -> dict:
    """Per-cell scores for each rule (arrays aligned with ``y``)."""
    y, mu = _validate(y, mu)
    if kmax is None:
        kmax = truncation_point(mu, y)
    logf = _log_pmf(y, mu)
    f = np.exp(logf)
    sq = pmf_sq_sum(mu, kmax)
    return {
        "dawid_sebastiani": (y - mu) ** 2 / mu + np.log(mu),
        "logarithmic": -logf,
        "brier": -2.0 * f + sq,
        "spherical": -f / np.sqrt(sq),
        "squared_error": (y - mu) ** 2,
    }


def score_cell(y: int, mu: float, kmax: Optional[int] = None) -> dict:
    """All four rules for one outcome under Poisson(mu)."""
    s = score_cells([y], [mu], kmax)
    return {k: float(v[0]) for k, v in s.items() if k != "squared_error"}


def score_forecast(y, mu, kmax: Optional[int] = None) -> ScoreReport:
    """Average each rule over the supplied cells. NaN pairs are dropped jointly."""
    y = np.asarray(y, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if y.shape != mu.shape:
        raise InputError(f"{y.size} outcomes but {mu.size} forecasts")
    ok = ~(np.isnan(y) | np.isnan(mu))
    y, mu = y[ok], mu[ok]
    if y.size == 0:
        raise InputError("no cells to score")
    s = score_cells(y, mu, kmax)
    return ScoreReport(
        dawid_sebastiani=float(np.mean(s["dawid_sebastiani"])),
        logarithmic=float(np.mean(s["logarithmic"])),
        brier=float(np.mean(s["brier"])),
        spherical=float(np.mean(s["spherical"])),
        rmse=math.sqrt(float(np.mean(s["squared_error"]))),
        n_cells=int(y.size),
    )
