"""Out-of-sample comparison of the influence regression against a plain GLM.

Held-out slices are forecast one period at a time. The lag of a held-out
slice is the observed count when that period was part of the training data
and the forecast rate ``log(mu_hat + 1)`` otherwise. Training rows whose lag
falls in a held-out period are dropped as well, so no held-out count ever
reaches the fitted model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import InputError
from .fit import FitOptions, fit_sir
from .glm import GlmFit, fit_poisson
from .model import NetworkData, ParameterSet, predict_mu
from .scoring import RULES, ScoreReport, score_forecast

__all__ = [
    "CvPlan",
    "make_cv_plan",
    "ComparisonReport",
    "FoldResult",
    "fit_glm_baseline",
    "chained_forecast",
    "training_mask",
    "run_cv",
    "run_temporal_holdout",
]

log = logging.getLogger(__name__)

MODELS = ("sir", "glm")


@dataclass(frozen=True)
class CvPlan:
    k: int
    m: int
    seed: int
    folds: tuple
    overlap: bool

    def to_dict(self) -> dict:
        return {
            "k": self.k, "m": self.m, "seed": self.seed, "overlap": self.overlap,
            "folds": [list(f) for f in self.folds],
        }


def make_cv_plan(n_periods: int, k: int = 10, m: int = 5, seed: int = 0, overlap: bool = False) -> CvPlan:
    """Random slice-exclusion folds over the modeled periods.

    The periods are shuffled and split into ``k`` groups; each fold holds out
    ``m`` periods drawn from its own group, so folds are disjoint. When a group
    has fewer than ``m`` periods (or ``overlap`` is requested) each fold draws
    its ``m`` periods from the whole range instead.
    """
    if k < 1 or m < 1:
        raise InputError("k and m must be positive")
    if m >= n_periods:
        raise InputError(f"cannot hold out {m} of {n_periods} modeled periods")
    rng = np.random.default_rng(seed)
    groups = np.array_split(rng.permutation(n_periods), k)
    disjoint = not overlap and min(len(g) for g in groups) >= m
    if not overlap and not disjoint:
        log.warning("k*m exceeds the number of periods; folds will overlap")
    folds = []
    for g in groups:
        pool = g if disjoint else np.arange(n_periods)
        folds.append(tuple(int(s) for s in np.sort(rng.choice(pool, m, replace=False))))
    return CvPlan(k, m, seed, tuple(folds), not disjoint)


def training_mask(heldout: Sequence[int], n_periods: int) -> List[int]:
    """Held-out periods plus the periods whose lag is a held-out response."""
    h = set(int(s) for s in heldout)
    return sorted(h | {s + 1 for s in h if s + 1 < n_periods})


def fit_glm_baseline(data: NetworkData, mask=None) -> GlmFit:
    """Poisson GLM on the direct design only (no influence term)."""
    keep = data.keep(mask)
    return fit_poisson(data.Z.values[keep], data.y.response[keep], names=data.Z.names)


def _sir_rates(params: ParameterSet):
    def rates(d: NetworkData, s: int) -> np.ndarray:
        return predict_mu(params, d)[:, :, s]
    return rates


def _glm_rates(fit: GlmFit):
    def rates(d: NetworkData, s: int) -> np.ndarray:
        mu = np.exp(d.Z.values[:, :, s, :] @ fit.coefficients)
        np.fill_diagonal(mu, np.nan)
        return mu
    return rates


def chained_forecast(
    data: NetworkData, heldout: Sequence[int], rates: Callable[[NetworkData, int], np.ndarray]
) -> Dict[int, np.ndarray]:
    """Forecast each held-out modeled period in order, chaining through the lag."""
    h = sorted(set(int(s) for s in heldout))
    hs = set(h)
    x = data.x
    out: Dict[int, np.ndarray] = {}
    for s in h:
        if s - 1 in hs:
            x = x.with_slice(s, out[s - 1])
        d = data if x is data.x else data.with_x(x)
        out[s] = rates(d, s)
    return out


@dataclass(frozen=True)
class FoldResult:
    label: str
    heldout: tuple
    n_train: int
    scores: Dict[str, ScoreReport]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "heldout": list(self.heldout),
            "n_train": self.n_train,
            "scores": {m: s.to_dict() for m, s in self.scores.items()},
        }


@dataclass
class ComparisonReport:
    kind: str
    folds: List[FoldResult]
    plan: Optional[dict] = None
    external: Dict[str, List[dict]] = field(default_factory=dict)

    def model_scores(self, model: str) -> List[ScoreReport]:
        return [f.scores[model] for f in self.folds]

    def aggregate(self) -> dict:
        out = {}
        for model in MODELS:
            reps = self.model_scores(model)
            out[model] = {}
            for rule in RULES:
                vals = np.array([getattr(r, rule) for r in reps])
                out[model][rule] = {
                    "mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max()),
                }
        return out

    def wins(self, rule: str, model: str = "sir", other: str = "glm") -> int:
        """Number of folds where ``model`` scores strictly lower than ``other``."""
        return sum(
            getattr(f.scores[model], rule) < getattr(f.scores[other], rule) for f in self.folds
        )

    def to_dict(self) -> dict:
        return {
            "schema": "sirnet.report/v1",
            "kind": self.kind,
            "plan": self.plan,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": self.aggregate(),
            "external": self.external,
        }


def _evaluate(data, heldout, label, fit_options, kmax) -> FoldResult:
    T1 = data.n_periods
    train_mask = training_mask(heldout, T1)
    sir = fit_sir(data, mask=train_mask, options=fit_options)
    glm = fit_glm_baseline(data, mask=train_mask)
    keep_test = data.keep(sorted(set(range(T1)) - set(heldout)))
    y_test = data.y.response
    scores = {}
    for name, rates in (("sir", _sir_rates(sir.params)), ("glm", _glm_rates(glm))):
        fc = chained_forecast(data, heldout, rates)
        mu = np.full(keep_test.shape, np.nan)
        for s, m in fc.items():
            mu[:, :, s] = m
        scores[name] = score_forecast(y_test[keep_test], mu[keep_test], kmax)
    return FoldResult(label, tuple(sorted(heldout)), sir.n_obs, scores)


def run_cv(
    data: NetworkData,
    k: int = 10,
    m: int = 5,
    seed: int = 0,
    overlap: bool = False,
    fit_options: Optional[FitOptions] = None,
    kmax: Optional[int] = None,
) -> ComparisonReport:
    """Random slice-exclusion cross-validation of both models on identical cells."""
    plan = make_cv_plan(data.n_periods, k, m, seed, overlap)
    folds = [
        _evaluate(data, list(h), f"fold{idx}", fit_options, kmax)
        for idx, h in enumerate(plan.folds)
    ]
    return ComparisonReport("cv", folds, plan.to_dict())


def run_temporal_holdout(
    data: NetworkData,
    horizons: Sequence[int] = (2, 3, 4, 5),
    fit_options: Optional[FitOptions] = None,
    kmax: Optional[int] = None,
) -> ComparisonReport:
    """Train on all but the last ``x`` periods and forecast those iteratively."""
    T = data.y.T
    T1 = data.n_periods
    folds = []
    for x in horizons:
        x = int(x)
        if x < 1:
            raise InputError(f"horizon must be at least 1, got {x}")
        if x >= T:
            raise InputError(f"horizon {x} leaves no training periods (T = {T})")
        heldout = list(range(T1 - x, T1)) if x <= T1 else []
        if not heldout or len(heldout) >= T1:
            raise InputError(f"horizon {x} leaves no training periods (T = {T})")
        folds.append(_evaluate(data, heldout, f"last{x}", fit_options, kmax))
    return ComparisonReport("holdout", folds, {"horizons": [int(h) for h in horizons]})
