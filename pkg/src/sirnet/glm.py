"""Poisson log-link GLM by iteratively weighted least squares."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import BoundaryMLEError, ConvergenceError, InputError, SingularDesignError

__all__ = ["GlmFit", "fit_poisson", "loglik_poisson", "poisson_deviance"]

log = logging.getLogger(__name__)

ETA_MAX = 700.0  # exp overflows just above 709
RANK_TOL = 1e-10


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    fisher_info: np.ndarray
    deviance: float
    loglik: float
    iterations: int
    converged: bool
    names: tuple = ()

    @property
    def vcov(self) -> np.ndarray:
        return np.linalg.inv(self.fisher_info)


def loglik_poisson(mu, y) -> float:
    """Poisson log-likelihood ``sum(y log mu - mu - log y!)``."""
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(mu > 0)):
        raise InputError("Poisson means must be strictly positive")
    return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1.0)))


def poisson_deviance(mu, y) -> float:
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(ylogy - (y - mu)))


def _loglik_eta(eta, y, const):
    return float(np.sum(y * eta - np.exp(eta))) - const


def _check_rank(X, names):
    """Raise if X is rank deficient. Columns are scaled to unit norm first."""
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        cols = [names[k] for k in zero]
        raise SingularDesignError(f"design has all-zero columns: {cols}", cols)
    _, R, piv = linalg.qr(X / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    bad = piv[diag < RANK_TOL * diag[0]]
    if bad.size:
        cols = [names[k] for k in sorted(bad)]
        raise SingularDesignError(f"design is rank deficient; aliased columns: {cols}", cols)


def _wls(X, z, w):
    """Weighted least squares via QR of the row-weighted, column-scaled design."""
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    scale = np.linalg.norm(Xw, axis=0)
    scale[scale == 0] = 1.0
    Q, R = linalg.qr(Xw / scale, mode="economic")
    coef = linalg.solve_triangular(R, Q.T @ (z * sw))
    return coef / scale


def fit_poisson(
    X,
    y,
    offset=None,
    init=None,
    *,
    names: Optional[Sequence[str]] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    max_halvings: int = 40,
) -> GlmFit:
    """Maximum-likelihood Poisson regression with log link.

    Parameters
    ----------
    X : ndarray, shape (N, d)
    y : ndarray, shape (N,)
        Nonnegative integer counts.
    offset : ndarray, shape (N,), optional
    init : ndarray, shape (d,), optional
        Starting coefficients. Without it IWLS starts from the working
        response ``log(y + 0.5)``. With it, the fitted log-likelihood is
        never below the log-likelihood at ``init``.
    tol : float
        Relative deviance change used as the stopping rule.

    Returns
    -------
    GlmFit
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise InputError(f"incompatible shapes X {X.shape}, y {y.shape}")
    N, d = X.shape
    names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(d))
    if N < d:
        raise InputError(f"need at least {d} observations, got {N}")
    if not np.all(np.isfinite(X)):
        raise InputError("design contains non-finite values")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise InputError("Poisson response must be nonnegative integers")
    if not np.any(y > 0):
        raise BoundaryMLEError("all responses are zero; the MLE of the mean is 0 (boundary)")
    off = np.zeros(N) if offset is None else np.asarray(offset, dtype=float)
    _check_rank(X, names)

    const = float(np.sum(gammaln(y + 1.0)))
    if init is None:
        eta = np.log(y + 0.5)
        mu = y + 0.5
        coef = _wls(X, eta - off, mu)
        start_ll = -np.inf
    else:
        coef = np.asarray(init, dtype=float).copy()
        start_ll = _loglik_eta(np.clip(X @ coef + off, -ETA_MAX, ETA_MAX), y, const)

    eta = X @ coef + off
    if np.max(eta) > ETA_MAX:
        raise ConvergenceError("initial linear predictor overflows")
    ll = _loglik_eta(eta, y, const)
    if ll < start_ll:
        ll = start_ll
    dev = poisson_deviance(np.exp(eta), y)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = np.exp(eta)
        z = eta - off + (y - mu) / mu
        new = _wls(X, z, mu)
        step = new - coef
        for _ in range(max_halvings):
            cand = coef + step
            eta_c = X @ cand + off
            if np.max(eta_c) <= ETA_MAX:
                ll_c = _loglik_eta(eta_c, y, const)
                if ll_c >= ll - 1e-12 * abs(ll):
                    break
            step = step / 2.0
        else:
            raise ConvergenceError("IWLS step-halving failed to find an ascent step")
        if ll_c < ll:
            # no strict improvement available: stay put
            cand, eta_c, ll_c = coef, eta, ll
        coef, eta, ll = cand, eta_c, ll_c
        new_dev = poisson_deviance(np.exp(eta), y)
        if abs(new_dev - dev) / (abs(new_dev) + 0.1) < tol:
            dev = new_dev
            converged = True
            break
        dev = new_dev

    mu = np.exp(eta)
    if np.min(eta) < -30 and np.max(np.abs(coef)) > 25:
        raise BoundaryMLEError(
            "fitted means collapse to zero for some cells; the MLE lies on the boundary"
        )
    if not converged:
        log.warning("IWLS stopped after %d iterations without converging", it)
    info = (X * mu[:, None]).T @ X
    return GlmFit(
        coefficients=coef,
        fisher_info=0.5 * (info + info.T),
        deviance=dev,
        loglik=ll,
        iterations=it,
        converged=converged,
        names=names,
    )
