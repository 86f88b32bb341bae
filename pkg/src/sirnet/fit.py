"""Alternating block-coordinate maximum likelihood for the influence regression.

Each outer iteration runs two Poisson GLM fits: ``(theta, alpha)`` given
``beta`` on the design ``[z | Xt beta]``, then ``(theta, beta)`` given
``alpha`` on ``[z | Xt^T alpha]``. Both are warm-started from the current
point, so the joint log-likelihood never decreases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import collapse_alpha, collapse_beta
from .errors import IdentifiabilityError, InputError, SirError
from .glm import GlmFit, fit_poisson
from .model import (
    NetworkData,
    ParameterSet,
    canonicalize,
    derivatives,
    loglik,
)
from .tensor import MaskLike

__all__ = ["FitOptions", "SirFit", "fit_sir", "default_beta_init"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_outer: int = 100
    beta_init: Optional[tuple] = None
    n_starts: int = 1
    seed: int = 0
    polish: bool = True
    polish_max: int = 25
    glm_tol: float = 1e-10


@dataclass(frozen=True, eq=False)
class SirFit:
    params: ParameterSet
    raw_params: ParameterSet
    loglik: float
    loglik_trace: tuple
    outer_iterations: int
    converged: bool
    glm_alpha: GlmFit
    glm_beta: GlmFit
    n_obs: int
    keep: np.ndarray
    names: tuple
    polish_trace: tuple = ()
    start_logliks: tuple = ()
    start_spread: float = 0.0
    options: FitOptions = field(default_factory=FitOptions)

    @property
    def mask(self) -> np.ndarray:
        """Boolean exclusion mask accepted by the prediction functions."""
        return ~self.keep

    def trace_is_monotone(self, rtol: float = 1e-9) -> bool:
        tr = np.asarray(self.loglik_trace + self.polish_trace)
        return bool(np.all(np.diff(tr) >= -rtol * np.abs(tr[1:])))


def default_beta_init(p: int) -> np.ndarray:
    return np.ones(p) / np.sqrt(p)


def _random_sphere(rng, p):
    v = rng.standard_normal(p)
    return v / np.linalg.norm(v)


class _Problem:
    """Flattened view of the observed cells, shared by both half-steps."""

    def __init__(self, data: NetworkData, keep: np.ndarray):
        self.data = data
        t, i, j = np.nonzero(np.moveaxis(keep, 2, 0))
        self.cells = (i, j, t)
        self.y = data.y.response[i, j, t]
        self.Z = data.Z.values[i, j, t]
        theta_n, alpha_n, beta_n = data.param_names()
        self.names_a = theta_n + alpha_n
        self.names_b = theta_n + beta_n

    def design_alpha(self, beta):
        V = collapse_beta(self.data.x, self.data.Ws, self.data.Wr, beta)
        return np.concatenate([self.Z, V[self.cells]], axis=1)

    def design_beta(self, alpha):
        U = collapse_alpha(self.data.x, self.data.Ws, self.data.Wr, alpha)
        return np.concatenate([self.Z, U[self.cells]], axis=1)


def _half_step(label, X, y, init, names, tol):
    try:
        return fit_poisson(X, y, init=init, names=names, tol=tol)
    except SirError as exc:
        exc.args = (f"{label}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def _alternate(prob: _Problem, beta0, opts: FitOptions):
    q = prob.data.q
    theta = alpha = None
    beta = np.asarray(beta0, dtype=float)
    trace = []
    converged = False
    prev = None
    it = 0
    g1 = g2 = None
    for it in range(1, opts.max_outer + 1):
        init = None if alpha is None else np.concatenate([theta, alpha])
        g1 = _half_step(
            "half-step (theta, alpha | beta)",
            prob.design_alpha(beta), prob.y, init, prob.names_a, opts.glm_tol,
        )
        theta, alpha = g1.coefficients[:q], g1.coefficients[q:]
        trace.append(g1.loglik)
        g2 = _half_step(
            "half-step (theta, beta | alpha)",
            prob.design_beta(alpha), prob.y, np.concatenate([theta, beta]),
            prob.names_b, opts.glm_tol,
        )
        theta, beta = g2.coefficients[:q], g2.coefficients[q:]
        trace.append(g2.loglik)
        ll = g2.loglik
        if prev is not None and abs(ll - prev) <= opts.tol * max(abs(ll), 1.0):
            converged = True
            break
        prev = ll
    return ParameterSet(theta, alpha, beta), trace, it, converged, g1, g2


def _polish(params: ParameterSet, data: NetworkData, keep, opts: FitOptions):
    """Joint Newton refinement in the identifiable coordinates.

    Alternation converges linearly in the cross-block direction; a few joint
    Newton steps bring the full score to round-off level. Steps are only taken
    when they increase the log-likelihood.
    """
    q, ps = data.q, data.Ws.p
    ll = loglik(params, data, ~keep)
    trace = []
    for _ in range(opts.polish_max):
        d = derivatives(params, data, ~keep)
        s = d.score
        try:
            L = np.linalg.cholesky(-d.hessian)
        except np.linalg.LinAlgError:
            log.debug("polish skipped: Hessian not negative definite")
            break
        step = np.linalg.solve(L.T, np.linalg.solve(L, s))
        psi = params.psi
        improved = False
        for _ in range(30):
            cand = ParameterSet.from_psi(psi + step, q, ps)
            ll_c = loglik(cand, data, ~keep)
            if ll_c >= ll:
                improved = True
                break
            step = step / 2.0
        if not improved:
            break
        gain = ll_c - ll
        params, ll = cand, ll_c
        trace.append(ll)
        if gain <= 1e-15 * max(abs(ll), 1.0) or np.max(np.abs(step)) < 1e-13:
            break
    return params, trace


def fit_sir(
    data: NetworkData,
    mask: MaskLike = None,
    options: Optional[FitOptions] = None,
) -> SirFit:
    """Fit the influence regression by alternating conditional Poisson MLEs.

    Parameters
    ----------
    data : NetworkData
    mask : period indices or boolean cell mask, optional
        Cells excluded from the likelihood (held-out or missing).
    options : FitOptions, optional

    Returns
    -------
    SirFit
        Canonical parameters (first sender coefficient equal to one) and the
        log-likelihood after every half-step.
    """
    opts = options or FitOptions()
    keep = data.keep(mask)
    ps, pr, q = data.Ws.p, data.Wr.p, data.q
    n_obs = int(keep.sum())
    if n_obs < q + ps + pr:
        raise InputError(f"only {n_obs} observations for {q + ps + pr - 1} free parameters")
    if not data.y.is_integral():
        raise InputError("Poisson response must be integer counts")
    if opts.n_starts < 1:
        raise InputError("n_starts must be at least 1")

    if opts.beta_init is not None:
        beta0 = np.asarray(opts.beta_init, dtype=float)
        if beta0.shape != (pr,):
            raise InputError(f"beta_init must have length {pr}")
    else:
        beta0 = default_beta_init(pr)
    if not np.any(beta0 != 0):
        raise InputError("beta_init must be nonzero; a zero start makes alpha inestimable")

    rng = np.random.default_rng(opts.seed)
    starts = [beta0] + [_random_sphere(rng, pr) for _ in range(opts.n_starts - 1)]
    prob = _Problem(data, keep)
    runs = []
    for b0 in starts:
        raw, trace, it, converged, g1, g2 = _alternate(prob, b0, opts)
        try:
            canon = canonicalize(raw)
        except IdentifiabilityError:
            if len(starts) == 1:
                raise
            log.warning("start %d ended on a non-identifiable direction", len(runs))
            continue
        polish_trace = []
        if opts.polish:
            canon, polish_trace = _polish(canon, data, keep, opts)
        final = polish_trace[-1] if polish_trace else trace[-1]
        runs.append((final, canon, raw, trace, it, converged, g1, g2, polish_trace))
    if not runs:
        raise IdentifiabilityError("every start ended with a zero first sender coefficient")

    best = max(range(len(runs)), key=lambda k: runs[k][0])
    final, canon, raw, trace, it, converged, g1, g2, polish_trace = runs[best]
    spread = 0.0
    if len(runs) > 1:
        spread = float(max(np.max(np.abs(r[1].psi - canon.psi)) for r in runs))
        if spread > 1e-6:
            log.warning("multi-start fits disagree: max canonical difference %.3g", spread)

    theta_n, alpha_n, beta_n = data.param_names()
    return SirFit(
        params=canon,
        raw_params=raw,
        loglik=final,
        loglik_trace=tuple(trace),
        outer_iterations=it,
        converged=converged,
        glm_alpha=g1,
        glm_beta=g2,
        n_obs=n_obs,
        keep=keep,
        names=(theta_n, alpha_n, beta_n),
        polish_trace=tuple(polish_trace),
        start_logliks=tuple(r[0] for r in runs),
        start_spread=spread,
        options=opts,
    )
