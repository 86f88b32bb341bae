"""Model data bundle, parameters, prediction and likelihood derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .design import (
    DirectDesign,
    InfluenceDesign,
    collapse_alpha,
    collapse_beta,
    influence_cross_sum,
)
from .errors import DimensionError, IdentifiabilityError, InputError
from .tensor import DyadTensor, MaskLike, PredictorTensor, lag_log_transform, observed_mask

__all__ = [
    "NetworkData",
    "ParameterSet",
    "canonicalize",
    "linear_predictor",
    "predict_mu",
    "loglik",
    "Derivatives",
    "derivatives",
]

IDENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NetworkData:
    """Response tensor together with its designs and lagged predictors.

    ``Wr`` defaults to ``Ws`` (one shared influence design with separate
    sender and receiver coefficients). ``x`` defaults to the lag/log transform
    of ``y``.
    """

    y: DyadTensor
    Z: DirectDesign
    Ws: InfluenceDesign
    Wr: Optional[InfluenceDesign] = None
    x: Optional[PredictorTensor] = None

    def __post_init__(self):
        if self.Wr is None:
            object.__setattr__(self, "Wr", self.Ws)
        if self.x is None:
            object.__setattr__(self, "x", lag_log_transform(self.y))
        shape = (self.y.n, self.y.n, self.y.T - 1)
        for what, arr in (("Z", self.Z.values), ("Ws", self.Ws.values), ("Wr", self.Wr.values)):
            if arr.shape[:3] != shape:
                raise DimensionError(f"{what} has shape {arr.shape[:3]}, expected {shape}")
        if self.x.values.shape != shape:
            raise DimensionError(f"predictors have shape {self.x.values.shape}, expected {shape}")

    @property
    def n_periods(self) -> int:
        return self.y.T - 1

    @property
    def q(self) -> int:
        return self.Z.q

    @property
    def shared(self) -> bool:
        return self.Wr is self.Ws

    def keep(self, mask: MaskLike = None) -> np.ndarray:
        return observed_mask(self.y.n, self.n_periods, mask)

    def with_x(self, x: PredictorTensor) -> "NetworkData":
        """Swap in different lagged predictors; lagged-response columns of Z follow."""
        return NetworkData(self.y, self.Z.refresh(x), self.Ws, self.Wr, x)

    def param_names(self):
        theta = tuple(self.Z.names)
        alpha = tuple(f"alpha:{nm}" for nm in self.Ws.names)
        beta = tuple(f"beta:{nm}" for nm in self.Wr.names)
        return theta, alpha, beta


@dataclass(frozen=True, eq=False)
class ParameterSet:
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("theta", "alpha", "beta"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(v)):
                raise InputError(f"{name} must be finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def rescale(self, c: float) -> "ParameterSet":
        """Equivalent parameters ``(theta, alpha / c, c * beta)``."""
        return ParameterSet(self.theta, self.alpha / c, self.beta * c)

    @property
    def psi(self) -> np.ndarray:
        """Identifiable coordinates ``(theta, alpha[1:], beta)``; assumes canonical form."""
        return np.concatenate([self.theta, self.alpha[1:], self.beta])

    @classmethod
    def from_psi(cls, psi, q: int, p_sender: int) -> "ParameterSet":
        psi = np.asarray(psi, dtype=float)
        theta = psi[:q]
        alpha = np.concatenate([[1.0], psi[q : q + p_sender - 1]])
        beta = psi[q + p_sender - 1 :]
        return cls(theta, alpha, beta)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("theta", "alpha", "beta")}


def canonicalize(params: ParameterSet, tol: float = IDENT_TOL) -> ParameterSet:
    """Rescale so that the first sender coefficient equals one."""
    a1 = params.alpha[0]
    if abs(a1) < tol:
        raise IdentifiabilityError(
            f"first sender coefficient is {a1:.3g}; cannot normalize by it. "
            "Reorder the influence covariates so that one with a clearly nonzero "
            "effect comes first."
        )
    return params.rescale(a1)


def _check_params(params: ParameterSet, data: NetworkData):
    if params.theta.size != data.q or params.alpha.size != data.Ws.p or params.beta.size != data.Wr.p:
        raise DimensionError(
            f"parameter lengths ({params.theta.size}, {params.alpha.size}, {params.beta.size}) "
            f"do not match designs ({data.q}, {data.Ws.p}, {data.Wr.p})"
        )


def linear_predictor(params: ParameterSet, data: NetworkData) -> np.ndarray:
    """``theta . z_ijt + alpha . (Xt_ijt beta)`` for all cells, shape (n, n, T-1)."""
    _check_params(params, data)
    V = collapse_beta(data.x, data.Ws, data.Wr, params.beta)
    return data.Z.values @ params.theta + V @ params.alpha


def predict_mu(params: ParameterSet, data: NetworkData, mask: MaskLike = None) -> np.ndarray:
    """Poisson rates ``exp(eta)`` on unmasked off-diagonal cells, NaN elsewhere."""
    eta = linear_predictor(params, data)
    keep = data.keep(mask)
    return np.where(keep, np.exp(np.where(keep, eta, 0.0)), np.nan)


def loglik(params: ParameterSet, data: NetworkData, mask: MaskLike = None) -> float:
    keep = data.keep(mask)
    eta = linear_predictor(params, data)[keep]
    y = data.y.response[keep]
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))


@dataclass(frozen=True, eq=False)
class Derivatives:
    """Per-observation scores and the total Hessian in ``psi`` coordinates."""

    scores: np.ndarray       # (N, d)
    hessian: np.ndarray      # (d, d)
    gradient_eta: np.ndarray  # (N, d): d eta / d psi
    mu: np.ndarray
    y: np.ndarray
    names: tuple = field(default=())

    @property
    def score(self) -> np.ndarray:
        return self.scores.sum(axis=0)


def derivatives(params: ParameterSet, data: NetworkData, mask: MaskLike = None) -> Derivatives:
    """Score and Hessian of the log-likelihood for ``psi = (theta, alpha[1:], beta)``.

    ``params`` must be canonical. The chain rule from the unconstrained
    parameterization simply drops the ``alpha[0]`` coordinate. The Hessian is
    ``-sum mu g g^T`` plus the residual-weighted bilinear cross block
    ``sum (y - mu) Xt_ijt`` between ``alpha[1:]`` and ``beta``.
    """
    _check_params(params, data)
    if params.alpha[0] != 1.0:
        raise InputError("derivatives require canonical parameters (alpha[0] == 1)")
    keep = data.keep(mask)
    V = collapse_beta(data.x, data.Ws, data.Wr, params.beta)
    U = collapse_alpha(data.x, data.Ws, data.Wr, params.alpha)
    eta_full = data.Z.values @ params.theta + V @ params.alpha
    flat = np.moveaxis(keep, 2, 0)
    t, i, j = np.nonzero(flat)
    G = np.concatenate(
        [data.Z.values[i, j, t], V[i, j, t, 1:], U[i, j, t]], axis=1
    )
    mu = np.exp(eta_full[i, j, t])
    y = data.y.response[i, j, t]
    r = y - mu
    scores = r[:, None] * G
    H = -(G * mu[:, None]).T @ G
    q, ps = data.q, data.Ws.p
    if ps > 1:
        R = np.zeros(keep.shape)
        R[i, j, t] = r
        cross = influence_cross_sum(data.x, data.Ws, data.Wr, R)[1:, :]
        a0, b0 = q, q + ps - 1
        H[a0:b0, b0:] += cross
        H[b0:, a0:b0] += cross.T
    H = 0.5 * (H + H.T)
    theta_n, alpha_n, beta_n = data.param_names()
    names = theta_n + alpha_n[1:] + beta_n
    return Derivatives(scores, H, G, mu, y, names)
