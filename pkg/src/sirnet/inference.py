"""Hessian-based and sandwich covariance for the identifiable parameters.

The identifiable coordinates are ``psi = (theta, alpha[1:], beta)`` with the
first sender coefficient fixed at one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InputError, NotInvertibleError
from .fit import SirFit
from .glm import GlmFit
from .model import Derivatives, NetworkData, derivatives

__all__ = [
    "VcovResult",
    "score_and_hessian",
    "compute_vcov",
    "vcov_from_derivatives",
    "glm_derivatives",
    "compute_glm_vcov",
]

EIG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class VcovResult:
    vcov_hessian: np.ndarray
    vcov_sandwich: np.ndarray
    names: tuple
    estimate: Optional[np.ndarray] = None

    @property
    def se_hessian(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_hessian))

    @property
    def se_sandwich(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_sandwich))

    def confint(self, level: float = 0.95, kind: str = "sandwich") -> np.ndarray:
        """Wald intervals, shape (d, 2)."""
        from scipy.stats import norm

        if self.estimate is None:
            raise InputError("no point estimate attached")
        se = self.se_sandwich if kind == "sandwich" else self.se_hessian
        z = norm.ppf(0.5 + level / 2.0)
        return np.column_stack([self.estimate - z * se, self.estimate + z * se])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "se_hessian": self.se_hessian.tolist(),
            "se_sandwich": self.se_sandwich.tolist(),
            "vcov_hessian": self.vcov_hessian.tolist(),
            "vcov_sandwich": self.vcov_sandwich.tolist(),
        }


def score_and_hessian(fit: SirFit, data: NetworkData) -> Derivatives:
    """Per-observation scores and Hessian at the fitted canonical parameters."""
    if not fit.converged:
        raise ConvergenceError("inference requires a converged fit")
    return derivatives(fit.params, data, fit.mask)


def vcov_from_derivatives(
    scores: np.ndarray, hessian: np.ndarray, names=(), estimate=None
) -> VcovResult:
    """``(-H)^{-1}`` and ``H^{-1} S H^{-1}`` with ``S = sum_k s_k s_k^T``."""
    H = np.asarray(hessian, dtype=float)
    if np.max(np.abs(H - H.T)) > 1e-8 * max(1.0, np.max(np.abs(H))):
        raise InputError("Hessian is not symmetric")
    info = -0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= EIG_FLOOR * max(1.0, eig[-1]):
        raise NotInvertibleError(
            f"information matrix is not positive definite (smallest eigenvalue {eig[0]:.3g})",
            min_eigenvalue=float(eig[0]),
        )
    vh = np.linalg.inv(info)
    vh = 0.5 * (vh + vh.T)
    S = scores.T @ scores
    vs = vh @ S @ vh
    vs = 0.5 * (vs + vs.T)
    return VcovResult(vh, vs, tuple(names), None if estimate is None else np.asarray(estimate))


def compute_vcov(fit: SirFit, data: NetworkData) -> VcovResult:
    d = score_and_hessian(fit, data)
    return vcov_from_derivatives(d.scores, d.hessian, d.names, fit.params.psi)


def glm_derivatives(X, y, coefficients):
    """Per-observation scores and Hessian of a plain Poisson GLM."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = np.exp(X @ np.asarray(coefficients, dtype=float))
    scores = (y - mu)[:, None] * X
    H = -(X * mu[:, None]).T @ X
    return scores, H


def compute_glm_vcov(fit: GlmFit, X, y) -> VcovResult:
    scores, H = glm_derivatives(X, y, fit.coefficients)
    return vcov_from_derivatives(scores, H, fit.names, fit.coefficients)
