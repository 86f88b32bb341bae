"""Direct-effect and influence designs, and the collapsed bilinear covariates.

For a modeled period ``t`` the collapsed regressor matrix of cell ``(i, j)`` is

    Xt_ij = sum_{a != b} x[a, b, t] * Ws[i, a, t, :] outer Wr[j, b, t, :]

The model's influence term is ``alpha @ Xt_ij @ beta``. ``Xt_ij`` is never
materialized for all cells; the two half-step covariates ``Xt_ij @ beta`` and
``Xt_ij.T @ alpha`` factor through ``n x n`` matrix products per period.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError
from .tensor import PredictorTensor, offdiag_mask

__all__ = [
    "DirectDesign",
    "InfluenceDesign",
    "collapse_beta",
    "collapse_alpha",
    "collapse_full",
    "influence_matrices",
    "influence_scores",
    "influence_cross_sum",
]

LAG_KINDS = ("lag", "reciprocal")


@dataclass(frozen=True, eq=False)
class DirectDesign:
    """Direct-effect covariates ``z[i, j, t, :]`` of length ``q``.

    ``lag_terms`` maps a column name to ``"lag"`` (``log(y_ij,t-1 + 1)``) or
    ``"reciprocal"`` (``log(y_ji,t-1 + 1)``). Those columns are functions of
    the predictor tensor and are rebuilt by :meth:`refresh` when forecasts
    are chained through the lag.
    """

    values: np.ndarray
    names: tuple
    intercept: bool = False
    lag_terms: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 4 or v.shape[0] != v.shape[1]:
            raise DimensionError(f"direct design must be (n, n, T-1, q), got {v.shape}")
        names = tuple(self.names)
        if len(names) != v.shape[3] or len(set(names)) != len(names):
            raise InputError("direct design needs one unique name per column")
        n = v.shape[0]
        v[~offdiag_mask(n)] = 0.0
        if not np.all(np.isfinite(v)):
            raise InputError("direct design contains non-finite values")
        if self.intercept and not np.all(v[offdiag_mask(n)][:, :, 0] == 1.0):
            raise InputError("intercept flag set but first column is not all ones")
        for name, kind in self.lag_terms.items():
            if name not in names or kind not in LAG_KINDS:
                raise InputError(f"bad lag term {name!r}: {kind!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lag_terms", dict(self.lag_terms))

    @property
    def q(self) -> int:
        return self.values.shape[3]

    @property
    def n_periods(self) -> int:
        return self.values.shape[2]

    @classmethod
    def intercept_only(cls, n: int, n_periods: int) -> "DirectDesign":
        return cls(np.ones((n, n, n_periods, 1)), ("intercept",), intercept=True)

    def refresh(self, x: PredictorTensor) -> "DirectDesign":
        """Recompute the lagged-response columns from ``x``."""
        if not self.lag_terms:
            return self
        v = np.array(self.values)
        xv = x.values
        for name, kind in self.lag_terms.items():
            k = self.names.index(name)
            v[:, :, :, k] = xv if kind == "lag" else xv.transpose(1, 0, 2)
        return DirectDesign(v, self.names, self.intercept, self.lag_terms)


@dataclass(frozen=True, eq=False)
class InfluenceDesign:
    """Influence covariates ``w[i, i2, t, :]`` of length ``p``.

    Self-pairs ``w[i, i, t]`` are defined: they carry the autoregressive
    channel of the influence matrix.
    """

    values: np.ndarray
    names: tuple
    side: str = "both"

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 4 or v.shape[0] != v.shape[1]:
            raise DimensionError(f"influence design must be (n, n, T-1, p), got {v.shape}")
        names = tuple(self.names)
        if len(names) != v.shape[3] or len(set(names)) != len(names):
            raise InputError("influence design needs one unique name per column")
        if not np.all(np.isfinite(v)):
            raise InputError("influence design contains non-finite values")
        if self.side not in ("sender", "receiver", "both"):
            raise InputError(f"unknown influence side {self.side!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @property
    def p(self) -> int:
        return self.values.shape[3]

    @property
    def n_periods(self) -> int:
        return self.values.shape[2]


def _xvals(x) -> np.ndarray:
    if isinstance(x, PredictorTensor):
        return x.values
    v = np.array(x, dtype=float)
    v[~offdiag_mask(v.shape[0])] = 0.0
    return v


def _check(xv, Ws, Wr):
    if Ws.values.shape[:3] != xv.shape or Wr.values.shape[:3] != xv.shape:
        raise DimensionError(
            f"designs {Ws.values.shape[:3]} / {Wr.values.shape[:3]} "
            f"do not match predictors {xv.shape}"
        )


def _tfirst(a: np.ndarray) -> np.ndarray:
    """(n, n, T, ...) -> (T, n, n, ...)"""
    return np.moveaxis(a, 2, 0)


def _coef(coef, size, what):
    c = np.asarray(coef, dtype=float).reshape(-1)
    if c.shape != (size,):
        raise DimensionError(f"{what} has length {c.size}, expected {size}")
    if not np.all(np.isfinite(c)):
        raise InputError(f"{what} must be finite")
    return c


def influence_matrices(W: InfluenceDesign, coef) -> np.ndarray:
    """All influence matrices ``W @ coef`` stacked as (T-1, n, n)."""
    c = _coef(coef, W.p, "coefficient vector")
    return _tfirst(W.values) @ c


def influence_scores(W: InfluenceDesign, coef, t: int) -> np.ndarray:
    """Influence matrix at modeled period ``t``: entry ``(i, i2) = coef @ w[i, i2, t]``."""
    if not 0 <= t < W.n_periods:
        raise InputError(f"period {t} outside modeled range 0..{W.n_periods - 1}")
    c = _coef(coef, W.p, "coefficient vector")
    return W.values[:, :, t, :] @ c


def collapse_beta(x, Ws: InfluenceDesign, Wr: InfluenceDesign, beta) -> np.ndarray:
    """``Xt_ij @ beta`` for every cell, shape (n, n, T-1, p_sender).

    Uses ``sum_a Ws[i, a, :] * (X_t B_t^T)[a, j]`` with ``B_t = Wr_t @ beta``,
    which costs O(n^3 p) per period.
    """
    xv = _xvals(x)
    _check(xv, Ws, Wr)
    B = influence_matrices(Wr, beta)                    # (T, n, n)
    M = _tfirst(xv) @ B.transpose(0, 2, 1)              # (T, n, n): X_t B_t^T
    Wt = _tfirst(Ws.values)                             # (T, n, n, p)
    out = np.empty(Wt.shape)
    for k in range(Ws.p):
        out[..., k] = Wt[..., k] @ M
    return np.moveaxis(out, 0, 2)


def collapse_alpha(x, Ws: InfluenceDesign, Wr: InfluenceDesign, alpha) -> np.ndarray:
    """``Xt_ij.T @ alpha`` for every cell, shape (n, n, T-1, p_receiver)."""
    xv = _xvals(x)
    _check(xv, Ws, Wr)
    A = influence_matrices(Ws, alpha)                   # (T, n, n)
    M = A @ _tfirst(xv)                                 # (T, n, n): A_t X_t
    Wt = _tfirst(Wr.values)
    out = np.empty(Wt.shape)
    for k in range(Wr.p):
        out[..., k] = M @ Wt[..., k].transpose(0, 2, 1)
    return np.moveaxis(out, 0, 2)


def collapse_full(x, Ws: InfluenceDesign, Wr: InfluenceDesign, i: int, j: int, t: int):
    """Explicit ``p_sender x p_receiver`` matrix ``Xt_ij`` for one cell."""
    xv = _xvals(x)
    _check(xv, Ws, Wr)
    n = xv.shape[0]
    if not (0 <= i < n and 0 <= j < n and 0 <= t < xv.shape[2]):
        raise InputError(f"cell ({i}, {j}, {t}) out of range")
    return Ws.values[i, :, t, :].T @ xv[:, :, t] @ Wr.values[j, :, t, :]


def influence_cross_sum(x, Ws: InfluenceDesign, Wr: InfluenceDesign, weights) -> np.ndarray:
    """``sum_{i,j,t} weights[i, j, t] * Xt_ij`` without forming any ``Xt_ij``.

    ``weights`` is (n, n, T-1); NaN entries count as zero.
    """
    xv = _xvals(x)
    _check(xv, Ws, Wr)
    R = _tfirst(np.nan_to_num(np.asarray(weights, dtype=float), nan=0.0))
    Xt = _tfirst(xv)
    Wst, Wrt = _tfirst(Ws.values), _tfirst(Wr.values)
    out = np.empty((Ws.p, Wr.p))
    # sum_i Ws[i,a,k] r_ij sum_b x_ab Wr[j,b,l]  ==  <Ws_k^T R, X Wr_l^T>
    left = [Wst[..., k].transpose(0, 2, 1) @ R for k in range(Ws.p)]
    for l in range(Wr.p):
        right = Xt @ Wrt[..., l].transpose(0, 2, 1)
        for k in range(Ws.p):
            out[k, l] = np.sum(left[k] * right)
    return out


def broadcast_static(values: np.ndarray, n_periods: int) -> np.ndarray:
    """Repeat an (n, n, k) static covariate block across ``n_periods``."""
    v = np.asarray(values, dtype=float)
    return np.repeat(v[:, :, None, :], n_periods, axis=2)


def stack_columns(columns: Sequence[np.ndarray]) -> np.ndarray:
    """Stack (n, n, T) columns into an (n, n, T, k) design block."""
    return np.stack([np.asarray(c, dtype=float) for c in columns], axis=3)
