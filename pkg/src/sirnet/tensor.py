"""Longitudinal dyadic arrays and the lag/log predictor transform.

Arrays are stored actor-major, ``values[i, j, t]`` being the count sent by
actor ``i`` to actor ``j`` in period ``t``. Diagonal cells are undefined and
held as NaN in a :class:`DyadTensor`; in a :class:`PredictorTensor` they are
held as 0 so that bilinear sums over sender/receiver pairs skip them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InputError

__all__ = [
    "DyadTensor",
    "PredictorTensor",
    "ObservationIndex",
    "lag_log_transform",
    "flatten",
    "unflatten",
    "observed_mask",
    "offdiag_mask",
]


def offdiag_mask(n: int) -> np.ndarray:
    """Boolean ``n x n`` matrix, True off the diagonal."""
    return ~np.eye(n, dtype=bool)


@dataclass(frozen=True, eq=False)
class DyadTensor:
    """An ``n x n x T`` array of nonnegative dyadic counts.

    Parameters
    ----------
    values : array_like, shape (n, n, T)
        Dyadic values. Whatever is on the diagonal is discarded.
    actors : sequence of str, optional
        Actor labels; defaults to ``"0" ... "n-1"``.
    periods : sequence of str, optional
        Period labels, oldest first; defaults to ``"0" ... "T-1"``.
    """

    values: np.ndarray
    actors: tuple = ()
    periods: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise InputError(f"dyadic array must have shape (n, n, T), got {v.shape}")
        n, _, T = v.shape
        if n < 2:
            raise InputError("need at least 2 actors")
        if T < 2:
            raise InputError("need at least 2 periods")
        off = offdiag_mask(n)
        cells = v[off]
        if not np.all(np.isfinite(cells)):
            raise InputError("off-diagonal values must be finite")
        if np.any(cells < 0):
            raise InputError("off-diagonal values must be nonnegative")
        v[~off] = np.nan
        v.setflags(write=False)
        actors = tuple(str(a) for a in self.actors) or tuple(str(i) for i in range(n))
        periods = tuple(str(p) for p in self.periods) or tuple(str(t) for t in range(T))
        if len(actors) != n or len(set(actors)) != n:
            raise InputError("actor labels must be unique and match the array size")
        if len(periods) != T:
            raise InputError("period labels must match the number of periods")
        if len(set(periods)) != T:
            raise InputError("period labels must be unique")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "actors", actors)
        object.__setattr__(self, "periods", periods)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[2]

    @property
    def response(self) -> np.ndarray:
        """Responses for the modeled periods ``1 .. T-1``, shape (n, n, T-1)."""
        return self.values[:, :, 1:]

    def is_integral(self) -> bool:
        cells = self.values[offdiag_mask(self.n)]
        return bool(np.all(cells == np.round(cells)))


@dataclass(frozen=True, eq=False)
class PredictorTensor:
    """Lagged predictors ``log(y[:, :, t-1] + 1)`` aligned with modeled periods.

    Slice ``s`` predicts response period ``s + 1`` of the source tensor.
    The diagonal is held at 0.
    """

    values: np.ndarray
    periods: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise InputError(f"predictor array must have shape (n, n, T-1), got {v.shape}")
        n = v.shape[0]
        v[~offdiag_mask(n)] = 0.0
        if not np.all(np.isfinite(v)):
            raise InputError("predictor values must be finite")
        v.setflags(write=False)
        periods = tuple(str(p) for p in self.periods) or tuple(
            str(t) for t in range(v.shape[2])
        )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "periods", periods)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[2]

    def with_slice(self, s: int, counts: np.ndarray) -> "PredictorTensor":
        """Copy with slice ``s`` replaced by ``log(counts + 1)``."""
        v = np.array(self.values)
        v[:, :, s] = np.log1p(np.nan_to_num(counts, nan=0.0))
        return PredictorTensor(v, self.periods)


def lag_log_transform(y: DyadTensor) -> PredictorTensor:
    """Build ``x[:, :, s] = log(y[:, :, s] + 1)`` for ``s = 0 .. T-2``.

    The result has one slice per modeled response period ``1 .. T-1``.
    """
    if y.T < 2:
        raise InputError("lag transform needs at least 2 periods")
    lagged = np.nan_to_num(y.values[:, :, :-1], nan=0.0)
    return PredictorTensor(np.log1p(lagged), y.periods[1:])


@dataclass(frozen=True, eq=False)
class ObservationIndex:
    """Flat enumeration of modeled off-diagonal cells.

    Ordering is period-major, then sender, then receiver. ``t`` indexes the
    modeled periods (0 .. T-2), not the raw periods of the source tensor.
    """

    t: np.ndarray
    i: np.ndarray
    j: np.ndarray
    shape: tuple

    def __len__(self) -> int:
        return len(self.t)

    def cells(self):
        return self.i, self.j, self.t


MaskLike = Union[None, Iterable[int], np.ndarray]


def observed_mask(n: int, n_periods: int, mask: MaskLike = None) -> np.ndarray:
    """Boolean (n, n, n_periods) array of cells that enter the likelihood.

    ``mask`` is either a collection of modeled-period indices to exclude or a
    boolean array of the full shape where True marks an excluded cell.
    """
    keep = np.broadcast_to(offdiag_mask(n)[:, :, None], (n, n, n_periods)).copy()
    if mask is None:
        return keep
    if isinstance(mask, np.ndarray) and mask.dtype == bool:
        if mask.shape != keep.shape:
            raise InputError(f"cell mask must have shape {keep.shape}, got {mask.shape}")
        return keep & ~mask
    periods = sorted(set(int(s) for s in mask))
    for s in periods:
        if not 0 <= s < n_periods:
            raise InputError(f"masked period {s} outside modeled range 0..{n_periods - 1}")
    keep[:, :, periods] = False
    return keep


def flatten(y: DyadTensor, mask: MaskLike = None):
    """Enumerate the modeled response cells.

    Returns
    -------
    index : ObservationIndex
    response : ndarray
        Response values ordered to match ``index``.
    """
    n, n_periods = y.n, y.T - 1
    keep = observed_mask(n, n_periods, mask)
    # period-major ordering: move t to the front before nonzero()
    t, i, j = np.nonzero(np.moveaxis(keep, 2, 0))
    index = ObservationIndex(t, i, j, (n, n, n_periods))
    return index, y.response[i, j, t]


def unflatten(index: ObservationIndex, values: Sequence[float]) -> np.ndarray:
    """Scatter flat values back to an (n, n, T-1) array, NaN elsewhere."""
    out = np.full(index.shape, np.nan)
    out[index.i, index.j, index.t] = np.asarray(values, dtype=float)
    return out

