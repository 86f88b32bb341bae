"""Synthetic data from the influence-regression data-generating process."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .design import DirectDesign, InfluenceDesign
from .errors import InputError, SimulationUnstableError
from .model import NetworkData, ParameterSet
from .periods import month_labels
from .tensor import DyadTensor, offdiag_mask

__all__ = [
    "CovariateSpec",
    "SimConfig",
    "SimResult",
    "simulate",
    "StabilityDiagnostic",
    "stability_check",
    "default_config",
]

KINDS = ("intercept", "ones", "zero", "identity", "normal", "ar1")


@dataclass(frozen=True)
class CovariateSpec:
    """One covariate process.

    ``normal`` draws i.i.d. N(0, scale^2) entries frozen over time; ``ar1``
    evolves each entry as a stationary AR(1) with coefficient ``rho``.
    ``identity`` is the self-pair indicator ``1{i == i2}``.
    """

    name: str
    kind: str = "normal"
    scale: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "ar1" and not -1 < self.rho < 1:
            raise InputError("ar1 covariates need |rho| < 1")


@dataclass(frozen=True)
class SimConfig:
    n: int
    T: int
    theta: tuple
    alpha: tuple
    beta: tuple
    direct: tuple = (CovariateSpec("intercept", "intercept"), CovariateSpec("z1"))
    influence: tuple = (CovariateSpec("self", "identity"), CovariateSpec("w1"))
    receiver: Optional[tuple] = None   # None: receiver side shares the sender design
    seed: int = 0
    burn_in: int = 20
    guard: float = 20.0
    start: str = "2000-01"

    def __post_init__(self):
        if self.n < 2 or self.T < 2:
            raise InputError("simulation needs n >= 2 and T >= 2")
        if self.burn_in < 1:
            raise InputError("burn_in must be at least 1")
        if len(self.theta) != len(self.direct):
            raise InputError("theta length must match the direct covariates")
        if len(self.alpha) != len(self.influence):
            raise InputError("alpha length must match the sender covariates")
        if len(self.beta) != len(self.receiver or self.influence):
            raise InputError("beta length must match the receiver covariates")
        a = np.asarray(self.alpha, dtype=float)
        if np.any(a != 0) and a[0] != 1.0:
            raise InputError("true alpha must be canonical (first element 1)")

    @property
    def params(self) -> ParameterSet:
        return ParameterSet(self.theta, self.alpha, self.beta)


@dataclass(frozen=True, eq=False)
class SimResult:
    data: NetworkData
    params: ParameterSet
    config: SimConfig
    max_eta: float

    @property
    def y(self):
        return self.data.y


def default_config(n=10, T=60, seed=0, **kw) -> SimConfig:
    """A stable two-covariate configuration with clear influence effects."""
    base = dict(
        theta=(0.3, 0.4),
        alpha=(1.0, 0.5),
        beta=(0.35, 0.2),
        influence=(CovariateSpec("self", "identity"), CovariateSpec("w1", scale=1.0 / np.sqrt(n))),
    )
    base.update(kw)
    return SimConfig(n=n, T=T, seed=seed, **base)


def _covariate_series(spec: CovariateSpec, n, length, rng) -> np.ndarray:
    """(n, n, length) realisation of one covariate process."""
    if spec.kind in ("intercept", "ones"):
        return np.ones((n, n, length))
    if spec.kind == "zero":
        return np.zeros((n, n, length))
    if spec.kind == "identity":
        return np.repeat(np.eye(n)[:, :, None], length, axis=2)
    if spec.kind == "normal":
        static = spec.scale * rng.standard_normal((n, n))
        return np.repeat(static[:, :, None], length, axis=2)
    out = np.empty((n, n, length))
    out[:, :, 0] = spec.scale * rng.standard_normal((n, n))
    innov = spec.scale * np.sqrt(1.0 - spec.rho**2)
    for k in range(1, length):
        out[:, :, k] = spec.rho * out[:, :, k - 1] + innov * rng.standard_normal((n, n))
    return out


def _block(specs, n, length, rng):
    return np.stack([_covariate_series(s, n, length, rng) for s in specs], axis=3)


def _run(config: SimConfig, check_guard: bool = True):
    """Generate the full path. Returns (Y, Z, Ws, Wr, max_eta, exploded)."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    total = config.burn_in + config.T
    Z = _block(config.direct, n, total, rng)
    Ws = _block(config.influence, n, total, rng)
    Wr = Ws if config.receiver is None else _block(config.receiver, n, total, rng)
    theta = np.asarray(config.theta, dtype=float)
    alpha = np.asarray(config.alpha, dtype=float)
    beta = np.asarray(config.beta, dtype=float)
    off = offdiag_mask(n)

    Y = np.zeros((n, n, total))
    max_eta = -np.inf
    exploded = False
    for tau in range(total):
        eta = Z[:, :, tau, :] @ theta
        if tau > 0:
            x = np.log1p(Y[:, :, tau - 1])
            x[~off] = 0.0
            A = Ws[:, :, tau, :] @ alpha
            B = Wr[:, :, tau, :] @ beta
            eta = eta + A @ x @ B.T
        top = float(np.max(eta[off]))
        max_eta = max(max_eta, top)
        if top > config.guard:
            exploded = True
            if check_guard:
                raise SimulationUnstableError(
                    f"linear predictor reached {top:.1f} (guard {config.guard}) in period "
                    f"{tau}; reduce the influence coefficients or lower the intercept"
                )
            break
        draw = rng.poisson(np.exp(np.where(off, eta, 0.0)))
        Y[:, :, tau] = np.where(off, draw, 0.0)
    return Y, Z, Ws, Wr, max_eta, exploded


def simulate(config: SimConfig) -> SimResult:
    """Draw ``y_t ~ Poisson(exp(theta.z_t + A_t x_t B_t^T))`` cell by cell.

    ``x_t = log(y_{t-1} + 1)`` with a zero diagonal. The first ``burn_in``
    periods are discarded. Covariates of modeled period ``s`` are those used
    to generate retained period ``s + 1``.
    """
    Y, Z, Ws, Wr, max_eta, _ = _run(config, check_guard=True)
    b, T = config.burn_in, config.T
    actors = [f"A{k:02d}" for k in range(config.n)]
    periods = month_labels(config.start, T)
    y = DyadTensor(Y[:, :, b : b + T], actors, periods)
    direct_names = tuple(s.name for s in config.direct)
    intercept = bool(config.direct) and config.direct[0].kind == "intercept"
    Zd = DirectDesign(Z[:, :, b + 1 : b + T], direct_names, intercept=intercept)
    Wsd = InfluenceDesign(
        Ws[:, :, b + 1 : b + T], tuple(s.name for s in config.influence),
        side="both" if config.receiver is None else "sender",
    )
    if config.receiver is None:
        Wrd = Wsd
    else:
        Wrd = InfluenceDesign(
            Wr[:, :, b + 1 : b + T], tuple(s.name for s in config.receiver), side="receiver"
        )
    return SimResult(NetworkData(y, Zd, Wsd, Wrd), config.params, config, max_eta)


@dataclass(frozen=True)
class StabilityDiagnostic:
    max_eta: float
    exploded: bool
    flagged: bool
    pilot_periods: int
    message: str = field(default="")


def stability_check(config: SimConfig, pilot_periods: int = 200, warn_level: float = 10.0):
    """Run a pilot path and report the largest linear predictor reached.

    A config is flagged when the pilot crosses the overflow guard or when the
    linear predictor exceeds ``warn_level`` (rates above ~e^10).
    """
    pilot = replace(config, T=max(pilot_periods, 2))
    _, _, _, _, max_eta, exploded = _run(pilot, check_guard=False)
    flagged = exploded or max_eta > warn_level
    if exploded:
        msg = "pilot run exploded: positive feedback through the lagged counts"
    elif flagged:
        msg = f"linear predictor reached {max_eta:.2f}; counts are implausibly large"
    else:
        msg = "stable"
    return StabilityDiagnostic(max_eta, exploded, flagged, pilot.T + pilot.burn_in, msg)
