import numpy as np
import pytest

import sirnet.fit as fit_module
from sirnet.design import DirectDesign, InfluenceDesign
from sirnet.model import NetworkData
from sirnet.sim import default_config, simulate
from sirnet.tensor import DyadTensor

MONOTONE_RTOL = 1e-9
FITS_CHECKED = {"n": 0}


def assert_monotone(trace, rtol=MONOTONE_RTOL):
    tr = np.asarray(trace, dtype=float)
    drops = np.diff(tr) < -rtol * np.abs(tr[1:])
    assert not drops.any(), f"log-likelihood trace decreases: {tr}"


@pytest.fixture(autouse=True)
def _monotone_guard(monkeypatch):
    """Every alternating run anywhere in the suite must have a nondecreasing trace."""
    original = fit_module._alternate

    def checked(*args, **kwargs):
        out = original(*args, **kwargs)
        assert_monotone(out[1])
        FITS_CHECKED["n"] += 1
        return out

    monkeypatch.setattr(fit_module, "_alternate", checked)
    yield


def random_problem(rng, n, T, p, q, shared=False, scale=0.3):
    """Random counts and designs; small influence scale keeps rates moderate."""
    Y = rng.poisson(2.0, size=(n, n, T)).astype(float)
    y = DyadTensor(Y)
    Z = rng.standard_normal((n, n, T - 1, q))
    Z[..., 0] = 1.0
    Zd = DirectDesign(Z, tuple(f"z{k}" for k in range(q)), intercept=True)
    Ws = InfluenceDesign(scale * rng.standard_normal((n, n, T - 1, p)), tuple(f"w{k}" for k in range(p)))
    Wr = Ws if shared else InfluenceDesign(
        scale * rng.standard_normal((n, n, T - 1, p)), tuple(f"v{k}" for k in range(p)), "receiver"
    )
    return NetworkData(y, Zd, Ws, Wr)


@pytest.fixture(scope="session")
def sim_small():
    return simulate(default_config(n=8, T=40, seed=11))


@pytest.fixture(scope="session")
def sim_medium():
    return simulate(default_config(n=10, T=60, seed=5))


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
