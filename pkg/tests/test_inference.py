import numpy as np
import pytest

from sirnet.design import collapse_alpha
from sirnet.errors import ConvergenceError, NotInvertibleError
from sirnet.fit import FitOptions, fit_sir
from sirnet.glm import fit_poisson
from sirnet.inference import (
    compute_glm_vcov,
    compute_vcov,
    glm_derivatives,
    score_and_hessian,
    vcov_from_derivatives,
)
from sirnet.model import ParameterSet, derivatives, loglik
from sirnet.sim import CovariateSpec, default_config, simulate

from conftest import random_problem


def test_intercept_only_closed_form():
    X = np.ones((3, 1))
    y = np.array([1.0, 2.0, 3.0])
    glm = fit_poisson(X, y)
    v = compute_glm_vcov(glm, X, y)
    assert v.vcov_hessian[0, 0] == pytest.approx(1 / 6, abs=1e-10)
    assert v.vcov_sandwich[0, 0] == pytest.approx(2 / 36, abs=1e-10)


def _ll_psi(psi, data, q, ps):
    return loglik(ParameterSet.from_psi(psi, q, ps), data)


@pytest.mark.parametrize("shared", [False, True])
def test_score_and_hessian_match_finite_differences(shared):
    rng = np.random.default_rng(7)
    data = random_problem(rng, 5, 5, 3, 2, shared=shared)
    params = ParameterSet(rng.normal(0, 0.3, 2), [1.0, *rng.normal(0, 0.5, 2)], rng.normal(0, 0.5, 3))
    d = derivatives(params, data)
    q, ps = data.q, data.Ws.p
    psi = params.psi
    h = 1e-6
    fd = np.empty_like(psi)
    fdH = np.empty((psi.size, psi.size))
    for k in range(psi.size):
        e = np.zeros_like(psi)
        e[k] = h
        fd[k] = (_ll_psi(psi + e, data, q, ps) - _ll_psi(psi - e, data, q, ps)) / (2 * h)
        gp = derivatives(ParameterSet.from_psi(psi + e, q, ps), data).score
        gm = derivatives(ParameterSet.from_psi(psi - e, q, ps), data).score
        fdH[:, k] = (gp - gm) / (2 * h)
    assert np.max(np.abs(d.score - fd)) < 1e-6 * max(1.0, np.max(np.abs(fd)))
    assert np.allclose(d.hessian, fdH, rtol=1e-5, atol=1e-5)


def test_score_vanishes_at_mle(sim_medium):
    fit = fit_sir(sim_medium.data)
    d = score_and_hessian(fit, sim_medium.data)
    assert np.linalg.norm(d.score) < 1e-6 * np.sqrt(fit.n_obs)


def test_vcov_symmetric_positive_definite(sim_medium):
    fit = fit_sir(sim_medium.data)
    v = compute_vcov(fit, sim_medium.data)
    for m in (v.vcov_hessian, v.vcov_sandwich):
        assert np.array_equal(m, m.T)
        assert np.linalg.eigvalsh(m)[0] > 0
    assert v.names == ("intercept", "z1", "alpha:w1", "beta:self", "beta:w1")
    ci = v.confint(0.95)
    assert np.all(ci[:, 0] < fit.params.psi) and np.all(fit.params.psi < ci[:, 1])


def test_single_influence_covariate_block_equals_glm_information():
    cfg = default_config(
        n=8, T=50, seed=2, alpha=(1.0,), beta=(0.5,),
        influence=(CovariateSpec("self", "identity"),),
    )
    data = simulate(cfg).data
    fit = fit_sir(data)
    d = score_and_hessian(fit, data)
    keep = data.keep()
    U = collapse_alpha(data.x, data.Ws, data.Wr, fit.params.alpha)
    X = np.concatenate([data.Z.values[keep], U[keep]], axis=1)
    coef = np.concatenate([fit.params.theta, fit.params.beta])
    _, H = glm_derivatives(X, data.y.response[keep], coef)
    assert np.allclose(d.hessian, H, rtol=1e-8, atol=0)


def test_singular_information_raises():
    scores = np.ones((4, 2))
    H = -np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotInvertibleError) as info:
        vcov_from_derivatives(scores, H)
    assert info.value.min_eigenvalue == pytest.approx(0.0, abs=1e-12)


def test_unconverged_fit_refused(sim_small):
    fit = fit_sir(sim_small.data, options=FitOptions(max_outer=1, polish=False))
    assert not fit.converged
    with pytest.raises(ConvergenceError):
        compute_vcov(fit, sim_small.data)


def test_sandwich_close_to_hessian_under_correct_model():
    data = simulate(default_config(n=15, T=100, seed=4)).data
    fit = fit_sir(data)
    v = compute_vcov(fit, data)
    ratio = v.se_sandwich / v.se_hessian
    assert np.mean(np.abs(ratio - 1) < 0.25) >= 0.9


@pytest.mark.slow
def test_wald_coverage():
    hits = []
    truth = None
    for seed in range(100):
        sim = simulate(default_config(n=8, T=60, seed=1000 + seed))
        truth = sim.params.psi
        fit = fit_sir(sim.data)
        ci = compute_vcov(fit, sim.data).confint(0.95)
        hits.append((ci[:, 0] <= truth) & (truth <= ci[:, 1]))
    cover = np.mean(hits, axis=0)
    assert np.all((cover >= 0.90) & (cover <= 0.99)), cover
