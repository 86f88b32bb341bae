import logging

import numpy as np
import pytest

from sirnet import io
from sirnet.errors import InputError
from sirnet.evaluation import (
    chained_forecast,
    fit_glm_baseline,
    make_cv_plan,
    run_cv,
    run_temporal_holdout,
    training_mask,
)
from sirnet.fit import fit_sir
from sirnet.model import NetworkData, predict_mu
from sirnet.scoring import score_forecast
from sirnet.sim import default_config, simulate
from sirnet.tensor import DyadTensor


@pytest.fixture(scope="module")
def sim_cv():
    return simulate(default_config(n=6, T=41, seed=21)).data


def test_plan_deterministic_and_disjoint():
    a = make_cv_plan(95, k=10, m=5, seed=3)
    b = make_cv_plan(95, k=10, m=5, seed=3)
    assert a == b
    assert not a.overlap
    flat = [s for f in a.folds for s in f]
    assert len(flat) == 50 == len(set(flat))
    assert all(len(f) == 5 and 0 <= min(f) and max(f) < 95 for f in a.folds)
    assert make_cv_plan(95, seed=4).folds != a.folds


def test_plan_overlap_fallback(caplog):
    with caplog.at_level(logging.WARNING):
        plan = make_cv_plan(20, k=10, m=5, seed=0)
    assert plan.overlap and "overlap" in caplog.text
    assert all(len(set(f)) == 5 for f in plan.folds)
    assert make_cv_plan(95, seed=0, overlap=True).overlap


@pytest.mark.parametrize("k, m, T", [(0, 5, 30), (10, 0, 30), (10, 30, 30)])
def test_plan_infeasible(k, m, T):
    with pytest.raises(InputError):
        make_cv_plan(T, k=k, m=m)


def test_training_mask_drops_lag_dependents():
    assert training_mask([2, 3, 9], 10) == [2, 3, 4, 9]


def test_cv_models_scored_on_identical_cells(sim_cv):
    rep = run_cv(sim_cv, k=3, m=4, seed=1)
    n = sim_cv.y.n
    for f in rep.folds:
        assert f.scores["sir"].n_cells == f.scores["glm"].n_cells == n * (n - 1) * 4
    assert set(rep.aggregate()) == {"sir", "glm"}
    again = run_cv(sim_cv, k=3, m=4, seed=1)
    assert io.dumps(rep.to_dict()) == io.dumps(again.to_dict())


def test_heldout_counts_never_reach_the_fit(sim_cv):
    heldout = [5, 6, 20]
    Y = np.array(sim_cv.y.values)
    for s in heldout:
        Y[:, :, s + 1] = Y[:, :, s + 1] * 3 + 1
    corrupt = NetworkData(DyadTensor(Y, sim_cv.y.actors, sim_cv.y.periods), sim_cv.Z, sim_cv.Ws, sim_cv.Wr)
    mask = training_mask(heldout, sim_cv.n_periods)
    keep = sim_cv.keep(mask)
    assert not keep[:, :, heldout].any()
    fits = [fit_sir(d, mask=mask) for d in (sim_cv, corrupt)]
    assert np.allclose(fits[0].params.psi, fits[1].params.psi, rtol=0, atol=1e-12)
    glms = [fit_glm_baseline(d, mask) for d in (sim_cv, corrupt)]
    assert np.allclose(glms[0].coefficients, glms[1].coefficients, rtol=0, atol=1e-12)

    def rates(p):
        return lambda d, s: predict_mu(p, d)[:, :, s]

    fa = chained_forecast(sim_cv, heldout, rates(fits[0].params))
    fb = chained_forecast(corrupt, heldout, rates(fits[0].params))
    for s in heldout:
        assert np.allclose(fa[s], fb[s], equal_nan=True, rtol=1e-13)


def test_chained_forecast_uses_forecast_lag(sim_cv):
    fit = fit_sir(sim_cv)
    p = fit.params
    fc = chained_forecast(sim_cv, [10, 11], lambda d, s: predict_mu(p, d)[:, :, s])
    np.testing.assert_allclose(fc[10], predict_mu(p, sim_cv)[:, :, 10], rtol=1e-13)
    x = sim_cv.x.with_slice(11, fc[10])
    np.testing.assert_allclose(fc[11], predict_mu(p, sim_cv.with_x(x))[:, :, 11], rtol=1e-13)
    assert not np.allclose(fc[11], predict_mu(p, sim_cv)[:, :, 11], equal_nan=True)


def test_one_step_holdout_equals_final_slice_prediction(sim_cv):
    rep = run_temporal_holdout(sim_cv, [1])
    last = sim_cv.n_periods - 1
    fit = fit_sir(sim_cv, mask=[last])
    mu = predict_mu(fit.params, sim_cv)[:, :, last]
    y = sim_cv.y.response[:, :, last]
    ref = score_forecast(y, mu)
    got = rep.folds[0].scores["sir"]
    for rule in ("dawid_sebastiani", "logarithmic", "brier", "spherical", "rmse"):
        assert getattr(got, rule) == pytest.approx(getattr(ref, rule), rel=1e-12)


def test_holdout_horizon_cells(sim_cv):
    rep = run_temporal_holdout(sim_cv, [2, 3])
    n = sim_cv.y.n
    assert [f.scores["sir"].n_cells for f in rep.folds] == [2 * n * (n - 1), 3 * n * (n - 1)]
    assert rep.folds[1].heldout == tuple(range(sim_cv.n_periods - 3, sim_cv.n_periods))


@pytest.mark.parametrize("x", [0, -1, 41, 50])
def test_holdout_rejects_bad_horizon(sim_cv, x):
    with pytest.raises(InputError):
        run_temporal_holdout(sim_cv, [x])


def test_external_scores_round_trip(tmp_path, sim_cv):
    path = tmp_path / "gbm.csv"
    path.write_text(
        "model,fold,dawid_sebastiani,logarithmic,brier,spherical,rmse\n"
        "gbm,fold0,1.5,2.0,-0.1,-0.3,1.1\n"
    )
    ext = io.read_external_scores(path)
    assert ext["gbm"][0]["logarithmic"] == 2.0
    rep = run_temporal_holdout(sim_cv, [2])
    rep.external = ext
    assert rep.to_dict()["external"]["gbm"][0]["fold"] == "fold0"
