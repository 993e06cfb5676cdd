import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlnn_opt.bermudan_engine import fit_rlnn
from rlnn_opt.cos import price_cos
from rlnn_opt.exposure import (PROFILE_COLUMNS, SCENARIOS, CosValuer, LsmValuer, RlnnValuer, exposure_cube,
                               horizons_for, midpoints, model_exposure, nearest_rank_quantile, profiles,
                               run_scenarios, stopping_times, write_profiles)
from rlnn_opt.hedge_net import TrainingConfig
from rlnn_opt.lsm import fit_lsm
from rlnn_opt.market_model import REAL_WORLD, RealWorldParams, simulate_gbm


def test_stopping_times_toy():
    times = np.array([0.5, 1.0])
    cont = np.array([[0.1, 0.0], [0.3, 0.0], [0.2, 0.0], [0.1, 0.0]])
    h = np.array([[0.2, 0.5], [0.1, 0.4], [-0.1, -0.2], [0.1, 0.0]])
    taus = stopping_times(times, cont, h)
    # ties do not exercise; a zero payoff at maturity never exercises
    assert taus.tolist() == [0.5, 1.0, np.inf, np.inf]


def test_stopping_times_shape_check():
    with pytest.raises(ValueError):
        stopping_times([0.5, 1.0], np.zeros((2, 2)), np.zeros((2, 3)))


def test_exposure_cube_toy():
    horizons = np.array([0.25, 0.5, 0.75, 1.0])
    values = np.arange(8, dtype=float).reshape(2, 4) + 1
    cube = exposure_cube(horizons, values, np.array([0.5, np.inf]))
    # alive on the exercise date itself, zero afterwards
    assert cube.values.tolist() == [[1, 2, 0, 0], [5, 6, 7, 8]]


def test_nearest_rank_quantile_examples():
    assert nearest_rank_quantile(np.arange(1, 101)) == 99
    assert nearest_rank_quantile(np.full(37, 0.4)) == 0.4
    assert nearest_rank_quantile(np.array([3.0])) == 3.0
    assert nearest_rank_quantile(np.arange(1, 11), q=0.5) == 5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.floats(0.01, 1.0))
def test_quantile_is_an_order_statistic(xs, q):
    x = np.array(xs)
    v = nearest_rank_quantile(x, q)
    assert v in x
    assert np.mean(x <= v) >= q - 1e-12


def test_profiles_toy():
    cube = exposure_cube([0.5, 1.0], np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, np.inf]))
    prof = profiles(cube, "rn")
    assert np.allclose(prof.ee, [2.0, 2.0])
    assert np.allclose(prof.pfe, [3.0, 4.0])
    assert prof.n_alive.tolist() == [2, 1]


def test_horizons_and_midpoints(atm_put):
    assert np.allclose(midpoints(atm_put), [0.125, 0.375, 0.625, 0.875])
    h = horizons_for(atm_put, midpoints(atm_put))
    assert h.size == 8 and np.all(np.diff(h) > 0)
    assert np.array_equal(horizons_for(atm_put), atm_put.times)


@pytest.fixture(scope="module")
def models(market, atm_put):
    rlnn = fit_rlnn(market, atm_put, 10_000, TrainingConfig(), seed=1)
    lsm = fit_lsm(simulate_gbm(market, atm_put.times, 10_000, seed=2), atm_put, market)
    return [RlnnValuer(rlnn), LsmValuer(lsm), CosValuer(market, atm_put)]


@pytest.fixture(scope="module")
def fine_paths(market, atm_put):
    return simulate_gbm(market, horizons_for(atm_put, midpoints(atm_put)), 4_000, seed=7)


def test_zero_after_exercise(models, atm_put, fine_paths):
    for valuer in models:
        exp = model_exposure(valuer, atm_put, fine_paths, midpoints(atm_put))
        dead = exp.taus[:, None] < exp.cube.times[None, :] - 1e-12
        assert np.all(exp.cube.values[dead] == 0)
        assert np.all(exp.cube.values[~dead] == exp.horizon_values[~dead])


def test_stopping_rule_cashflows_price_the_option(market, atm_put):
    paths = simulate_gbm(market, atm_put.times, 40_000, seed=3)
    valuer = CosValuer(market, atm_put)
    exp = model_exposure(valuer, atm_put, paths)
    spots = paths.select(atm_put.times)
    idx = np.searchsorted(atm_put.times, np.where(np.isinf(exp.taus), atm_put.maturity, exp.taus))
    cash = atm_put.payoff(spots[np.arange(paths.n_paths), idx]) * np.exp(-market.r * atm_put.times[idx])
    cash[np.isinf(exp.taus)] = 0.0
    se = cash.std() / np.sqrt(cash.size)
    assert cash.mean() == pytest.approx(price_cos(market, atm_put), abs=4 * se)


def test_models_agree_on_risk_neutral_profiles(models, atm_put, fine_paths):
    prof = {v.name: profiles(model_exposure(v, atm_put, fine_paths, midpoints(atm_put)).cube)
            for v in models}
    assert np.max(np.abs(prof["rlnn"].ee - prof["cos"].ee)) < 2e-3
    assert np.max(np.abs(prof["lsm"].ee - prof["cos"].ee)) < 1e-2


def test_scenarios_run_and_tag_measure(models, atm_put, market):
    out = run_scenarios(atm_put, market, models, {k: SCENARIOS[k] for k in (1, 4)}, 500, seed=5)
    assert set(out) == {1, 4}
    for label, per_model in out.items():
        assert set(per_model) == {"rlnn", "lsm", "cos"}
        for prof in per_model.values():
            assert prof.measure == REAL_WORLD and prof.scenario == str(label)
            assert np.all(prof.ee >= -1e-3) and np.all(prof.pfe >= prof.ee - 1e-12)


def test_real_world_at_risk_neutral_parameters_matches_risk_neutral(models, atm_put, market):
    same = RealWorldParams(mu=market.r, sigma_real=market.sigma)
    rw = run_scenarios(atm_put, market, models, {"rw": same}, 800, seed=9)["rw"]
    rn = run_scenarios(atm_put, market, models, {"rn": None}, 800, seed=9)["rn"]
    for name in rn:
        assert np.array_equal(rw[name].ee, rn[name].ee)


def test_scenarios_deterministic(models, atm_put, market):
    a = run_scenarios(atm_put, market, models, {2: SCENARIOS[2]}, 300, seed=4)
    b = run_scenarios(atm_put, market, models, {2: SCENARIOS[2]}, 300, seed=4)
    for name in a[2]:
        assert np.array_equal(a[2][name].pfe, b[2][name].pfe)


def test_run_scenarios_requires_models(atm_put, market):
    with pytest.raises(ValueError):
        run_scenarios(atm_put, market, [], {1: SCENARIOS[1]}, 10, seed=0)


def test_write_profiles(tmp_path):
    cube = exposure_cube([0.5, 1.0], np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, np.inf]),
                         model="cos")
    path = tmp_path / "p.csv"
    write_profiles(path, [profiles(cube, "1")])
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == PROFILE_COLUMNS
    assert float(rows[1]["PFE"]) == 4.0 and rows[1]["model"] == "cos"
