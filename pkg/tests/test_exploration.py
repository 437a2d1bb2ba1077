import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dream.exploration import (
    ExplorationModel,
    TheoryParams,
    c_xi,
    kappa_upper_bound,
    mean_tail_bound,
    ridge_tail_bound,
)
from dream.policies import Schedule

X = np.array([1.0, 2.0])
UNIT = TheoryParams(lam=1, l_x=1, d=1, sigma_sg=1, beta_norms=(0.0, 0.0))


# --- model updates -------------------------------------------------------------------


def test_eg_closed_form_ignores_updates():
    m = ExplorationModel("eg_closed_form", eg_eps=Schedule.constant(0.2)).initialize(2)
    before = m.weights_.copy()
    for t in range(1, 50):
        m.partial_fit(t, X, True)
    np.testing.assert_array_equal(m.weights_, before)
    assert m.predict_kappa(7, X) == pytest.approx(0.1)


def test_constant_ignores_updates():
    m = ExplorationModel("constant", constant_value=0.5).initialize(2)
    for t in range(1, 50):
        m.partial_fit(t, X, t % 2 == 0)
    assert m.predict_kappa(100, X) == 0.5


def _train_all_exploited(n, seed=0):
    # the steps right after a 50-step burn-in, contexts from the simulation law
    m = ExplorationModel("logistic").initialize(2)
    rng = np.random.default_rng(seed)
    for i in range(n):
        m.partial_fit(51 + i, rng.uniform(0, 2 * math.pi, 2), False)
    return m


GRID = [np.array([a, b]) for a in np.linspace(0, 2 * math.pi, 25) for b in np.linspace(0, 2 * math.pi, 25)]


@pytest.mark.xfail(strict=True, reason="500 decaying SGD steps leave kappa at about 1.2e-3 on the "
                                        "worst corner of the context square, just above the floor")
def test_logistic_500_exploited_labels_reach_floor_everywhere():
    m = _train_all_exploited(500)
    assert max(m.predict_kappa(550, x) for x in GRID) == 1e-3


def test_logistic_all_exploited_labels_drive_kappa_to_floor():
    m500 = _train_all_exploited(500)
    m1000 = _train_all_exploited(1000)
    worst500 = max(m500.predict_kappa(550, x) for x in GRID)
    assert worst500 < 2e-3
    assert np.mean([m500.predict_kappa(550, x) == 1e-3 for x in GRID]) > 0.9
    assert max(m1000.predict_kappa(1050, x) for x in GRID) == 1e-3
    # the intercept moved down from zero
    assert m500.weights_[0] < 0


def test_logistic_learns_a_rate():
    m = ExplorationModel("logistic").initialize(2)
    rng = np.random.default_rng(4)
    for t in range(1, 20_001):
        m.partial_fit(t, rng.uniform(0, 1, 2), rng.random() < 0.2)
    kappas = [m.predict_kappa(20_000, rng.uniform(0, 1, 2)) for _ in range(200)]
    assert abs(np.mean(kappas) - 0.2) < 0.05


# --- prediction ------------------------------------------------------------------------


def test_eg_closed_form_is_half_epsilon():
    m = ExplorationModel("eg_closed_form", eg_eps=Schedule.constant(0.2))
    assert m.predict_kappa(1, X) == pytest.approx(0.1)


def test_constant_half():
    assert ExplorationModel("constant", constant_value=0.5).predict_kappa(3, X) == 0.5


def test_logistic_zero_weights_is_half():
    assert ExplorationModel("logistic").initialize(2).predict_kappa(1, X) == 0.5


@given(arrays(np.float64, 4, elements=st.floats(-50, 50)), st.integers(1, 10**6),
       arrays(np.float64, 2, elements=st.floats(-10, 10)))
def test_kappa_always_clamped(weights, t, x):
    m = ExplorationModel("logistic").initialize(2)
    m.weights_ = weights
    k = m.predict_kappa(t, x)
    assert 1e-3 <= k <= 0.5
    assert 1.0 / (1.0 - k) <= 2.0


def test_model_validation():
    with pytest.raises(ValueError):
        ExplorationModel("forest").initialize(2)
    with pytest.raises(ValueError):
        ExplorationModel("eg_closed_form").initialize(2)
    with pytest.raises(ValueError):
        ExplorationModel(kappa_min=0.6, kappa_max=0.5).initialize(2)
    with pytest.raises(ValueError):
        ExplorationModel().predict_kappa(0, X)


def test_get_params():
    assert ExplorationModel(learning_rate=0.3).get_params()["learning_rate"] == 0.3


# --- tail bounds -------------------------------------------------------------------------


def test_ridge_tail_bound_value():
    assert ridge_tail_bound(UNIT, 100, 1.0, 1.0, 0) == pytest.approx(2 * math.exp(-12.5), rel=1e-12)
    assert ridge_tail_bound(UNIT, 100, 1.0, 1.0, 0) == pytest.approx(7.45e-6, rel=1e-3)


def test_ridge_tail_bound_t_zero_capped():
    assert ridge_tail_bound(UNIT, 0, 1.0, 1.0, 0) == 1.0


def test_ridge_tail_bound_vacuous():
    p = TheoryParams(lam=1, l_x=1, d=4, sigma_sg=1, beta_norms=(1.0, 0.5))
    assert ridge_tail_bound(p, 10**6, 1.0, 2.0, 0) == 1.0  # h = sqrt(4) * 1


def test_mean_tail_bound_t_zero():
    assert mean_tail_bound(UNIT, 0, 1.0, 2.0) == 1.0


def test_mean_tail_bound_value():
    assert c_xi(UNIT, 2.0) == pytest.approx(1 / 8)
    assert mean_tail_bound(UNIT, 100, 1.0, 2.0) == pytest.approx(4 * math.exp(-12.5), rel=1e-12)


@given(st.integers(60, 400), st.floats(0.3, 1.0), st.integers(1, 3))
def test_mean_tail_bound_doubling(t, p, d):
    params = TheoryParams(lam=1, l_x=1, d=d, sigma_sg=1)
    once = mean_tail_bound(params, t, p, 2.0)
    twice = mean_tail_bound(params, 2 * t, p, 2.0)
    if once < 1.0:
        assert twice == pytest.approx(once**2 / (4 * d), rel=1e-9)


def test_mean_tail_bound_rejects_bad_xi():
    with pytest.raises(ValueError):
        mean_tail_bound(UNIT, 10, 1.0, 0.0)


def test_c_xi_vacuous():
    p = TheoryParams(lam=1, l_x=1, d=1, sigma_sg=1, beta_norms=(5.0, 0.0))
    assert c_xi(p, 2.0) == 0.0


# --- exploration bounds ---------------------------------------------------------------------


def test_eg_bound_schedule_arithmetic():
    eps = Schedule.power_law(0.1, 0.4)
    assert kappa_upper_bound(UNIT, "eg", 32, None, eps, None, None) == pytest.approx(0.0125)
    assert kappa_upper_bound(UNIT, "eg", 32, None, eps(32), None, None) == pytest.approx(0.0125)


def test_ts_bound_non_increasing_in_t():
    vals = [kappa_upper_bound(UNIT, "ts", t, 0.5, 2.0, 3.0, 1.0) for t in range(2, 2000, 7)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0]


def test_ucb_bound_limit():
    p = TheoryParams(lam=1, l_x=1, d=1, sigma_sg=1, gamma=2.0, margin_M=0.7)
    far = kappa_upper_bound(p, "ucb", 10**14, 0.5, 1.0, 3.0, 1.0)
    assert far == pytest.approx(0.7 * 1.0**2, rel=1e-4)


def test_bound_first_step_is_one():
    assert kappa_upper_bound(UNIT, "ucb", 1, 0.5, 1.0, 3.0, 1.0) == 1.0


def test_bound_rejects_large_xi():
    with pytest.raises(ValueError, match="xi"):
        kappa_upper_bound(UNIT, "ts", 10, 0.5, 2.0, 1.0, 0.6)
    with pytest.raises(ValueError):
        kappa_upper_bound(UNIT, "lin", 10, 0.5, 2.0, 1.0, 0.1)


def test_theory_params_validation():
    with pytest.raises(ValueError):
        TheoryParams(lam=0, l_x=1, d=1, sigma_sg=1)
    with pytest.raises(ValueError):
        TheoryParams(lam=1, l_x=1, d=1, sigma_sg=1, beta_norms=(-1, 0))
