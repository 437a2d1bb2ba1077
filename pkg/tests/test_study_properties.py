"""Properties checked on the shared Monte Carlo studies and on short targeted runs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SYNTH_POLICIES, trajectory_summary
from dream.config import ExperimentConfig
from dream.environments import SyntheticEnv
from dream.harness import replication_seed, run_trajectory
from dream.policies import PolicySpec, Schedule

pytestmark = pytest.mark.slow


def mean_and_se(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


@pytest.mark.parametrize("algo", list(SYNTH_POLICIES))
def test_correct_mean_model_rescues_wrong_kappa(synthetic_studies, algo):
    # oracle mean model with kappa fixed at 0.3: still centred on the greedy value
    extras = synthetic_studies[algo].collected
    diff = [c["v_oracle_mu"] - c["v_greedy_true"] for c in extras]
    m, se = mean_and_se(diff)
    assert abs(m) < 3 * se + 1e-12, (m, se)


@pytest.mark.parametrize("algo", ["ts", "eg"])
def test_correct_kappa_rescues_wrong_mean_model(synthetic_studies, algo):
    # exact behaviour probabilities with mu_hat = 0: pure inverse weighting
    extras = synthetic_studies[algo].collected
    diff = [c["v_exact_kappa"] - c["v_greedy_true"] for c in extras]
    m, se = mean_and_se(diff)
    assert abs(m) < 3 * se, (m, se)


@pytest.mark.parametrize("algo", list(SYNTH_POLICIES))
def test_arm_coefficients_consistent(synthetic_studies, algo):
    extras = synthetic_studies[algo].collected
    ok = [max(c["beta_err"]) < 0.2 for c in extras]
    assert np.mean(ok) >= 0.95


@pytest.mark.parametrize("algo", list(SYNTH_POLICIES))
def test_default_clipping_rate_holds_on_studies(synthetic_studies, algo):
    p = synthetic_studies[algo].config.policy.clipping(1)
    T0 = synthetic_studies[algo].config.policy.burn_in
    for c in synthetic_studies[algo].collected:
        ratio = c["lam_arm"][T0:].min(axis=1) / c["lam_total"][T0:]
        assert ratio.min() >= p


@pytest.mark.parametrize("algo", list(SYNTH_POLICIES))
def test_greedy_value_approaches_optimum(synthetic_studies, algo):
    res = synthetic_studies[algo]
    # realised contexts are random, so the average may sit slightly above V*
    greedy, se = mean_and_se([c["v_greedy_true"] for c in res.collected])
    assert res.target - 0.1 < greedy < res.target + 3 * se


# a dominated arm 1: greedy play alone would starve it, so the guard must act
LOPSIDED = SyntheticEnv(beta1=np.array([-1.0, -1.0, 1.5]))


@settings(max_examples=12)
@given(p=st.floats(0.02, 0.3), seed=st.integers(0, 2**31 - 1))
def test_clipping_keeps_both_designs_proportional(p, seed):
    policy = PolicySpec("ucb", ucb_c=Schedule.constant(0.0), clipping=Schedule.constant(p), burn_in=10)
    cfg = ExperimentConfig(T=600, reps=1, policy=policy, checkpoints=(600,))
    res = run_trajectory(cfg, replication_seed(seed, 0), LOPSIDED)
    c = trajectory_summary(res)
    assert c["forced"] > 0
    ratio = c["lam_arm"][199:].min(axis=1) / c["lam_total"][199:]
    assert ratio.min() >= 0.95 * p


def test_unclipped_greedy_starves_dominated_arm():
    policy = PolicySpec("ucb", ucb_c=Schedule.constant(0.0), clipping=Schedule.constant(0.0), burn_in=10)
    cfg = ExperimentConfig(T=600, reps=1, policy=policy, checkpoints=(600,))
    res = run_trajectory(cfg, replication_seed(1, 0), LOPSIDED)
    assert (res.trace.action[10:] == 1).mean() < 0.05
