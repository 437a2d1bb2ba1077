"""Shared fixtures: cached Monte Carlo studies and the criterion summary printer."""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dream.config import ExperimentConfig
from dream.environments import SyntheticEnv
from dream.harness import monte_carlo
from dream.policies import PolicySpec, Schedule

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WORKERS = int(os.environ.get("DREAM_TEST_WORKERS", "1"))

# --- criterion summary lines ------------------------------------------------

CRITERIA = []


def record_criterion(number, name, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    CRITERIA.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA, key=lambda item: (item[0], item[1])):
        terminalreporter.write_line(line)


# --- studies ------------------------------------------------------------------

SYNTH_POLICIES = {
    "ucb": PolicySpec("ucb", ucb_c=Schedule.constant(1.0)),
    "ts": PolicySpec("ts", ts_rho=2.0),
    "eg": PolicySpec("eg", eg_eps=Schedule.power_law(0.1, 0.4)),
}


def synthetic_config(algo, reps=200, T=2000, clip=None, **kw):
    policy = SYNTH_POLICIES[algo]
    if clip is not None:
        policy = policy.with_clipping(clip)
    return ExperimentConfig(env="synthetic", T=T, reps=reps, policy=policy,
                            checkpoints=(100, 500, 1000, 2000), **kw)


_TRUTH = SyntheticEnv()


def trajectory_summary(res):
    """Per-replication extras used by property tests on the shared studies."""
    tr = res.trace
    post = ~tr.burn_in
    true0 = _TRUTH.true_mean(tr.context, 0)
    true1 = _TRUTH.true_mean(tr.context, 1)
    true_greedy = np.where(tr.greedy == 1, true1, true0)
    exploited = tr.exploited
    # oracle mean model, deliberately wrong exploration probability
    w_bad = exploited / (1.0 - 0.3)
    v_oracle_mu = float(np.mean((w_bad * (tr.reward - true_greedy) + true_greedy)[post]))
    # exact exploitation probability, deliberately wrong (zero) mean model
    p_greedy = np.where(exploited, tr.propensity_, 1.0 - tr.propensity_)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_exact = np.where(exploited, 1.0 / p_greedy, 0.0)
    v_exact_kappa = float(np.mean((w_exact * tr.reward)[post]))
    # what both estimate: the true value of the greedy rule actually in force
    v_greedy_true = float(np.mean(true_greedy[post]))

    beta_err = [float(np.abs(res.arms[a].coef_ - (_TRUTH.beta1 if a else _TRUTH.beta0)).sum())
                for a in (0, 1)]

    # clipping invariant on raw contexts after the guard acted, every prefix t > T0
    x = tr.context
    outer = np.einsum("ti,tj->tij", x, x)
    total = np.cumsum(outer, axis=0)
    per_arm = [np.cumsum(outer * (tr.action == a)[:, None, None], axis=0) for a in (0, 1)]
    t = tr.t[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_total = np.linalg.eigvalsh(total)[:, 0] / t[:, 0]
    lam_arm = np.stack([np.linalg.eigvalsh(g)[:, 0] for g in per_arm], axis=1) / t
    return dict(v_oracle_mu=v_oracle_mu, v_exact_kappa=v_exact_kappa, v_greedy_true=v_greedy_true,
                beta_err=beta_err,
                lam_total=lam_total, lam_arm=lam_arm, forced=int(tr.forced_clip.sum()))


@pytest.fixture(scope="session")
def synthetic_studies():
    """R=200, T=2000 studies for UCB, TS and EG with the default clipping rate 0.01."""
    return {algo: monte_carlo(synthetic_config(algo), workers=WORKERS, collect=trajectory_summary)
            for algo in SYNTH_POLICIES}


SEA_POLICIES = {
    "ucb": PolicySpec("ucb", ucb_c=Schedule.constant(2.0), burn_in=20),
    "ts": PolicySpec("ts", ts_rho=0.5, burn_in=20),
    "eg": PolicySpec("eg", eg_eps=Schedule.power_law(1.0, 1.0 / 3.0), burn_in=20),
}


@pytest.fixture(scope="session")
def sea_studies():
    return {
        algo: monte_carlo(ExperimentConfig(env="sea", T=200, reps=200, policy=policy,
                                           checkpoints=(50, 100, 200), reward_sd=0.5),
                          workers=WORKERS)
        for algo, policy in SEA_POLICIES.items()
    }
