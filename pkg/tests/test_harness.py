import math

import numpy as np
import pytest

from dream.config import ExperimentConfig
from dream.environments import DatasetExhausted, SyntheticEnv
from dream.estimators import ValueReport
from dream.harness import (
    AVERAGE,
    DREAM,
    DREAM_KAPPA_CONST,
    DREAM_MU_MISSPEC,
    KNOWN_OPTIMAL,
    monte_carlo,
    replication_seed,
    run_trajectory,
    sensitivity_sweep,
    summarize,
)
from dream.policies import PolicySpec, Schedule


def small(**kw):
    base = dict(T=300, reps=4, checkpoints=(100, 300))
    base.update(kw)
    return ExperimentConfig(**base)


def test_same_seed_bit_identical():
    cfg = small()
    a = run_trajectory(cfg, replication_seed(5, 2)).trace
    b = run_trajectory(cfg, replication_seed(5, 2)).trace
    for name, col in a.__dict__.items():
        np.testing.assert_array_equal(col, getattr(b, name))


def test_different_replications_differ():
    cfg = small()
    a = run_trajectory(cfg, replication_seed(5, 0)).trace
    b = run_trajectory(cfg, replication_seed(5, 1)).trace
    assert not np.array_equal(a.reward, b.reward)


def test_burn_in_rule():
    cfg = small(policy=PolicySpec(burn_in=4))
    tr = run_trajectory(cfg, replication_seed(0, 0)).trace
    assert list(tr.action[:4]) == [0, 1, 0, 1]
    assert tr.burn_in[:4].all() and not tr.burn_in[4:].any()


def test_uniform_epsilon_on_symmetric_env():
    env = SyntheticEnv(beta0=[1.0, 0.5, 0.5], beta1=[1.0, 0.5, 0.5])
    cfg = ExperimentConfig(T=2000, reps=1, checkpoints=(2000,),
                           policy=PolicySpec("eg", eg_eps=Schedule.constant(1.0)))
    tr = run_trajectory(cfg, replication_seed(1, 0), env).trace
    post = ~tr.burn_in
    assert abs(tr.exploited[post].mean() - 0.5) <= 0.03


def test_reports_at_every_checkpoint():
    res = run_trajectory(small(), replication_seed(0, 0))
    assert sorted(res.reports) == [100, 300]
    assert set(res.reports[300]) == {DREAM, DREAM_MU_MISSPEC, DREAM_KAPPA_CONST, AVERAGE, KNOWN_OPTIMAL}
    assert res.reports[100][DREAM].T_effective == 50
    assert res.regret.shape == (300,) and (np.diff(res.regret) >= -1e-12).all()
    assert res.reports[300][DREAM].regret == res.regret[-1]


def test_checkpoint_report_uses_prefix_only():
    cfg = small(T=300, checkpoints=(100, 300))
    short = run_trajectory(small(T=100, checkpoints=(100,)), replication_seed(0, 0))
    long = run_trajectory(cfg, replication_seed(0, 0))
    assert short.reports[100][DREAM].v_hat == long.reports[100][DREAM].v_hat


def test_propensity_recorded():
    for algo in ("ucb", "ts", "eg"):
        tr = run_trajectory(small(policy=PolicySpec(algo)), replication_seed(0, 0)).trace
        assert ((tr.propensity_ > 0) & (tr.propensity_ <= 1)).all()
    ucb = run_trajectory(small(), replication_seed(0, 0)).trace
    assert set(np.unique(ucb.propensity_)) <= {0.0, 1.0}


def _report(lo, hi, v=0.0):
    return ValueReport(v_hat=v, sigma2_hat=1.0, ci_low=lo, ci_high=hi, alpha=0.05, T_effective=100)


def test_summarize_full_coverage():
    reps = [_report(-1, 1, v) for v in np.linspace(-0.5, 0.5, 20)]
    assert summarize(reps, 0.0)["coverage"] == 1.0


def test_summarize_partial_coverage():
    reps = [_report(-1, 1, 0.1) for _ in range(95)] + [_report(1, 2, 0.1) for _ in range(5)]
    m = summarize(reps, 0.0)
    assert m["coverage"] == 0.95
    assert m["mean_bias"] == pytest.approx(0.1)


def test_degenerate_identical_replications():
    mc = monte_carlo(small(reps=2), seeds=[0, 0])
    row = mc.metric(300, DREAM)
    assert row.mc_sd == 0 and row.se_mc_ratio == math.inf


def test_metrics_invariant_to_replication_order():
    cfg = small(reps=5)
    fwd = monte_carlo(cfg)
    rev = monte_carlo(cfg, seeds=[4, 3, 2, 1, 0])
    for a, b in zip(fwd.metrics, rev.metrics):
        assert (a.t, a.method) == (b.t, b.method)
        assert a.coverage == b.coverage
        assert a.mean_bias == pytest.approx(b.mean_bias, abs=1e-12)
        assert a.se_mc_ratio == pytest.approx(b.se_mc_ratio, rel=1e-10)


def test_workers_do_not_change_results():
    cfg = small(reps=4)
    one = monte_carlo(cfg, workers=1)
    two = monte_carlo(cfg, workers=2)
    assert [r.csv_row() for r in one.metrics] == [r.csv_row() for r in two.metrics]


def test_single_p_sweep_equals_plain_run():
    cfg = small(reps=3)
    sweep = sensitivity_sweep(cfg, [0.01])
    plain = monte_carlo(cfg)
    assert [r.csv_row() for r in sweep[0.01].metrics] == [r.csv_row() for r in plain.metrics]


def test_sweep_tables_per_p():
    out = sensitivity_sweep(small(reps=2), [0.01, 0.05, 0.1])
    assert sorted(out) == [0.01, 0.05, 0.1]
    with pytest.raises(ValueError):
        sensitivity_sweep(small(reps=2), [1.5])


def test_dataset_exhaustion_propagates():
    cfg = ExperimentConfig(env="sea", T=300, sea_rows=200, policy=PolicySpec(burn_in=20), checkpoints=(100,))
    with pytest.raises(DatasetExhausted):
        run_trajectory(cfg, replication_seed(0, 0))


def test_sea_trajectory_runs():
    cfg = ExperimentConfig(env="sea", T=200, reps=2, policy=PolicySpec(burn_in=20), checkpoints=(100, 200))
    mc = monte_carlo(cfg)
    assert mc.target == 1.0
    assert KNOWN_OPTIMAL not in mc.reports[0][200]
    assert mc.regret is None


def test_exploration_rate_window():
    mc = monte_carlo(small(reps=2))
    rates = mc.exploration_rate(51, 150)
    assert rates.shape == (2,) and ((rates >= 0) & (rates <= 1)).all()
