"""Run the online bandit with doubly robust value tracking, and replicate it."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np

from .arms import FeatureMap, OnlineRidge
from .config import ExperimentConfig
from .environments import DatasetEnv, SyntheticEnv, load_dataset, make_sea_like
from .estimators import (
    Trace,
    ValueReport,
    averaged_reward,
    dream_report,
    known_policy_value,
    regret_increments,
)
from .exploration import ExplorationModel
from .policies import (
    action_propensity,
    apply_clipping,
    burn_in_decision,
    clipping_flags,
    proposal_probability,
    select,
)

logger = logging.getLogger(__name__)

DREAM = "dream"
DREAM_MU_MISSPEC = "dream_mu_misspec"
DREAM_KAPPA_CONST = "dream_kappa_const"
AVERAGE = "average"
KNOWN_OPTIMAL = "known_optimal"


def build_env(config):
    if config.env == "synthetic":
        return SyntheticEnv(noise_sd=(config.noise_sd, config.noise_sd))
    if config.env == "sea":
        return make_sea_like(config.sea_rows, seed=config.sea_seed, margin=config.sea_margin,
                             reward_sd=config.reward_sd)
    return load_dataset(config.dataset_path, reward_sd=config.reward_sd)


def replication_seed(base_seed, index):
    """Seed for replication ``index``; independent of execution order."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))


@dataclass
class TrajectoryResult:
    trace: Trace
    reports: dict  # checkpoint -> method -> ValueReport
    arms: tuple
    alt_features: Optional[np.ndarray] = None
    regret: Optional[np.ndarray] = None  # cumulative, one entry per step

    @property
    def explored(self):
        return ~self.trace.exploited


def run_trajectory(config, seed, env=None):
    """One pass of the online loop for ``config.T`` steps.

    At each step: draw a context, form the greedy action from the current
    ridge fits, let the bandit (or the burn-in rule) propose an action, apply
    the clipping guard, observe the reward, then update the arm and the
    exploration model. Value reports are produced at every checkpoint.
    """
    rng = np.random.default_rng(seed)
    env = (env if env is not None else build_env(config)).clone()
    env.reset(rng)
    spec = config.policy
    fmap = FeatureMap(config.feature_map)
    alt_map = FeatureMap(config.alt_feature_map) if config.alt_feature_map else None
    p = env.dim_raw
    d = fmap.n_features(p)
    T = config.T

    arms = (OnlineRidge(config.omega).initialize(d), OnlineRidge(config.omega).initialize(d))
    alt_arms = None
    if alt_map is not None:
        d_alt = alt_map.n_features(p)
        alt_arms = (OnlineRidge(config.omega).initialize(d_alt),
                    OnlineRidge(config.omega).initialize(d_alt))
    kappa_model = ExplorationModel(config.kappa_kind, eg_eps=spec.eg_eps).initialize(p)

    grams = [np.zeros((p, p)), np.zeros((p, p))]
    total_gram = np.zeros((p, p))

    cols = dict(
        t=np.arange(1, T + 1), context=np.empty((T, p)), feature=np.empty((T, d)),
        action=np.empty(T, dtype=int), reward=np.empty(T), greedy=np.empty(T, dtype=int),
        kappa=np.empty(T), mu0=np.empty(T), mu1=np.empty(T),
        forced_clip=np.zeros(T, dtype=bool), burn_in=np.zeros(T, dtype=bool),
        propensity_=np.empty(T),
    )
    alt_cols = None
    if alt_arms is not None:
        alt_cols = dict(feature=np.empty((T, alt_arms[0].n_features_in_)), mu0=np.empty(T), mu1=np.empty(T))

    checkpoints = set(config.checkpoints)
    reports = {}
    identity = fmap.name == "identity"

    for i in range(T):
        t = i + 1
        x = env.sample_context(rng)
        f = x if identity else fmap(x)
        arm0, arm1 = arms
        cols["mu0"][i] = arm0.predict_mean(f)
        cols["mu1"][i] = arm1.predict_mean(f)

        xx = np.outer(x, x)
        total_gram += xx
        if t <= spec.burn_in:
            decision = burn_in_decision(arm0, arm1, f, t, spec, rng)
            prop = 1.0 if spec.burn_in_mode == "alternate" else 0.5
        else:
            proposed = select(arm0, arm1, f, t, spec, rng)
            flags = clipping_flags(grams, total_gram, t, spec)
            decision = apply_clipping(proposed, flags)
            prop = action_propensity(decision.action,
                                     proposal_probability(arm0, arm1, f, t, spec, proposed), flags)
        a = decision.action
        grams[a] += xx

        cols["kappa"][i] = kappa_model.predict_kappa(t, x)
        cols["propensity_"][i] = prop
        r = env.draw_reward(x, a, rng)
        arms[a].update(f, r)
        if alt_arms is not None:
            fa = alt_map(x)
            alt_cols["feature"][i] = fa
            alt_cols["mu0"][i] = alt_arms[0].predict_mean(fa)
            alt_cols["mu1"][i] = alt_arms[1].predict_mean(fa)
            alt_arms[a].update(fa, r)
        if not decision.forced_by_burn_in:
            kappa_model.partial_fit(t, x, a != decision.greedy_action)

        cols["context"][i] = x
        cols["feature"][i] = f
        cols["action"][i] = a
        cols["reward"][i] = r
        cols["greedy"][i] = decision.greedy_action
        cols["forced_clip"][i] = decision.forced_by_clipping
        cols["burn_in"][i] = decision.forced_by_burn_in

        if t in checkpoints:
            reports[t] = _checkpoint_reports(config, env, Trace(**cols).head(t), arms, alt_arms,
                                             None if alt_cols is None else {k: v[:t] for k, v in alt_cols.items()})

    trace = Trace(**cols)
    regret = None
    if env.has_oracle:
        regret = np.cumsum(regret_increments(trace, env.true_mean))
        for t, rep in reports.items():
            for r in rep.values():
                r.regret = float(regret[t - 1])
    return TrajectoryResult(trace, reports, arms,
                            None if alt_cols is None else alt_cols["feature"], regret)


def _checkpoint_reports(config, env, trace, arms, alt_arms, alt_cols):
    alpha = config.alpha
    inc = config.include_burn_in
    out = {DREAM: dream_report(trace, arms[0], arms[1], alpha, include_burn_in=inc)}

    feats = trace.feature
    final_greedy = (feats @ arms[1].coef_ > feats @ arms[0].coef_).astype(int)
    if alt_arms is not None:
        alt_trace = trace.replace(mu0=alt_cols["mu0"], mu1=alt_cols["mu1"])
        out[DREAM_MU_MISSPEC] = dream_report(alt_trace, alt_arms[0], alt_arms[1], alpha,
                                             final_greedy=final_greedy, features=alt_cols["feature"],
                                             include_burn_in=inc)
    const_trace = trace.replace(kappa=np.full(len(trace), 0.5))
    out[DREAM_KAPPA_CONST] = dream_report(const_trace, arms[0], arms[1], alpha, include_burn_in=inc)

    mean, ci = averaged_reward(trace, alpha)
    out[AVERAGE] = ValueReport(v_hat=mean, sigma2_hat=float(trace.reward.var()), ci_low=ci[0],
                               ci_high=ci[1], alpha=alpha, T_effective=len(trace),
                               baseline_avg_reward=mean, baseline_ci=ci)
    if env.has_oracle:
        out[KNOWN_OPTIMAL] = known_policy_value(trace, env.oracle_policy, arms[0], arms[1],
                                                alpha=alpha, include_burn_in=inc)
    return out


@dataclass
class MetricsRow:
    t: int
    method: str
    coverage: float
    mean_bias: float
    se_mc_ratio: float
    n_reps: int
    mean_v_hat: float
    mc_sd: float
    mean_se: float

    CSV_COLUMNS = ("t", "method", "coverage", "bias", "se_mc_ratio", "n_reps", "mean_v_hat", "mc_sd", "mean_se")

    def csv_row(self):
        return {"t": self.t, "method": self.method, "coverage": self.coverage, "bias": self.mean_bias,
                "se_mc_ratio": self.se_mc_ratio, "n_reps": self.n_reps, "mean_v_hat": self.mean_v_hat,
                "mc_sd": self.mc_sd, "mean_se": self.mean_se}


def summarize(reports, target):
    """Coverage, bias and SE/MC-SD ratio across replications for one checkpoint and method."""
    v = np.array([r.v_hat for r in reports])
    se = np.array([r.se for r in reports])
    cover = np.array([r.covers(target) for r in reports])
    sd = float(v.std(ddof=1)) if len(v) > 1 else math.nan
    ratio = math.inf if sd == 0 else float(se.mean() / sd)
    return dict(coverage=float(cover.mean()), mean_bias=float(v.mean() - target), se_mc_ratio=ratio,
                n_reps=len(v), mean_v_hat=float(v.mean()), mc_sd=sd, mean_se=float(se.mean()))


@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    target: float
    metrics: list
    reports: list  # per replication: checkpoint -> method -> ValueReport
    explored: np.ndarray  # (reps, T) exploration indicators
    burn_in: np.ndarray  # (T,) burn-in flags (identical across replications)
    regret: Optional[np.ndarray] = None  # (reps, T) cumulative regret
    collected: Optional[list] = None  # per replication output of ``collect``

    def metric(self, t, method):
        for row in self.metrics:
            if row.t == t and row.method == method:
                return row
        raise KeyError((t, method))

    def exploration_rate(self, start, stop):
        """Mean exploration frequency over steps ``start..stop`` (inclusive), per replication."""
        return self.explored[:, start - 1 : stop].mean(axis=1)


def _run_one(args):
    config, index, env, collect = args
    res = run_trajectory(config, replication_seed(config.base_seed, index), env)
    extra = None if collect is None else collect(res)
    return res.reports, res.explored, res.regret, res.trace.burn_in, extra


def monte_carlo(config, workers=1, seeds=None, progress=False, collect=None):
    """Replicate :func:`run_trajectory` ``config.reps`` times and aggregate metrics.

    Replication ``i`` is seeded from ``(base_seed, i)`` unless ``seeds`` gives
    explicit replication indices, so results do not depend on ``workers``.
    ``collect``, if given, maps each :class:`TrajectoryResult` to a value kept
    in ``MonteCarloResult.collected``; it must be picklable when ``workers > 1``.
    """
    env = build_env(config)
    indices = list(range(config.reps)) if seeds is None else list(seeds)
    jobs = [(config, i, env, collect) for i in indices]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outs = []
        for n, job in enumerate(jobs):
            outs.append(_run_one(job))
            if progress and (n + 1) % 20 == 0:
                logger.info("replication %d/%d", n + 1, len(jobs))

    target = env.oracle_value()
    reports = [o[0] for o in outs]
    metrics = []
    for t in config.checkpoints:
        for method in reports[0][t]:
            metrics.append(MetricsRow(t=t, method=method, **summarize([r[t][method] for r in reports], target)))
    explored = np.array([o[1] for o in outs])
    regret = None if outs[0][2] is None else np.array([o[2] for o in outs])
    collected = None if collect is None else [o[4] for o in outs]
    return MonteCarloResult(config, target, metrics, reports, explored, outs[0][3], regret, collected)


def sensitivity_sweep(config, p_values, workers=1):
    """Monte Carlo study repeated for each constant clipping rate."""
    from .policies import Schedule

    out = {}
    for p in p_values:
        if not 0 < p < 1:
            raise ValueError(f"clipping rate must lie in (0, 1), got {p}")
        cfg = config.replace(policy=config.policy.with_clipping(Schedule.constant(p)))
        out[p] = monte_carlo(cfg, workers=workers)
    return out
