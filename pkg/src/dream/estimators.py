"""Doubly robust value estimation for the greedy policy of an online bandit.

The per-step score is

    psi_t = 1{a_t = g_t} / (1 - kappa_t) * (r_t - m_t) + m_t

where ``g_t`` is the greedy action at decision time, ``kappa_t`` the
estimated probability of exploration and ``m_t`` the mean model's prediction
for ``(x_t, g_t)`` frozen *before* the step's update. The value estimate is
the mean of ``psi_t``; its variance combines arm-level residual variance,
inflated by ``1/(1 - kappa_t)``, with the spread of the final plug-in means
across the observed contexts.
"""

from dataclasses import asdict, dataclass, fields, replace
import math
from typing import Optional

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from .arms import OnlineRidge


def normal_quantile(p):
    """Standard normal inverse CDF."""
    return float(ndtri(p))


@dataclass(frozen=True)
class InteractionRecord:
    """One step of a bandit trajectory.

    ``mu_hat`` holds the mean model's predictions for both arms at decision
    time, i.e. before the step's own observation was absorbed.
    """

    t: int
    context: tuple
    feature: tuple
    action: int
    reward: float
    greedy_action: int
    kappa_hat: float
    mu_hat: tuple
    forced_by_clipping: bool = False
    forced_by_burn_in: bool = False
    propensity: Optional[float] = None

    @property
    def exploited(self):
        return self.action == self.greedy_action

    @property
    def mu_hat_at_greedy(self):
        return self.mu_hat[self.greedy_action]


@dataclass
class Trace:
    """Column-oriented bandit trajectory (the fast path behind record lists)."""

    t: np.ndarray
    context: np.ndarray
    feature: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    greedy: np.ndarray
    kappa: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    forced_clip: np.ndarray
    burn_in: np.ndarray
    propensity_: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    @property
    def exploited(self):
        return self.action == self.greedy

    @property
    def mu_greedy(self):
        return np.where(self.greedy == 1, self.mu1, self.mu0)

    @property
    def propensity(self):
        """Estimated probability of the action actually taken."""
        if self.propensity_ is not None:
            return self.propensity_
        return np.where(self.exploited, 1.0 - self.kappa, self.kappa)

    def head(self, n):
        kw = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[:n])
              for f in fields(self)}
        return Trace(**kw)

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            raise ValueError("empty record list")
        props = [r.propensity for r in records]
        return cls(
            t=np.array([r.t for r in records], dtype=int),
            context=np.array([r.context for r in records], dtype=float),
            feature=np.array([r.feature for r in records], dtype=float),
            action=np.array([r.action for r in records], dtype=int),
            reward=np.array([r.reward for r in records], dtype=float),
            greedy=np.array([r.greedy_action for r in records], dtype=int),
            kappa=np.array([r.kappa_hat for r in records], dtype=float),
            mu0=np.array([r.mu_hat[0] for r in records], dtype=float),
            mu1=np.array([r.mu_hat[1] for r in records], dtype=float),
            forced_clip=np.array([r.forced_by_clipping for r in records], dtype=bool),
            burn_in=np.array([r.forced_by_burn_in for r in records], dtype=bool),
            propensity_=None if any(p is None for p in props) else np.array(props, dtype=float),
        )

    def records(self):
        prop = self.propensity_
        return [
            InteractionRecord(
                t=int(self.t[i]),
                context=tuple(self.context[i]),
                feature=tuple(self.feature[i]),
                action=int(self.action[i]),
                reward=float(self.reward[i]),
                greedy_action=int(self.greedy[i]),
                kappa_hat=float(self.kappa[i]),
                mu_hat=(float(self.mu0[i]), float(self.mu1[i])),
                forced_by_clipping=bool(self.forced_clip[i]),
                forced_by_burn_in=bool(self.burn_in[i]),
                propensity=None if prop is None else float(prop[i]),
            )
            for i in range(len(self))
        ]


def as_trace(records):
    return records if isinstance(records, Trace) else Trace.from_records(records)


def _mask(trace, include_burn_in):
    mask = np.ones(len(trace), dtype=bool) if include_burn_in else ~trace.burn_in
    if not mask.any():
        raise ValueError("no post-burn-in records to estimate from")
    return mask


@dataclass
class ValueReport:
    v_hat: float
    sigma2_hat: float
    ci_low: float
    ci_high: float
    alpha: float
    T_effective: int
    baseline_avg_reward: float = math.nan
    baseline_ci: tuple = (math.nan, math.nan)
    variance_fallback: bool = False
    regret: float = math.nan

    CSV_COLUMNS = ("run_id", "algorithm", "T", "v_hat", "sigma2_hat", "ci_low", "ci_high",
                   "baseline_avg", "baseline_lo", "baseline_hi", "regret")

    @property
    def se(self):
        return math.sqrt(self.sigma2_hat / self.T_effective)

    def covers(self, value):
        return self.ci_low <= value <= self.ci_high

    def csv_row(self, run_id, algorithm):
        return {
            "run_id": run_id, "algorithm": algorithm, "T": self.T_effective,
            "v_hat": self.v_hat, "sigma2_hat": self.sigma2_hat,
            "ci_low": self.ci_low, "ci_high": self.ci_high,
            "baseline_avg": self.baseline_avg_reward,
            "baseline_lo": self.baseline_ci[0], "baseline_hi": self.baseline_ci[1],
            "regret": self.regret,
        }

    def as_dict(self):
        return asdict(self)


def dr_scores(exploited, kappa, reward, mu_greedy):
    w = np.asarray(exploited, dtype=float) / (1.0 - np.asarray(kappa, dtype=float))
    mu_greedy = np.asarray(mu_greedy, dtype=float)
    return w * (np.asarray(reward, dtype=float) - mu_greedy) + mu_greedy


def dream_value(records, include_burn_in=False):
    """Doubly robust estimate of the optimal policy's value."""
    tr = as_trace(records)
    m = _mask(tr, include_burn_in)
    return float(np.mean(dr_scores(tr.exploited[m], tr.kappa[m], tr.reward[m], tr.mu_greedy[m])))


def dr_variance(target, weight_prob, sigma2, plug_in):
    """Variance estimate from its two pieces.

    ``target`` is the per-step action the value refers to, ``weight_prob``
    the estimated probability of taking it, ``sigma2 = (s0, s1)`` the arm
    residual variances and ``plug_in`` the final mean model evaluated at
    each context under the final target policy.
    """
    target = np.asarray(target, dtype=float)
    s0, s1 = sigma2
    first = np.mean((target * s1 + (1.0 - target) * s0) / np.asarray(weight_prob, dtype=float))
    plug_in = np.asarray(plug_in, dtype=float)
    second = np.mean((plug_in - plug_in.mean()) ** 2)
    return float(first + second)


def _plug_in(arm0, arm1, features, final_actions):
    m0 = features @ arm0.coef_
    m1 = features @ arm1.coef_
    if final_actions is None:
        final_actions = (m1 > m0).astype(int)
    return np.where(np.asarray(final_actions) == 1, m1, m0)


def dream_variance(records, arm0, arm1, final_greedy=None, features=None, include_burn_in=False):
    """Variance estimate for :func:`dream_value`.

    Residual variances come from the arms' final coefficients. ``features``
    (default: the recorded features) feed the final plug-in means and
    ``final_greedy`` overrides the final greedy policy's actions on them.
    """
    tr = as_trace(records)
    m = _mask(tr, include_burn_in)
    feats = tr.feature if features is None else np.asarray(features, dtype=float)
    fg = None if final_greedy is None else np.asarray(final_greedy)[m]
    plug = _plug_in(arm0, arm1, feats[m], fg)
    sigma2 = (arm0.residual_variance(), arm1.residual_variance())
    return dr_variance(tr.greedy[m], 1.0 - tr.kappa[m], sigma2, plug)


def wald_ci(v_hat, sigma2_hat, T_effective, alpha=0.05):
    if sigma2_hat < 0 or T_effective < 1 or not 0 < alpha <= 1:
        raise ValueError("need sigma2_hat >= 0, T >= 1 and alpha in (0, 1]")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(sigma2_hat / T_effective)
    return v_hat - half, v_hat + half


def averaged_reward(records, alpha=0.05, include_burn_in=True):
    """Plain mean reward with a naive Wald interval (the comparison baseline)."""
    tr = as_trace(records)
    r = tr.reward if include_burn_in else tr.reward[_mask(tr, False)]
    if len(r) == 0:
        raise ValueError("empty record list")
    mean = float(r.mean())
    return mean, wald_ci(mean, float(r.var()), len(r), alpha)


def dream_report(records, arm0, arm1, alpha=0.05, final_greedy=None, features=None,
                 include_burn_in=False):
    tr = as_trace(records)
    v = dream_value(tr, include_burn_in)
    s2 = dream_variance(tr, arm0, arm1, final_greedy, features, include_burn_in)
    n = int(_mask(tr, include_burn_in).sum())
    base, base_ci = averaged_reward(tr, alpha)
    return ValueReport(
        v_hat=v, sigma2_hat=s2, ci_low=wald_ci(v, s2, n, alpha)[0], ci_high=wald_ci(v, s2, n, alpha)[1],
        alpha=alpha, T_effective=n, baseline_avg_reward=base, baseline_ci=base_ci,
        variance_fallback=not (arm0.has_residual_variance() and arm1.has_residual_variance()),
    )


def replay_arms(records, omega=1.0):
    """Rebuild both arms' ridge state from a trace's features, actions and rewards."""
    tr = as_trace(records)
    arms = []
    for a in (0, 1):
        arm = OnlineRidge(omega=omega).initialize(tr.feature.shape[1])
        for x, r in zip(tr.feature[tr.action == a], tr.reward[tr.action == a]):
            arm.update(x, float(r))
        arms.append(arm)
    return arms


def known_policy_value(records, target, arm0=None, arm1=None, final_target=None, alpha=0.05,
                       include_burn_in=False, omega=1.0, propensity_clip=(1e-3, 1.0)):
    """Doubly robust value and interval for a fixed target policy.

    ``target`` is a callable mapping the context matrix to actions, or an
    array of per-step target actions. ``final_target`` (default: same as
    ``target``) gives the actions used for the final plug-in term. The
    propensity of the target action is the recorded propensity when it
    matches the action taken and its complement otherwise.
    """
    tr = as_trace(records)
    m = _mask(tr, include_burn_in)
    if arm0 is None or arm1 is None:
        arm0, arm1 = replay_arms(tr, omega)

    def resolve(pol):
        acts = pol(tr.context) if callable(pol) else pol
        acts = np.asarray(acts).astype(int)
        if acts.shape != (len(tr),):
            raise ValueError(f"target policy produced shape {acts.shape}, expected ({len(tr)},)")
        return acts

    pe = resolve(target)
    pe_final = pe if final_target is None else resolve(final_target)
    lo, hi = propensity_clip
    prop = np.clip(tr.propensity, lo, hi)
    match = tr.action == pe
    prop_target = np.clip(np.where(match, prop, 1.0 - prop), lo, hi)
    mu_target = np.where(pe == 1, tr.mu1, tr.mu0)

    psi = match[m] / prop[m] * (tr.reward[m] - mu_target[m]) + mu_target[m]
    v = float(psi.mean())
    plug = _plug_in(arm0, arm1, tr.feature[m], pe_final[m])
    s2 = dr_variance(pe[m], prop_target[m], (arm0.residual_variance(), arm1.residual_variance()), plug)
    n = int(m.sum())
    ci = wald_ci(v, s2, n, alpha)
    base, base_ci = averaged_reward(tr, alpha)
    return ValueReport(v_hat=v, sigma2_hat=s2, ci_low=ci[0], ci_high=ci[1], alpha=alpha,
                       T_effective=n, baseline_avg_reward=base, baseline_ci=base_ci,
                       variance_fallback=not (arm0.has_residual_variance() and arm1.has_residual_variance()))


def regret_increments(records, true_mean):
    """Per-step ``max_a mu(x_t, a) - mu(x_t, a_t)``; ``true_mean(contexts, a)`` returns means."""
    tr = as_trace(records)
    m0 = np.asarray(true_mean(tr.context, 0), dtype=float)
    m1 = np.asarray(true_mean(tr.context, 1), dtype=float)
    return np.maximum(m0, m1) - np.where(tr.action == 1, m1, m0)


def cumulative_regret(records, true_mean):
    if true_mean is None:
        raise ValueError("regret needs the true mean function (synthetic environments only)")
    return float(regret_increments(records, true_mean).sum())


class DREAMEstimator(BaseEstimator):
    """Estimator-style wrapper: ``fit`` a trajectory, read ``value_`` and ``ci_``.

    Parameters
    ----------
    alpha : float, default=0.05
        Interval level is ``1 - alpha``.
    include_burn_in : bool, default=False
        Whether burn-in steps enter the sums.
    """

    def __init__(self, alpha=0.05, include_burn_in=False):
        self.alpha = alpha
        self.include_burn_in = include_burn_in

    def fit(self, records, arm0, arm1, final_greedy=None, features=None):
        self.report_ = dream_report(records, arm0, arm1, self.alpha, final_greedy, features,
                                    self.include_burn_in)
        self.value_ = self.report_.v_hat
        self.sigma2_ = self.report_.sigma2_hat
        self.ci_ = (self.report_.ci_low, self.report_.ci_high)
        return self
