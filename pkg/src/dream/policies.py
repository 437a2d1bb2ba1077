"""Two-armed linear bandit action rules: UCB, Thompson sampling, epsilon-greedy.

All rules break exact ties toward action 0.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .linalg import min_eigenvalue

ALGORITHMS = ("ucb", "ts", "eg")


@dataclass(frozen=True)
class Schedule:
    """A positive sequence indexed by the step ``t >= 1``.

    ``constant``: ``scale``; ``power``: ``scale * t**(-power)``;
    ``sqrt_log``: ``sqrt(scale * log(t) / t)``.
    """

    kind: str = "constant"
    scale: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power", "sqrt_log"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError(f"schedule scale must be nonnegative, got {self.scale}")

    @classmethod
    def constant(cls, value):
        return cls("constant", float(value), 0.0)

    @classmethod
    def power_law(cls, scale, power):
        return cls("power", float(scale), float(power))

    @classmethod
    def sqrt_log(cls, scale):
        return cls("sqrt_log", float(scale), 0.0)

    def __call__(self, t):
        if self.kind == "constant":
            return self.scale
        if self.kind == "power":
            return self.scale * t ** (-self.power)
        return math.sqrt(self.scale * math.log(t) / t)

    def describe(self):
        if self.kind == "constant":
            return repr(self.scale)
        if self.kind == "power":
            return f"{self.scale!r}*t^-{self.power!r}"
        return f"sqrt({self.scale!r}*log(t)/t)"

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`describe`, e.g. ``0.1*t^-0.4`` or ``sqrt(0.5*log(t)/t)``."""
        s = text.replace(" ", "")
        if s.startswith("sqrt(") and s.endswith("*log(t)/t)"):
            return cls.sqrt_log(float(s[5 : -len("*log(t)/t)")]))
        if "*t^-" in s:
            scale, power = s.split("*t^-")
            return cls.power_law(float(scale), float(power))
        if s.startswith("t^-"):
            return cls.power_law(1.0, float(s[3:]))
        return cls.constant(float(s))


@dataclass(frozen=True)
class PolicySpec:
    """Bandit algorithm plus its exploration, clipping and burn-in settings."""

    algorithm: str = "ucb"
    ucb_c: Schedule = Schedule.constant(1.0)
    ts_rho: float = 2.0
    eg_eps: Schedule = Schedule.power_law(0.1, 0.4)
    clipping: Schedule = Schedule.constant(0.01)
    burn_in: int = 50
    burn_in_mode: str = "alternate"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.ts_rho < 0:
            raise ValueError("ts_rho must be nonnegative")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.burn_in_mode not in ("alternate", "uniform"):
            raise ValueError(f"burn_in_mode must be 'alternate' or 'uniform', got {self.burn_in_mode!r}")
        _check_clipping_order(self.clipping)

    def with_clipping(self, clipping):
        return replace(self, clipping=clipping)


def _check_clipping_order(schedule, horizon=4096):
    # p_t must shrink no faster than t^{-1/2}: p_t * sqrt(t) nondecreasing
    if schedule.kind == "constant":
        return
    prev = -math.inf
    for t in range(1, horizon + 1):
        v = schedule(t) * math.sqrt(t)
        if v < prev - 1e-12:
            raise ValueError(
                f"clipping schedule {schedule.describe()} decays faster than t^(-1/2) (p_t*sqrt(t) drops at t={t})"
            )
        prev = v
        if schedule(t) > 1:
            raise ValueError(f"clipping rate exceeds 1 at t={t}")


@dataclass(frozen=True)
class Decision:
    action: int
    greedy_action: int
    forced_by_clipping: bool = False
    forced_by_burn_in: bool = False


def greedy_action(arm0, arm1, feature):
    """1 iff the predicted mean of arm 1 strictly exceeds arm 0."""
    return int(arm1.predict_mean(feature) > arm0.predict_mean(feature))


def select_ucb(arm0, arm1, feature, t, spec):
    c = spec.ucb_c(t)
    m0 = arm0.predict_mean(feature)
    m1 = arm1.predict_mean(feature)
    greedy = int(m1 > m0)
    if c == 0.0:
        return Decision(greedy, greedy)
    s0 = arm0.predict_sd(feature)
    s1 = arm1.predict_sd(feature)
    return Decision(int(m1 + c * s1 > m0 + c * s0), greedy)


def _posterior_draw(arm, rho, rng):
    if rho == 0.0:
        return arm.coef_
    cov = rho * rho * arm.gram_reg_inv_
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        arm.refactorize()
        chol = np.linalg.cholesky(rho * rho * arm.gram_reg_inv_)
    return arm.coef_ + chol @ rng.standard_normal(len(arm.coef_))


def select_ts(arm0, arm1, feature, spec, rng):
    greedy = greedy_action(arm0, arm1, feature)
    theta0 = _posterior_draw(arm0, spec.ts_rho, rng)
    theta1 = _posterior_draw(arm1, spec.ts_rho, rng)
    return Decision(int(feature @ theta1 > feature @ theta0), greedy)


def select_eg(arm0, arm1, feature, t, spec, rng):
    eps = spec.eg_eps(t)
    greedy = greedy_action(arm0, arm1, feature)
    if rng.random() < 1.0 - eps:
        return Decision(greedy, greedy)
    return Decision(int(rng.integers(2)), greedy)


def select(arm0, arm1, feature, t, spec, rng):
    if spec.algorithm == "ucb":
        return select_ucb(arm0, arm1, feature, t, spec)
    if spec.algorithm == "ts":
        return select_ts(arm0, arm1, feature, spec, rng)
    return select_eg(arm0, arm1, feature, t, spec, rng)


def burn_in_decision(arm0, arm1, feature, t, spec, rng):
    if spec.burn_in_mode == "alternate":
        action = (t - 1) % 2
    else:
        action = int(rng.integers(2))
    return Decision(action, greedy_action(arm0, arm1, feature), forced_by_burn_in=True)


def proposal_probability(arm0, arm1, feature, t, spec, proposed):
    """Probability, given the history, that the algorithm proposes action 1.

    UCB is deterministic; for Thompson sampling the difference of the two
    posterior draws projected on ``feature`` is Gaussian, so the probability
    is available in closed form.
    """
    if spec.algorithm == "ucb":
        return float(proposed.action)
    greedy = proposed.greedy_action
    if spec.algorithm == "eg":
        eps = spec.eg_eps(t)
        return (1.0 - eps) * greedy + 0.5 * eps
    gap = arm1.predict_mean(feature) - arm0.predict_mean(feature)
    scale = spec.ts_rho * math.hypot(arm0.predict_sd(feature), arm1.predict_sd(feature))
    if scale == 0.0:
        return float(gap > 0)
    return 0.5 * math.erfc(-gap / (scale * math.sqrt(2.0)))


def clipping_flags(history_grams, total_gram, t, spec):
    """Whether the guard would override a proposal of action 0, resp. action 1."""
    p = spec.clipping(t)
    if p <= 0.0:
        return False, False
    threshold = p * min_eigenvalue(np.asarray(total_gram) / t)
    lam0 = min_eigenvalue(np.asarray(history_grams[0]) / t)
    lam1 = min_eigenvalue(np.asarray(history_grams[1]) / t)
    return lam1 < threshold, lam0 < threshold


def apply_clipping(proposed, flags):
    if flags[proposed.action]:
        return Decision(1 - proposed.action, proposed.greedy_action, forced_by_clipping=True,
                        forced_by_burn_in=proposed.forced_by_burn_in)
    return proposed


def action_propensity(action, p_propose_one, flags):
    """Probability of the final ``action`` once the clipping override is folded in."""
    p_one = p_propose_one * (not flags[1]) + (1.0 - p_propose_one) * flags[0]
    return p_one if action == 1 else 1.0 - p_one


def clipping_guard(history_grams, total_gram, proposed, t, spec):
    """Force the unchosen arm when its design has too little eigenvalue mass.

    ``history_grams[a]`` and ``total_gram`` are running sums of ``x x^T`` over
    raw contexts up to and including step ``t``; they are scaled by ``1/t``
    here. The proposed action is flipped when
    ``lambda_min(G_other / t) < p_t * lambda_min(G_total / t)``.
    """
    return apply_clipping(proposed, clipping_flags(history_grams, total_gram, t, spec))
