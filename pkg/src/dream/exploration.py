"""Probability-of-exploration model and computable tail / exploration bounds."""

from dataclasses import dataclass
import math

import numpy as np
from sklearn.base import BaseEstimator

from .policies import Schedule

KAPPA_KINDS = ("logistic", "eg_closed_form", "constant")


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class ExplorationModel(BaseEstimator):
    """Online estimate of the probability that the action differs from the greedy one.

    Parameters
    ----------
    kind : {"logistic", "eg_closed_form", "constant"}
        ``logistic`` fits ``P(explore | t, x)`` on features ``(1, log t, x)``
        by one SGD step per observation; ``eg_closed_form`` returns
        ``eps_t / 2``; ``constant`` returns ``constant_value``.
    eg_eps : Schedule, optional
        Epsilon schedule, required by ``eg_closed_form``.
    constant_value : float, default=0.5
    learning_rate : float, default=0.5
        SGD step is ``learning_rate / sqrt(n_updates)``.
    kappa_min, kappa_max : float
        Every prediction is clamped to ``[kappa_min, kappa_max]``. Keeping
        ``kappa_max`` at 0.5 bounds the inverse exploitation weight by 2.
    """

    def __init__(self, kind="logistic", eg_eps=None, constant_value=0.5,
                 learning_rate=0.5, kappa_min=1e-3, kappa_max=0.5):
        self.kind = kind
        self.eg_eps = eg_eps
        self.constant_value = constant_value
        self.learning_rate = learning_rate
        self.kappa_min = kappa_min
        self.kappa_max = kappa_max

    def _validate(self):
        if self.kind not in KAPPA_KINDS:
            raise ValueError(f"kind must be one of {KAPPA_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.kappa_min <= self.kappa_max < 1.0:
            raise ValueError("need 0 <= kappa_min <= kappa_max < 1")
        if self.kind == "eg_closed_form" and self.eg_eps is None:
            raise ValueError("eg_closed_form needs the epsilon schedule (eg_eps)")

    def initialize(self, n_context):
        self._validate()
        self.weights_ = np.zeros(n_context + 2)
        self.n_updates_ = 0
        return self

    @staticmethod
    def _design(t, context):
        return np.concatenate(([1.0, math.log(t)], np.asarray(context, dtype=float)))

    def partial_fit(self, t, context, explored):
        """One online update with the exploration indicator observed at step ``t``."""
        if t < 1:
            raise ValueError("t must be >= 1")
        if not hasattr(self, "weights_"):
            self.initialize(len(context))
        if self.kind != "logistic":
            return self
        phi = self._design(t, context)
        self.n_updates_ += 1
        p = _sigmoid(float(self.weights_ @ phi))
        step = self.learning_rate / math.sqrt(self.n_updates_)
        self.weights_ -= step * (p - float(explored)) * phi
        return self

    def predict_kappa(self, t, context):
        if t < 1:
            raise ValueError("t must be >= 1")
        if self.kind == "constant":
            raw = self.constant_value
        elif self.kind == "eg_closed_form":
            raw = 0.5 * self.eg_eps(t)
        else:
            if not hasattr(self, "weights_"):
                self.initialize(len(context))
            raw = _sigmoid(float(self.weights_ @ self._design(t, context)))
        return min(max(raw, self.kappa_min), self.kappa_max)


@dataclass(frozen=True)
class TheoryParams:
    """Constants of the boundedness, clipping and margin assumptions.

    ``lam`` lower-bounds the smallest eigenvalue of ``E[x x^T]``, ``l_x``
    bounds ``|x|_inf``, ``sigma_sg`` is the sub-Gaussian noise parameter and
    ``beta_norms`` holds ``|beta(0)|_2, |beta(1)|_2``.
    """

    lam: float
    l_x: float
    d: int
    sigma_sg: float
    beta_norms: tuple = (0.0, 0.0)
    gamma: float = 1.0
    margin_M: float = 1.0
    margin_delta: float = 1.0
    u_bound: float = 1.0

    def __post_init__(self):
        for name in ("lam", "l_x", "d", "sigma_sg", "gamma", "margin_M", "margin_delta", "u_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if len(self.beta_norms) != 2 or min(self.beta_norms) < 0:
            raise ValueError("beta_norms must hold two nonnegative norms")


def ridge_tail_bound(params, t, p_t, h, arm):
    """Bound on ``P(|beta_hat_t(a) - beta(a)|_1 > h)``; 1 when ``h`` is too small to say anything."""
    d = params.d
    shift = h - math.sqrt(d) * params.beta_norms[arm]
    if shift <= 0:
        return 1.0
    expo = t * p_t**2 * params.lam**2 * shift**2 / (8 * d**2 * params.sigma_sg**2 * params.l_x**2)
    return min(1.0, 2 * d * math.exp(-expo))


def c_xi(params, xi):
    """Rate constant of the mean-difference tail bound; 0 when it is vacuous."""
    d, lx = params.d, params.l_x
    slack = [xi / 2 - math.sqrt(d) * lx * b for b in params.beta_norms]
    if min(slack) <= 0:
        return 0.0
    return params.lam**2 * min(s * s for s in slack) / (8 * d**2 * params.sigma_sg**2 * lx**4)


def mean_tail_bound(params, t, p_t, xi):
    """Bound on ``P(|mu_hat(x,1) - mu_hat(x,0) - Delta_x| > xi)``."""
    if not xi > 0:
        raise ValueError("xi must be positive")
    return min(1.0, 4 * params.d * math.exp(-t * p_t**2 * c_xi(params, xi)))


def kappa_upper_bound(params, algorithm, t, p_prev, c_t_or_rho, delta_x, xi):
    """Upper bound on the probability of exploration at step ``t``.

    ``c_t_or_rho`` is the UCB width ``c_t``, the TS scale ``rho`` or, for
    epsilon-greedy, ``eps_t`` (a number or a :class:`Schedule`).
    """
    if algorithm == "eg":
        eps = c_t_or_rho(t) if isinstance(c_t_or_rho, Schedule) else c_t_or_rho
        return min(1.0, eps / 2)
    if algorithm not in ("ucb", "ts"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if not 0 < xi < abs(delta_x) / 2:
        raise ValueError(f"need 0 < xi < |delta_x|/2, got xi={xi}, delta_x={delta_x}")
    n = t - 1
    if n <= 0 or p_prev <= 0:
        return 1.0
    tail = 4 * params.d * math.exp(-n * p_prev**2 * c_xi(params, xi))
    if algorithm == "ucb":
        width = 2 * c_t_or_rho * params.l_x / math.sqrt(n * p_prev * params.lam)
        head = params.margin_M * (width + xi) ** params.gamma
    else:
        rho = c_t_or_rho
        head = math.exp(-((abs(delta_x) - xi) ** 2) * n * p_prev * params.lam / (4 * rho**2 * params.l_x**2))
    return min(1.0, head + tail)
