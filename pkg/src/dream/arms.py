"""Per-action online ridge regression.

Each arm keeps the regularized Gram matrix ``D'D + omega*I``, its inverse
(maintained by rank-1 updates), ``D'R`` and the raw observation log. The log
is needed because the residual variance is recomputed against the *latest*
coefficients rather than the ones in force when each reward arrived.
"""

from dataclasses import dataclass
import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .linalg import quadratic_form, sherman_morrison_inverse_update

#: residual variance reported while an arm has no more pulls than coefficients
RESIDUAL_VARIANCE_FALLBACK = 1.0


@dataclass(frozen=True)
class FeatureMap:
    """Map raw contexts to model features whose first coordinate is 1.

    ``identity`` passes contexts through unchanged (use it when the context
    already carries an intercept), ``linear`` prepends an intercept and
    ``cosine`` maps ``x`` to ``(1, cos x_1, ..., cos x_p)``.
    """

    name: str = "identity"

    KINDS = ("identity", "linear", "cosine")

    def __post_init__(self):
        if self.name not in self.KINDS:
            raise ValueError(f"unknown feature map {self.name!r}; choose from {self.KINDS}")

    def n_features(self, n_raw):
        return n_raw if self.name == "identity" else n_raw + 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "identity":
            return x
        body = np.cos(x) if self.name == "cosine" else x
        ones = np.ones(x.shape[:-1] + (1,))
        return np.concatenate([ones, body], axis=-1)


class OnlineRidge(RegressorMixin, BaseEstimator):
    """Ridge regression for one arm, updated one observation at a time.

    Parameters
    ----------
    omega : float, default=1.0
        Ridge penalty. ``omega=1`` makes the ridge posterior coincide with the
        linear UCB / Thompson sampling posterior under a standard normal prior.
    refactor_every : int, default=512
        Recompute the inverse Gram matrix from scratch after this many rank-1
        updates to bound floating point drift.
    """

    def __init__(self, omega=1.0, refactor_every=512):
        self.omega = omega
        self.refactor_every = refactor_every

    # -- state -------------------------------------------------------------

    def initialize(self, n_features):
        """Reset to the empty-design state in ``n_features`` dimensions."""
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        d = int(n_features)
        self.n_features_in_ = d
        self.gram_reg_ = self.omega * np.eye(d)
        self.gram_reg_inv_ = np.eye(d) / self.omega
        self.xty_ = np.zeros(d)
        self.coef_ = np.zeros(d)
        self.n_obs_ = 0
        self._since_refactor = 0
        self._X = np.empty((16, d))
        self._y = np.empty(16)
        return self

    @property
    def pull_count(self):
        return self.n_obs_

    @property
    def observations(self):
        """Stored ``(features, rewards)`` arrays, oldest first."""
        return self._X[: self.n_obs_], self._y[: self.n_obs_]

    def update(self, feature, reward):
        """Absorb one ``(feature, reward)`` pair."""
        x = np.asarray(feature, dtype=float)
        if x.shape != (self.n_features_in_,):
            raise ValueError(f"feature has shape {x.shape}, arm expects ({self.n_features_in_},)")
        if not (math.isfinite(reward) and np.isfinite(x).all()):
            raise ValueError("non-finite feature or reward")

        self.gram_reg_ += np.outer(x, x)
        self.xty_ += reward * x
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactorize()
        else:
            u = self.gram_reg_inv_ @ x
            denom = 1.0 + x @ u
            if not denom > 0.0:
                self.refactorize()
            else:
                self.gram_reg_inv_ -= np.outer(u, u) / denom
                self.coef_ = self.gram_reg_inv_ @ self.xty_

        n = self.n_obs_
        if n == len(self._y):
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._X[n] = x
        self._y[n] = reward
        self.n_obs_ = n + 1
        return self

    def refactorize(self):
        inv = np.linalg.inv(self.gram_reg_)
        self.gram_reg_inv_ = 0.5 * (inv + inv.T)
        self.coef_ = self.gram_reg_inv_ @ self.xty_
        self._since_refactor = 0

    # -- sklearn surface ---------------------------------------------------

    def partial_fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if not hasattr(self, "coef_"):
            self.initialize(X.shape[1])
        for x, r in zip(X, y):
            self.update(x, float(r))
        return self

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.initialize(X.shape[1])
        return self.partial_fit(X, y)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_

    # -- single-context predictions used inside the bandit loop -------------

    def predict_mean(self, feature):
        return float(np.dot(feature, self.coef_))

    def predict_sd(self, feature):
        q = float(feature @ self.gram_reg_inv_ @ feature)
        if q < 0.0:
            self.refactorize()
            q = quadratic_form(self.gram_reg_inv_, feature)
            if q < 0.0:
                raise FloatingPointError(f"negative predictive variance {q} after refactorization")
        return math.sqrt(q)

    def incremental_inverse(self, feature):
        """Inverse Gram matrix after hypothetically adding ``feature`` (validated path)."""
        return sherman_morrison_inverse_update(self.gram_reg_inv_, feature)

    def residual_variance(self, coef=None):
        """Mean squared residual over this arm's observations, divided by ``n - d``.

        Uses ``coef`` (default: current coefficients) against every stored
        observation. Returns :data:`RESIDUAL_VARIANCE_FALLBACK` when the arm has
        at most ``d`` pulls.
        """
        d = self.n_features_in_
        n = self.n_obs_
        if n <= d:
            return RESIDUAL_VARIANCE_FALLBACK
        coef = self.coef_ if coef is None else np.asarray(coef, dtype=float)
        X, y = self.observations
        resid = X @ coef - y
        return float(resid @ resid) / (n - d)

    def has_residual_variance(self):
        return self.n_obs_ > self.n_features_in_
