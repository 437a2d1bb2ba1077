"""Data-generating processes for two-armed contextual bandits."""

import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from .arms import FeatureMap

TWO_PI = 2.0 * math.pi


class DatasetExhausted(RuntimeError):
    pass


def _default_beta(a):
    return np.array([2.0 - a, 5.0 * a - 1.0, 1.5 - 3.0 * a])


@dataclass
class SyntheticEnv:
    """Contexts uniform on ``[0, 2pi]^2``; ``mu(x, a) = (1, cos x1, cos x2) . beta(a)``.

    Defaults give ``beta(a) = (2 - a, 5a - 1, 1.5 - 3a)`` and Gaussian noise
    with standard deviation 0.1 on both arms.
    """

    beta0: np.ndarray = field(default_factory=lambda: _default_beta(0))
    beta1: np.ndarray = field(default_factory=lambda: _default_beta(1))
    noise_sd: tuple = (0.1, 0.1)
    dim_raw: int = 2

    has_oracle = True

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.beta1 = np.asarray(self.beta1, dtype=float)
        self.true_features = FeatureMap("cosine")
        if self.beta0.shape != (self.dim_raw + 1,) or self.beta1.shape != (self.dim_raw + 1,):
            raise ValueError("beta vectors must have length dim_raw + 1")

    def clone(self):
        return self

    def reset(self, rng):
        return self

    def sample_context(self, rng):
        return rng.uniform(0.0, TWO_PI, self.dim_raw)

    def draw_reward(self, context, action, rng):
        beta = self.beta1 if action == 1 else self.beta0
        mean = beta[0] + float(np.cos(context) @ beta[1:])
        return mean + self.noise_sd[action] * rng.standard_normal()

    def sample_step(self, rng):
        x = self.sample_context(rng)
        return x, lambda a: self.draw_reward(x, a, rng)

    def true_mean(self, contexts, action):
        beta = self.beta1 if action == 1 else self.beta0
        return self.true_features(contexts) @ beta

    def oracle_policy(self, contexts):
        """Optimal action(s); 1 only where arm 1 is strictly better."""
        contexts = np.asarray(contexts, dtype=float)
        gap = self.true_features(contexts) @ (self.beta1 - self.beta0)
        out = (gap > 0).astype(int)
        return int(out) if out.ndim == 0 else out

    # -- quadrature oracles ------------------------------------------------

    def _grid_means(self, grid_n):
        if grid_n < 100:
            raise ValueError("grid_n must be at least 100 per axis")
        if self.dim_raw != 2:
            raise NotImplementedError("quadrature oracles cover the 2-d environment only")
        h = TWO_PI / grid_n
        c = np.cos((np.arange(grid_n) + 0.5) * h)
        b0, b1 = self.beta0, self.beta1
        m0 = b0[0] + b0[1] * c[:, None] + b0[2] * c[None, :]
        m1 = b1[0] + b1[1] * c[:, None] + b1[2] * c[None, :]
        return m0, m1

    def _grid_contexts(self, grid_n):
        g = (np.arange(grid_n) + 0.5) * (TWO_PI / grid_n)
        x1, x2 = np.meshgrid(g, g, indexing="ij")
        return np.stack([x1, x2], axis=-1)

    def oracle_value(self, grid_n=2000):
        """Value of the optimal policy by the 2-d midpoint rule."""
        m0, m1 = self._grid_means(grid_n)
        return float(np.mean(np.where(m1 > m0, m1, m0)))

    def oracle_arm_value(self, action, grid_n=2000):
        """Value of the constant policy that always plays ``action``."""
        m0, m1 = self._grid_means(grid_n)
        return float(np.mean(m1 if action == 1 else m0))

    def oracle_sigma_dr(self, kappa_inf=0.0, grid_n=2000):
        """Asymptotic variance of the doubly robust value estimator.

        ``kappa_inf`` is the limiting probability of exploration, either a
        constant or a callable on an ``(..., 2)`` array of contexts.
        """
        m0, m1 = self._grid_means(grid_n)
        opt = m1 > m0
        if callable(kappa_inf):
            kappa = np.asarray(kappa_inf(self._grid_contexts(grid_n)), dtype=float)
        else:
            kappa = float(kappa_inf)
        if np.any(np.asarray(kappa) < 0) or np.any(np.asarray(kappa) > 0.5):
            raise ValueError("kappa_inf must lie in [0, 0.5]")
        s0, s1 = self.noise_sd[0] ** 2, self.noise_sd[1] ** 2
        first = np.mean(np.where(opt, s1, s0) / (1.0 - kappa))
        best = np.where(opt, m1, m0)
        return float(first + best.var())


@dataclass
class DatasetEnv:
    """Classification rows replayed as a two-armed bandit.

    Rows are drawn uniformly without replacement; the reward for action
    ``a`` is ``Normal(1{a == label}, reward_sd^2)``. Features already carry
    the intercept.
    """

    features: np.ndarray
    labels: np.ndarray
    reward_sd: float = 0.5

    has_oracle = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (n, d) with one label per row")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self._order = None
        self._cursor = 0
        self._label = None

    @property
    def dim_raw(self):
        return self.features.shape[1]

    @property
    def n_rows(self):
        return len(self.labels)

    def clone(self):
        return DatasetEnv(self.features, self.labels, self.reward_sd)

    def reset(self, rng):
        self._order = rng.permutation(self.n_rows)
        self._cursor = 0
        return self

    def sample_context(self, rng):
        if self._order is None:
            self.reset(rng)
        if self._cursor >= self.n_rows:
            raise DatasetExhausted(f"all {self.n_rows} rows consumed")
        i = self._order[self._cursor]
        self._cursor += 1
        self._label = int(self.labels[i])
        return self.features[i]

    def draw_reward(self, context, action, rng):
        return float(action == self._label) + self.reward_sd * rng.standard_normal()

    def sample_step(self, rng):
        x = self.sample_context(rng)
        return x, lambda a: self.draw_reward(x, a, rng)

    @property
    def last_label(self):
        return self._label

    def oracle_value(self, grid_n=None):
        # the label-matching policy earns mean reward 1
        return 1.0


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(path, reward_sd=0.5):
    """Read ``features..., label`` rows from a CSV (optional header) and prepend an intercept."""
    path = Path(path)
    feats, labels = [], []
    ncol = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row):
                continue
            if ncol is None:
                ncol = len(row)
                if ncol < 2:
                    raise ValueError(f"{path}:{lineno}: need at least one feature and a label")
            if len(row) != ncol:
                raise ValueError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if vals[-1] not in (0.0, 1.0):
                raise ValueError(f"{path}:{lineno}: label {row[-1].strip()!r} is not 0 or 1")
            feats.append([1.0] + vals[:-1])
            labels.append(int(vals[-1]))
    if not labels:
        raise ValueError(f"{path}: no data rows")
    return DatasetEnv(np.array(feats), np.array(labels), reward_sd)


def make_sea_like(n_rows=5000, seed=0, threshold=10.0, margin=2.25, label_noise=0.0,
                  reward_sd=0.5):
    """SEA-style concept data: three uniform attributes on ``[0, 10]``.

    The label is ``1{x1 + x2 > threshold}``; points within ``margin`` of the
    boundary are rejected so a linear model can separate the classes, and
    ``label_noise`` flips a fraction of labels. The returned features carry
    an intercept, giving four columns.
    """
    rng = np.random.default_rng(seed)
    rows = []
    have = 0
    while have < n_rows:
        x = rng.uniform(0.0, 10.0, size=(2 * (n_rows - have) + 16, 3))
        s = x[:, 0] + x[:, 1] - threshold
        keep = x[np.abs(s) >= margin]
        rows.append(keep)
        have += len(keep)
    x = np.concatenate(rows)[:n_rows]
    y = (x[:, 0] + x[:, 1] > threshold).astype(int)
    if label_noise > 0:
        flip = rng.random(n_rows) < label_noise
        y = np.where(flip, 1 - y, y)
    feats = np.hstack([np.ones((n_rows, 1)), x])
    return DatasetEnv(feats, y, reward_sd)


def write_dataset(env, path):
    """Write a :class:`DatasetEnv` back to CSV without the intercept column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        p = env.features.shape[1] - 1
        w.writerow([f"x{i + 1}" for i in range(p)] + ["label"])
        for x, y in zip(env.features, env.labels):
            w.writerow([format(v, ".17g") for v in x[1:]] + [int(y)])
