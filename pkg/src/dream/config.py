"""Experiment configuration and its flat ``key=value`` serialization."""

from dataclasses import dataclass, field, fields, replace
import hashlib

from .policies import PolicySpec, Schedule

ENVS = ("synthetic", "sea", "dataset")
DEFAULT_CHECKPOINTS = (100, 250, 500, 1000, 2000)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a Monte Carlo study.

    ``feature_map`` drives the bandit's mean model; ``alt_feature_map``, when
    set, fits a second (typically misspecified) mean model on the same data
    that feeds only the ``dream_mu_misspec`` estimate. ``None`` for either
    picks the environment default: cosine / linear for ``synthetic``,
    identity / none for dataset environments.
    """

    env: str = "synthetic"
    T: int = 2000
    policy: PolicySpec = PolicySpec()
    reps: int = 200
    alpha: float = 0.05
    base_seed: int = 0
    checkpoints: tuple = DEFAULT_CHECKPOINTS
    omega: float = 1.0
    feature_map: str = None
    alt_feature_map: str = None
    kappa_kind: str = None
    include_burn_in: bool = False
    noise_sd: float = 0.1
    reward_sd: float = 0.5
    dataset_path: str = None
    sea_rows: int = 20000
    sea_seed: int = 0
    sea_margin: float = 2.25

    def __post_init__(self):
        if self.env not in ENVS:
            raise ConfigError("env", f"must be one of {ENVS}, got {self.env!r}")
        if self.env == "dataset" and not self.dataset_path:
            raise ConfigError("dataset_path", "required when env=dataset")
        if self.T < 1:
            raise ConfigError("T", "must be a positive integer")
        if self.T <= self.policy.burn_in:
            raise ConfigError("T", f"must exceed the burn-in T0={self.policy.burn_in}")
        if self.reps < 1:
            raise ConfigError("reps", "must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha", "must lie in (0, 1)")
        if self.omega <= 0:
            raise ConfigError("omega", "must be positive")
        synthetic = self.env == "synthetic"
        if self.feature_map is None:
            object.__setattr__(self, "feature_map", "cosine" if synthetic else "identity")
        if self.alt_feature_map is None and synthetic:
            object.__setattr__(self, "alt_feature_map", "linear")
        if self.alt_feature_map == "none":
            object.__setattr__(self, "alt_feature_map", None)
        if self.kappa_kind is None:
            object.__setattr__(self, "kappa_kind",
                               "eg_closed_form" if self.policy.algorithm == "eg" else "logistic")
        if self.kappa_kind == "eg_closed_form" and self.policy.algorithm != "eg":
            raise ConfigError("kappa_kind", "eg_closed_form only applies to algo=eg")
        cps = tuple(sorted({int(c) for c in self.checkpoints if int(c) <= self.T}))
        if not cps or cps[-1] != self.T:
            cps = tuple(sorted(set(cps) | {self.T}))
        if cps[0] <= self.policy.burn_in:
            raise ConfigError("checkpoints", f"must all exceed the burn-in T0={self.policy.burn_in}")
        object.__setattr__(self, "checkpoints", cps)

    def replace(self, **changes):
        return replace(self, **changes)

    # -- flat key=value form -----------------------------------------------

    def to_flat(self):
        p = self.policy
        out = {
            "env": self.env, "T": self.T, "reps": self.reps, "alpha": self.alpha,
            "seed": self.base_seed, "checkpoints": ",".join(map(str, self.checkpoints)),
            "omega": self.omega, "feature_map": self.feature_map,
            "alt_feature_map": self.alt_feature_map or "none", "kappa": self.kappa_kind,
            "include_burn_in": int(self.include_burn_in), "noise_sd": self.noise_sd,
            "reward_sd": self.reward_sd, "dataset_path": self.dataset_path or "",
            "sea_rows": self.sea_rows, "sea_seed": self.sea_seed, "sea_margin": self.sea_margin,
            "algo": p.algorithm, "ucb_c": p.ucb_c.describe(), "rho": p.ts_rho,
            "eps": p.eg_eps.describe(), "clip": p.clipping.describe(), "T0": p.burn_in,
            "burn_in_mode": p.burn_in_mode,
        }
        return {k: str(v) for k, v in out.items()}

    def dumps(self):
        return "".join(f"{k}={v}\n" for k, v in self.to_flat().items())

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:12]

    @classmethod
    def from_flat(cls, flat):
        """Build a config from string values; unknown keys raise :class:`ConfigError`."""
        known = set(cls().to_flat())
        for key in flat:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")

        def get(key, conv, default):
            if key not in flat or flat[key] in (None, ""):
                return default
            try:
                return conv(flat[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot parse {flat[key]!r} ({exc})") from None

        base = cls()
        bp = base.policy
        try:
            policy = PolicySpec(
                algorithm=get("algo", str, bp.algorithm),
                ucb_c=get("ucb_c", Schedule.parse, bp.ucb_c),
                ts_rho=get("rho", float, bp.ts_rho),
                eg_eps=get("eps", Schedule.parse, bp.eg_eps),
                clipping=get("clip", Schedule.parse, bp.clipping),
                burn_in=get("T0", int, bp.burn_in),
                burn_in_mode=get("burn_in_mode", str, bp.burn_in_mode),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("algo/policy", str(exc)) from None

        def opt_str(v):
            return None if v in ("", "auto") else v

        return cls(
            env=get("env", str, base.env),
            T=get("T", int, base.T),
            policy=policy,
            reps=get("reps", int, base.reps),
            alpha=get("alpha", float, base.alpha),
            base_seed=get("seed", int, base.base_seed),
            checkpoints=get("checkpoints", lambda s: tuple(int(c) for c in s.split(",") if c.strip()),
                            base.checkpoints),
            omega=get("omega", float, base.omega),
            feature_map=get("feature_map", opt_str, None),
            alt_feature_map=get("alt_feature_map", opt_str, None),
            kappa_kind=get("kappa", opt_str, None),
            include_burn_in=get("include_burn_in", lambda s: s.lower() in ("1", "true", "yes"), False),
            noise_sd=get("noise_sd", float, base.noise_sd),
            reward_sd=get("reward_sd", float, base.reward_sd),
            dataset_path=get("dataset_path", opt_str, None),
            sea_rows=get("sea_rows", int, base.sea_rows),
            sea_seed=get("sea_seed", int, base.sea_seed),
            sea_margin=get("sea_margin", float, base.sea_margin),
        )

    @classmethod
    def loads(cls, text):
        return cls.from_flat(parse_flat(text))


def parse_flat(text):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
