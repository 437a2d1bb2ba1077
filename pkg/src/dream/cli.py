"""Command-line entry point: ``dream {simulate,coverage,evaluate,dataset-check}``.

Settings are resolved in increasing priority: built-in defaults, a
``--config`` file (flat ``key=value`` lines or an earlier run's manifest),
the ``DREAM_SEED`` environment variable, then explicit flags.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import logging
import os
from pathlib import Path
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig
from .csvio import (
    TraceFormatError,
    now_iso,
    read_config_source,
    read_trace,
    write_manifest,
    write_rows,
    write_trace,
    write_value_reports,
)
from .environments import SyntheticEnv, load_dataset, make_sea_like, write_dataset
from .estimators import known_policy_value, replay_arms
from .harness import MetricsRow, monte_carlo, replication_seed, run_trajectory, sensitivity_sweep

logger = logging.getLogger("dream")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# flag destination -> flat config key
FLAG_KEYS = {
    "env": "env", "algo": "algo", "T": "T", "T0": "T0", "ucb_c": "ucb_c", "rho": "rho",
    "eps": "eps", "clip": "clip", "seed": "seed", "omega": "omega", "alpha": "alpha",
    "reps": "reps", "checkpoints": "checkpoints", "feature_map": "feature_map",
    "alt_feature_map": "alt_feature_map", "kappa": "kappa", "include_burn_in": "include_burn_in",
    "noise_sd": "noise_sd", "reward_sd": "reward_sd", "dataset": "dataset_path",
    "sea_rows": "sea_rows", "sea_seed": "sea_seed", "sea_margin": "sea_margin",
    "burn_in_mode": "burn_in_mode",
}


class UsageError(Exception):
    pass


def _add_config_flags(p):
    g = p.add_argument_group("experiment settings")
    g.add_argument("--config", help="key=value file or a previous run's manifest")
    g.add_argument("--env", choices=("synthetic", "sea", "dataset"))
    g.add_argument("--dataset", help="CSV for --env dataset")
    g.add_argument("--algo", choices=("ucb", "ts", "eg"))
    g.add_argument("--T", help="horizon")
    g.add_argument("--T0", help="burn-in length")
    g.add_argument("--ucb-c", dest="ucb_c", help="UCB width, e.g. 1 or 2*t^-0.1")
    g.add_argument("--rho", help="Thompson sampling scale")
    g.add_argument("--eps", help="epsilon schedule, e.g. 0.1*t^-0.4")
    g.add_argument("--clip", help="clipping rate, e.g. 0.01 or sqrt(0.5*log(t)/t)")
    g.add_argument("--seed", help="base seed (overrides DREAM_SEED)")
    g.add_argument("--omega")
    g.add_argument("--alpha")
    g.add_argument("--checkpoints", help="comma-separated steps")
    g.add_argument("--feature-map", dest="feature_map", choices=("identity", "linear", "cosine"))
    g.add_argument("--alt-feature-map", dest="alt_feature_map",
                   choices=("identity", "linear", "cosine", "none"))
    g.add_argument("--kappa", choices=("logistic", "eg_closed_form", "constant"))
    g.add_argument("--include-burn-in", dest="include_burn_in", action="store_const", const="1")
    g.add_argument("--noise-sd", dest="noise_sd")
    g.add_argument("--reward-sd", dest="reward_sd")
    g.add_argument("--sea-rows", dest="sea_rows")
    g.add_argument("--sea-seed", dest="sea_seed")
    g.add_argument("--sea-margin", dest="sea_margin")
    g.add_argument("--burn-in-mode", dest="burn_in_mode", choices=("alternate", "uniform"))
    p.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="dream", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trajectory; write trace, value reports, manifest")
    _add_config_flags(sim)

    cov = sub.add_parser("coverage", help="Monte Carlo coverage, bias and SE ratio")
    _add_config_flags(cov)
    cov.add_argument("--reps")
    cov.add_argument("--sweep-p", dest="sweep_p", help="comma-separated constant clipping rates")
    cov.add_argument("--workers", type=int, default=1)

    ev = sub.add_parser("evaluate", help="value of a fixed policy from a recorded trace")
    ev.add_argument("--trace", required=True)
    ev.add_argument("--policy", required=True,
                    help="greedy | oracle | const:A | threshold:J:C | linear:w0,w1,...")
    ev.add_argument("--alpha", type=float, default=0.05)
    ev.add_argument("--omega", type=float, default=1.0)
    ev.add_argument("--include-burn-in", action="store_true")
    ev.add_argument("--out", help="also write the report CSV here")

    ds = sub.add_parser("dataset-check", help="validate a bandit dataset CSV or generate one")
    ds.add_argument("--dataset", help="CSV to validate")
    ds.add_argument("--generate-sea", dest="generate_sea", type=int, metavar="N",
                    help="write N SEA-like rows to --out")
    ds.add_argument("--out")
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--margin", type=float, default=2.25)
    ds.add_argument("--label-noise", dest="label_noise", type=float, default=0.0)
    return parser


def resolve_config(args, required=(), defaults=None):
    """Merge config file, ``DREAM_SEED`` and flags into an :class:`ExperimentConfig`."""
    flat = dict(defaults or {})
    if args.config:
        try:
            flat.update(read_config_source(args.config))
        except (OSError, ValueError) as exc:
            raise ConfigError("config", str(exc)) from None
    env_seed = os.environ.get("DREAM_SEED")
    if env_seed not in (None, ""):
        flat["seed"] = env_seed
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            flat[key] = value
    for key in required:
        if key not in flat or flat[key] in ("", None):
            raise ConfigError(key, f"required setting missing (pass --{key} or set {key}= in --config)")
    try:
        return ExperimentConfig.from_flat(flat)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from None


def cmd_simulate(args):
    config = resolve_config(args, required=("T",))
    started = now_iso()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config.digest()
    # replication 0 of the matching coverage study
    res = run_trajectory(config, replication_seed(config.base_seed, 0))
    trace_path = out / f"trace-{h}.csv"
    values_path = out / f"values-{h}.csv"
    write_trace(res.trace, trace_path)
    rows = [(f"t{t}:{method}", config.policy.algorithm, rep)
            for t in sorted(res.reports) for method, rep in res.reports[t].items()]
    write_value_reports(rows, values_path)
    write_manifest(out / f"manifest-{h}.json", config, "simulate", started, [trace_path, values_path])
    final = res.reports[config.T]["dream"]
    print(f"dream T={config.T}: v_hat={final.v_hat:.6g} ci=({final.ci_low:.6g}, {final.ci_high:.6g})")
    return EXIT_OK


def cmd_coverage(args):
    defaults = {}
    if args.T is None and args.checkpoints:
        try:
            defaults["T"] = str(max(int(c) for c in args.checkpoints.split(",") if c.strip()))
        except ValueError:
            raise ConfigError("checkpoints", f"cannot parse {args.checkpoints!r}") from None
    config = resolve_config(args, defaults=defaults)
    if args.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    started = now_iso()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config.digest()
    if args.sweep_p:
        try:
            ps = [float(v) for v in args.sweep_p.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("sweep_p", f"cannot parse {args.sweep_p!r}") from None
        if not ps or not all(0 < p < 1 for p in ps):
            raise ConfigError("sweep_p", "each clipping rate must lie in (0, 1)")
        results = sensitivity_sweep(config, ps, workers=args.workers)
        path = out / f"sweep-{h}.csv"
        rows = [dict(p=p, **row.csv_row()) for p, res in results.items() for row in res.metrics]
        write_rows(path, ("p",) + MetricsRow.CSV_COLUMNS, rows)
        extra = {"sweep_p": ps}
    else:
        res = monte_carlo(config, workers=args.workers, progress=args.verbose)
        path = out / f"metrics-{h}.csv"
        write_rows(path, MetricsRow.CSV_COLUMNS, (row.csv_row() for row in res.metrics))
        extra = {"target": res.target}
    write_manifest(out / f"manifest-{h}.json", config, "coverage", started, [path], extra)
    print(path)
    return EXIT_OK


def parse_policy(text, trace, omega=1.0):
    """Return ``(target, final_target)`` action arrays for a policy description."""
    kind, _, arg = text.partition(":")
    ctx = trace.context
    if kind == "greedy":
        arm0, arm1 = replay_arms(trace, omega)
        final = (trace.feature @ arm1.coef_ > trace.feature @ arm0.coef_).astype(int)
        return trace.greedy.copy(), final
    if kind == "oracle":
        if ctx.shape[1] != 2:
            raise UsageError("oracle policy needs the 2-d synthetic contexts")
        acts = SyntheticEnv().oracle_policy(ctx)
        return acts, acts
    if kind == "const":
        if arg not in ("0", "1"):
            raise UsageError(f"constant policy must be const:0 or const:1, got {text!r}")
        acts = np.full(len(trace), int(arg))
        return acts, acts
    if kind == "threshold":
        try:
            j, c = arg.split(":")
            j, c = int(j), float(c)
        except ValueError:
            raise UsageError(f"threshold policy is threshold:J:C, got {text!r}") from None
        if not 1 <= j <= ctx.shape[1]:
            raise UsageError(f"threshold column {j} outside 1..{ctx.shape[1]}")
        acts = (ctx[:, j - 1] > c).astype(int)
        return acts, acts
    if kind == "linear":
        try:
            w = np.array([float(v) for v in arg.split(",")])
        except ValueError:
            raise UsageError(f"linear policy is linear:w0,w1,..., got {text!r}") from None
        if len(w) != ctx.shape[1] + 1:
            raise UsageError(f"linear policy needs {ctx.shape[1] + 1} weights, got {len(w)}")
        acts = (w[0] + ctx @ w[1:] > 0).astype(int)
        return acts, acts
    raise UsageError(f"unknown policy {text!r}")


def cmd_evaluate(args):
    try:
        trace = read_trace(args.trace, require_propensity=True)
    except OSError as exc:
        raise UsageError(f"cannot read trace: {exc}") from None
    except TraceFormatError as exc:
        raise UsageError(str(exc)) from None
    target, final = parse_policy(args.policy, trace, args.omega)
    if args.policy == "greedy":
        # the greedy policy is weighted by the estimated exploitation probability,
        # which reproduces the online value report on the same trace
        trace = trace.replace(propensity_=None)
    report = known_policy_value(trace, target, final_target=final, alpha=args.alpha,
                                include_burn_in=args.include_burn_in, omega=args.omega)
    rows = [(Path(args.trace).stem, args.policy, report)]
    write_value_reports(rows, sys.stdout)
    if args.out:
        write_value_reports(rows, args.out)
    return EXIT_OK


def cmd_dataset_check(args):
    if args.generate_sea is not None:
        if not args.out:
            raise UsageError("--generate-sea needs --out")
        if args.generate_sea < 1:
            raise UsageError("--generate-sea needs a positive row count")
        env = make_sea_like(args.generate_sea, seed=args.seed, margin=args.margin,
                            label_noise=args.label_noise)
        write_dataset(env, args.out)
        path = args.out
    elif args.dataset:
        path = args.dataset
    else:
        raise UsageError("pass --dataset FILE or --generate-sea N --out FILE")
    try:
        env = load_dataset(path)
    except OSError as exc:
        raise UsageError(f"cannot read dataset: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{path}: rows={env.n_rows} features={env.dim_raw} (with intercept) "
          f"label1_fraction={env.labels.mean():.4f}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "evaluate": cmd_evaluate,
    "dataset-check": cmd_dataset_check,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"dream {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"dream {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        logger.debug("failure", exc_info=True)
        print(f"dream {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
