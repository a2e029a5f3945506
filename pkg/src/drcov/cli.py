"""``drcov`` command-line entry point.

Each subcommand writes its tables and JSON into ``--out`` together with a
``metadata.json`` sidecar (versions, the resolved config, RNG name, wall
time). Only the sidecar varies between identical runs.

Failures print one JSON line ``{"reason": ..., "message": ...}`` to stderr
and exit with 2 (invalid input) or 3 (numerical failure).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .applications import LinearShrinkageEstimator, RobustEstimator, SampleEstimator, rolling_backtest
from .baselines import Centering, SampleSet, sample_covariance
from .calibration import CrossValidate, Fixed, default_radius_grid, schedule_from_config
from .config import build_config, load_config_file
from .datasets import dumps_json, read_labeled_csv, read_returns_csv, read_samples_csv, write_json, write_table_csv
from .divergences import epsilon_max, get_spec
from .errors import DrcovError, MissingInput, UsageError
from .experiments import classification, consistency, optimal_radius_growth, radius_sweep, synthetic_risk
from .shrinkage import estimate
from .spectral import condition_number, eigendecompose, read_square_csv, write_square_csv
from .synthetic import RNG_NAME


# ------------------------------------------------------------------ commands


def _write_result(out: Path, stem: str, result) -> list[str]:
    write_table_csv(out / f"{stem}.csv", result.columns, result.rows)
    files = [f"{stem}.csv"]
    if result.summary_columns:
        write_table_csv(out / f"{stem}_summary.csv", result.summary_columns, result.summary)
        files.append(f"{stem}_summary.csv")
    return files


def cmd_estimate(cfg, out: Path) -> list[str]:
    spec = get_spec(cfg.divergence)
    if cfg.input is not None:
        d = eigendecompose(read_square_csv(cfg.input))
        data = None
    else:
        data = SampleSet(read_samples_csv(cfg.samples)[1], Centering(cfg.centering))
        d = eigendecompose(sample_covariance(data))
    if cfg.epsilon is not None:
        eps = cfg.epsilon
    else:
        eps = schedule_from_config(cfg.radius, spec).resolve(data, spec, epsilon_max(spec, d.eigenvalues))
    sol = estimate(None, spec, eps, tol=cfg.tol, decomposition=d, polish=cfg.polish)
    write_square_csv(out / "estimator.csv", sol.estimator)
    write_json(
        out / "solution.json",
        {
            "divergence": spec.name,
            "radius": sol.radius,
            "epsilon_max": epsilon_max(spec, d.eigenvalues),
            "gamma_star": sol.gamma_star,
            "residual": sol.residual,
            "eigenvalues_nominal": d.eigenvalues,
            "eigenvalues_shrunk": sol.shrunk_eigenvalues,
            "achieved_divergence": sol.achieved_divergence,
            "condition_numbers": {"nominal": condition_number(d), "estimator": condition_number(sol.decomposition)},
        },
    )
    return ["estimator.csv", "solution.json"]


def cmd_sweep(cfg, out: Path) -> list[str]:
    result = radius_sweep(cfg.eigenvalues, cfg.kinds, cfg.grid, cfg.num, tol=cfg.tol)
    return _write_result(out, "sweep", result)


def cmd_synthetic_risk(cfg, out: Path) -> list[str]:
    result = synthetic_risk(
        p=cfg.p,
        spikes=cfg.spikes,
        magnitudes=cfg.magnitudes,
        sizes=cfg.sizes,
        trials=cfg.trials,
        seed=cfg.seed,
        kinds=cfg.kinds,
        num_radii=cfg.num_radii,
        alphas=cfg.alphas,
        centering=Centering(cfg.centering),
        tol=cfg.tol,
    )
    return _write_result(out, "synthetic_risk", result)


def cmd_consistency(cfg, out: Path) -> list[str]:
    common = dict(trials=cfg.trials, seed=cfg.seed, kinds=cfg.kinds, centering=Centering(cfg.centering), tol=cfg.tol)
    if cfg.regime == "fixed-dimension":
        result = consistency(p=cfg.p, sizes=cfg.sizes, c=cfg.c, populations=cfg.populations, **common)
        return _write_result(out, "consistency", result)
    result = optimal_radius_growth(
        sizes=cfg.sizes, ratio=cfg.ratio, populations=cfg.populations, log_range=tuple(cfg.log_range), iters=cfg.iters, **common
    )
    return _write_result(out, "optimal_radius", result)


def _portfolio_estimator(cfg):
    if cfg.estimator == "sample":
        return SampleEstimator()
    if cfg.estimator == "linear":
        return LinearShrinkageEstimator(alpha=cfg.alpha, folds=cfg.folds, score=cfg.score, seed=cfg.seed)
    spec = get_spec(cfg.estimator)
    if cfg.epsilon is not None:
        schedule = Fixed(cfg.epsilon)
    elif cfg.radius is not None:
        radius = dict(cfg.radius)
        if radius["policy"] == "cross_validate":
            radius.setdefault("seed", cfg.seed)
        schedule = schedule_from_config(radius, spec)
    else:
        schedule = CrossValidate(tuple(default_radius_grid(spec)), cfg.folds, cfg.score, cfg.seed)
    return RobustEstimator(spec, schedule, cfg.tol)


def cmd_portfolio(cfg, out: Path) -> list[str]:
    data = read_returns_csv(cfg.returns)
    report = rolling_backtest(data.returns, _portfolio_estimator(cfg), cfg.window, cfg.holding, Centering(cfg.centering))
    rows = []
    for b, start in enumerate(report.block_starts):
        for k in range(cfg.holding):
            rows.append((start + k, data.dates[start + k], b, "portfolio_return", float(report.period_returns[b * cfg.holding + k])))
    write_table_csv(out / "portfolio_returns.csv", ("row", "date", "block", "metric", "value"), rows)
    summary = report.summary()
    summary["assets"] = list(data.assets)
    summary["first_date"] = data.dates[report.block_starts[0]]
    summary["last_date"] = data.dates[report.block_starts[-1] + cfg.holding - 1]
    summary["period_returns"] = report.period_returns
    write_json(out / "portfolio.json", summary)
    return ["portfolio.json", "portfolio_returns.csv"]


def cmd_classify(cfg, out: Path) -> list[str]:
    data = read_labeled_csv(cfg.data)
    result = classification(
        data.x,
        data.y,
        methods=cfg.methods,
        estimators=cfg.estimators,
        permutations=cfg.permutations,
        train_fraction=cfg.train_fraction,
        validation_fraction=cfg.validation_fraction,
        seed=cfg.seed,
    )
    return _write_result(out, "classify", result)


COMMANDS = {
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "synthetic-risk": cmd_synthetic_risk,
    "consistency": cmd_consistency,
    "portfolio": cmd_portfolio,
    "classify": cmd_classify,
}


# -------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _json_object(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"expected a JSON object, got {text!r}") from None
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False)
    common.add_argument("--config", default=S, help="JSON run config; flags override its values")
    common.add_argument("--seed", type=_u64, default=S, help="base seed; trial t uses seed + t")
    common.add_argument("--out", default=S, help="output directory (created if missing)")
    common.add_argument("--tol", type=float, default=S, help="root-finding tolerance")

    parser = _Parser(prog="drcov", description="Distributionally robust covariance shrinkage.", parents=[common])
    parser.add_argument("--version", action="version", version=f"drcov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common], help="shrink one covariance matrix")
    p.add_argument("--input", default=S, help="square covariance CSV")
    p.add_argument("--samples", default=S, help="observations CSV (one row per sample)")
    p.add_argument("--centering", choices=("zero-mean", "sample-mean"), default=S)
    p.add_argument("--divergence", default=S)
    p.add_argument("--epsilon", type=float, default=S)
    p.add_argument("--radius", type=_json_object, default=S, help='schedule, e.g. \'{"policy": "root_n", "c": 5}\'')
    p.add_argument("--polish", action="store_true", default=S, help="Newton-polish the multiplier")

    p = sub.add_parser("sweep", parents=[common], help="eigenvalue paths along a radius grid")
    p.add_argument("--eigenvalues", type=_floats, default=S)
    p.add_argument("--kinds", type=_names, default=S)
    p.add_argument("--grid", type=_floats, default=S)
    p.add_argument("--num", type=int, default=S)

    p = sub.add_parser("synthetic-risk", parents=[common], help="Frobenius loss on spiked models")
    p.add_argument("--p", type=int, default=S)
    p.add_argument("--spikes", type=int, default=S)
    p.add_argument("--magnitudes", type=_floats, default=S)
    p.add_argument("--sizes", type=_ints, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--kinds", type=_names, default=S)
    p.add_argument("--num-radii", dest="num_radii", type=int, default=S)
    p.add_argument("--alphas", type=_floats, default=S)
    p.add_argument("--centering", choices=("zero-mean", "sample-mean"), default=S)

    p = sub.add_parser("consistency", parents=[common], help="loss against sample size")
    p.add_argument("--regime", choices=("fixed-dimension", "proportional"), default=S)
    p.add_argument("--p", type=int, default=S)
    p.add_argument("--sizes", type=_ints, default=S)
    p.add_argument("--c", type=float, default=S)
    p.add_argument("--populations", type=_names, default=S)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--kinds", type=_names, default=S)
    p.add_argument("--centering", choices=("zero-mean", "sample-mean"), default=S)
    p.add_argument("--ratio", type=float, default=S)
    p.add_argument("--iters", type=int, default=S)

    p = sub.add_parser("portfolio", parents=[common], help="rolling minimum-variance backtest")
    p.add_argument("--returns", default=S, help="returns CSV (date column plus assets, header required)")
    p.add_argument("--estimator", default=S, help="sample, linear or a divergence name")
    p.add_argument("--epsilon", type=float, default=S)
    p.add_argument("--radius", type=_json_object, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--window", type=int, default=S)
    p.add_argument("--holding", type=int, default=S)
    p.add_argument("--folds", default=S, help="fold count or 'loo'")
    p.add_argument("--score", default=S)
    p.add_argument("--centering", choices=("zero-mean", "sample-mean"), default=S)

    p = sub.add_parser("classify", parents=[common], help="LDA/QDA accuracy over random splits")
    p.add_argument("--data", default=S, help="labeled CSV (features then integer label, header required)")
    p.add_argument("--methods", type=_names, default=S)
    p.add_argument("--estimators", type=_names, default=S)
    p.add_argument("--permutations", type=int, default=S)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=S)
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float, default=S)
    return parser


# ---------------------------------------------------------------------- main


def _overrides(args: argparse.Namespace) -> dict:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if isinstance(values.get("folds"), str) and values["folds"] != "loo":
        try:
            values["folds"] = int(values["folds"])
        except ValueError:
            raise UsageError(f"--folds expects an integer or 'loo', got {values['folds']!r}") from None
    return values


def _report_error(exc: DrcovError) -> int:
    payload = {"reason": exc.reason, "message": str(exc), "exit_code": exc.exit_code}
    payload.update(exc.details)
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    return exc.exit_code


def run(argv=None) -> int:
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
        cfg = build_config(args.command, file_values, _overrides(args))
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            files = COMMANDS[args.command](cfg, out)
    except DrcovError as exc:
        return _report_error(exc)
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        return _report_error(MissingInput(f"{exc.strerror or exc}: {where}".rstrip(": "), path=str(where)))

    meta = {
        "command": args.command,
        "config": cfg.echo(),
        "versions": {"drcov": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "rng": RNG_NAME,
        "outputs": files,
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
        "wall_time_seconds": round(time.perf_counter() - started, 6),
    }
    (out / "metadata.json").write_text(dumps_json(meta))
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
