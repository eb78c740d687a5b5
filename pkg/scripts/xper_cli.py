#!/usr/bin/env python3
"""
Command-line front end: decompose, simulate, boost and oracle.

stdout carries only the JSON report; logs and diagnostics go to stderr.
Exit codes: 0 success, 1 computation error, 2 usage error.

Usage:
    python scripts/xper_cli.py decompose --data test.csv --target y --model builtin:probit --train train.csv --metric auc
    python scripts/xper_cli.py simulate --scenario probit_baseline --reps 200
    python scripts/xper_cli.py boost --train train.csv --test test.csv --target y --model probit --clusters 2
    python scripts/xper_cli.py oracle --data sample.csv --target y --metric r2
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from components.base_component import ModelAdapter
from components.boosting import BOOST_SPACES, boost_pipeline
from components.errors import UsageError, XperError
from components.external import ExternalModel
from components.linear_models import LinearModel
from components.metrics import METRIC_IDS, get_metric
from components.oracles import closed_form_table, xper_vs_shap
from components.recipes import ModelRecipe, load_model, save_model
from components.studies import SCENARIOS, StudyConfig, run_study
from components.xper_exact import xper_exact
from components.xper_wls import xper_wls
from config.data_config import ArtifactPaths
from config.environment import configure_logging, get_config
from utils.data_loader import FEATURE_KINDS, EvalSample, load_csv
from utils.report_writer import ReportBuilder, write_report, write_study_artifacts

logger = logging.getLogger("xper_cli")


class _Parser(argparse.ArgumentParser):
    """argparse reporting usage problems as one UsageError instead of exiting"""

    def error(self, message: str):
        raise UsageError(message)


def _kinds(pairs: Optional[List[str]]) -> Dict[str, str]:
    kinds = {}
    for pair in pairs or []:
        column, sep, kind = pair.partition("=")
        if not sep or kind not in FEATURE_KINDS:
            raise UsageError(f"--kind expects COLUMN=KIND with KIND in {FEATURE_KINDS}, got '{pair}'")
        kinds[column] = kind
    return kinds


def _load(path: str, args) -> EvalSample:
    return load_csv(path, args.target, kinds=_kinds(args.kind))


def _same_columns(reference: EvalSample, other: EvalSample, what: str) -> None:
    if reference.feature_names != other.feature_names:
        raise UsageError(f"{what} columns {list(other.feature_names)} differ from {list(reference.feature_names)}")


def resolve_model(spec: str, fit_on: EvalSample, threshold: Optional[float]) -> ModelAdapter:
    """``exec:<command>``, ``file:<model.json>`` or a built-in recipe fitted on ``fit_on``"""
    label_threshold = threshold if threshold is not None else get_config().label_threshold
    if spec.startswith("exec:"):
        return ExternalModel(spec[len("exec:"):], fit_on.task, fit_on.feature_names, label_threshold)
    if spec.startswith("file:"):
        return load_model(spec[len("file:"):], label_threshold)
    return ModelRecipe.parse(spec).fit(fit_on).with_threshold(label_threshold)


def _common_flags(args) -> Dict[str, Any]:
    return {key: value for key, value in vars(args).items() if key not in ("handler", "log_level")}


def cmd_decompose(args) -> Dict[str, Any]:
    sample = _load(args.data, args)
    builder = ReportBuilder("decompose").with_flags(_common_flags(args)).with_input(args.data)
    fit_on = sample
    if args.train:
        fit_on = _load(args.train, args)
        _same_columns(sample, fit_on, "training")
        builder.with_input(args.train)
    elif not args.model.startswith(("exec:", "file:")):
        logger.warning("No --train given: the model is fitted on the evaluation sample itself")
    if args.model.startswith("file:"):
        builder.with_input(args.model[len("file:"):])

    metric = get_metric(args.metric, args.threshold if args.threshold is not None else get_config().label_threshold)
    with resolve_model(args.model, fit_on, args.threshold) as model:
        if args.save_model:
            save_model(model, args.save_model)
        if args.method == "exact":
            report = xper_exact(sample, model, metric, individual=args.individual,
                                allow_large_q=args.allow_large_q, threads=args.threads)
        else:
            if args.k_samples is None:
                raise UsageError("--method wls needs --k-samples")
            report = xper_wls(sample, model, metric, args.k_samples, args.seed, individual=args.individual,
                              constrained=not args.unconstrained, threads=args.threads)
            builder.with_seed("coalitions", args.seed)
    return builder.with_result(report.to_dict(include_individual=args.individual)).build()


def cmd_simulate(args) -> Dict[str, Any]:
    config = StudyConfig.for_scenario(
        args.scenario,
        replications=args.reps,
        seed=args.seed,
        train_size=args.train_size,
        test_size=args.test_size,
        workers=args.threads,
    )
    if args.no_shift:
        if config.scenario != "overfit_shift":
            raise UsageError("--no-shift applies to the overfit_shift scenario only")
        config = config.no_shift_control()
    result = run_study(config)
    paths = write_study_artifacts(result.draws, result.summary, args.scenario,
                                  ArtifactPaths(output_dir=args.out_dir) if args.out_dir else None)
    logger.info(f"Study artifacts written to {paths['draws'].parent}")
    return (
        ReportBuilder("simulate")
        .with_flags(_common_flags(args))
        .with_flags({"study": config.model_dump()})
        .with_seed("study", config.seed)
        .with_result({
            "summary": result.summary,
            "failures": result.failures,
            "artifacts": {kind: str(path) for kind, path in paths.items()},
            "diagnostics": {"wall_time_s": result.wall_time_s},
        })
        .build()
    )


def cmd_boost(args) -> Dict[str, Any]:
    train = _load(args.train, args)
    test = _load(args.test, args)
    _same_columns(train, test, "test")
    recipe = ModelRecipe.parse(args.model)
    threshold = args.threshold if args.threshold is not None else get_config().label_threshold
    report = boost_pipeline(train, test, recipe, get_metric(args.metric, threshold), args.clusters,
                            space=args.space, seed=args.seed, deploy_safe=args.deploy_safe, threads=args.threads)
    return (
        ReportBuilder("boost")
        .with_flags(_common_flags(args))
        .with_input(args.train)
        .with_input(args.test)
        .with_seed("clustering", args.seed)
        .with_result(report.to_dict())
        .build()
    )


def cmd_oracle(args) -> Dict[str, Any]:
    sample = _load(args.data, args)
    fit_on = _load(args.train, args) if args.train else sample
    _same_columns(sample, fit_on, "training")
    model = resolve_model(args.model, fit_on, None)
    if not isinstance(model, LinearModel):
        raise UsageError(f"closed forms need a linear model, got {args.model}")
    metric = get_metric(args.metric)
    closed = closed_form_table(sample, model, metric, tolerance=args.tolerance, threads=args.threads)
    comparison = xper_vs_shap(sample, model, metric, threads=args.threads)
    builder = ReportBuilder("oracle").with_flags(_common_flags(args)).with_input(args.data)
    if args.train:
        builder.with_input(args.train)
    return builder.with_result({
        "closed_form": closed.to_dict(orient="records"),
        "xper_vs_shap": comparison.to_dict(orient="records"),
    }).build()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xper", description="Decompose model performance metrics into feature contributions")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: XPER_THREADS or the environment setting)")
    parser.add_argument("--log-level", type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"), default=None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p, data_required: bool = True):
        if data_required:
            p.add_argument("--data", required=True, help="evaluation CSV with a header row")
        p.add_argument("--target", required=True, help="target column name")
        p.add_argument("--kind", action="append", help="COLUMN=continuous|binary|categorical (repeatable)")
        p.add_argument("--threshold", type=float, default=None, help="label threshold for label metrics")

    decompose = sub.add_parser("decompose", help="XPER decomposition of one model on one sample")
    data_flags(decompose)
    decompose.add_argument("--model", required=True,
                           help="builtin:ols|probit|logit, cart:max_depth=N,..., file:<model.json> or exec:<command>")
    decompose.add_argument("--train", help="training CSV; built-in models are fitted on it")
    decompose.add_argument("--metric", required=True, choices=METRIC_IDS)
    decompose.add_argument("--method", choices=("exact", "wls"), default="exact")
    decompose.add_argument("--k-samples", type=int, default=None, help="sampled coalitions for --method wls")
    decompose.add_argument("--seed", type=int, default=0)
    decompose.add_argument("--unconstrained", action="store_true", help="plain weighted regression for wls")
    decompose.add_argument("--individual", action="store_true", help="include per-instance values")
    decompose.add_argument("--allow-large-q", action="store_true", help="lift the exact enumeration guard rail")
    decompose.add_argument("--save-model", help="write the fitted built-in model as JSON")
    decompose.add_argument("--out", help="report path (default: stdout)")
    decompose.set_defaults(handler=cmd_decompose)

    simulate = sub.add_parser("simulate", help="run a simulation study")
    simulate.add_argument("--scenario", required=True, choices=SCENARIOS)
    simulate.add_argument("--reps", type=int, default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--train-size", type=int, default=None)
    simulate.add_argument("--test-size", type=int, default=None)
    simulate.add_argument("--no-shift", action="store_true", help="overfit_shift control without the shift")
    simulate.add_argument("--out-dir", help="artifact directory (default: environment setting)")
    simulate.add_argument("--out", help="report path (default: stdout)")
    simulate.set_defaults(handler=cmd_simulate)

    boost = sub.add_parser("boost", help="compare one-fits-all and cluster-wise models")
    data_flags(boost, data_required=False)
    boost.add_argument("--train", required=True)
    boost.add_argument("--test", required=True)
    boost.add_argument("--model", default="probit", help="built-in recipe fitted per cluster")
    boost.add_argument("--metric", default="auc", choices=METRIC_IDS)
    boost.add_argument("--clusters", type=int, default=2)
    boost.add_argument("--space", choices=BOOST_SPACES, default="both")
    boost.add_argument("--seed", type=int, default=0)
    boost.add_argument("--deploy-safe", action="store_true", help="route test rows on features only")
    boost.add_argument("--out", help="report path (default: stdout)")
    boost.set_defaults(handler=cmd_boost)

    oracle = sub.add_parser("oracle", help="closed-form decomposition next to the estimator")
    data_flags(oracle)
    oracle.add_argument("--model", default="builtin:ols")
    oracle.add_argument("--train", help="training CSV for the linear model")
    oracle.add_argument("--metric", choices=("r2", "mse"), default="r2")
    oracle.add_argument("--tolerance", type=float, default=0.1, help="largest accepted feature correlation")
    oracle.add_argument("--out", help="report path (default: stdout)")
    oracle.set_defaults(handler=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is None:
            args.threads = get_config().threads
        elif args.threads < 1:
            raise UsageError(f"--threads must be at least 1, got {args.threads}")
        configure_logging(args.log_level)
        report = args.handler(args)
        write_report(report, args.out)
        return 0
    except UsageError as e:
        sys.stderr.write(e.describe() + "\n")
        return 2
    except XperError as e:
        sys.stderr.write(e.describe() + "\n")
        return 1
    except (FileNotFoundError, ValueError) as e:
        sys.stderr.write("error: " + " ".join(str(e).split()) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
