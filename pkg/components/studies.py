"""
Reproducible simulation studies.

* probit_baseline: probit fitted on the first T draws, exact XPER on the last n
* overfit_depth: a deliberately deep tree, XPER on train and on test
* overfit_shift: cross-validated tree, test features drawn with a larger x1 variance
* permutation importance and bootstrap helpers for side-by-side comparisons

Every replication gets its own seed derived from (seed, replication), so the
output tables do not depend on how replications are scheduled.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from components.base_component import ModelAdapter
from components.boosting import boost_pipeline
from components.errors import ConfigurationError, DegenerateMetricError, RangeError, XperError
from components.metrics import MetricSpec, get_metric, sample_metric
from components.recipes import ModelRecipe
from components.tree import cross_validate_depth, fit_cart
from components.xper_exact import XperReport, xper_exact
from config.environment import get_config
from utils.data_loader import EvalSample, head_tail_split
from utils.helpers import derive_seed, simulate_latent_probit, simulate_two_regime

logger = logging.getLogger(__name__)

SCENARIOS = ("probit_baseline", "overfit_depth", "overfit_shift", "boost_synthetic")
DRAW_COLUMNS = ["replication", "partition", "quantity", "feature", "value"]


class StudyConfig(BaseModel):
    """Validated parameters of one study run; defaults come from the environment's ``studies`` section"""

    model_config = ConfigDict(extra="forbid")

    scenario: Literal["probit_baseline", "overfit_depth", "overfit_shift", "boost_synthetic"]
    replications: int = Field(1, ge=1)
    train_size: int = Field(700, ge=2)
    test_size: int = Field(300, ge=2)
    beta: Optional[List[float]] = None
    cov_diag: Optional[List[float]] = None
    shift_cov_diag: Optional[List[float]] = None
    model: str = "probit"
    metric: str = "auc"
    seed: int = Field(0, ge=0)
    cv_depths: Optional[List[int]] = None
    cv_folds: int = Field(5, ge=2)
    regime_share: float = Field(0.35, gt=0.0, lt=1.0)
    regime_slope: float = 2.0
    clusters: int = Field(2, ge=1)
    workers: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_scenario(self) -> "StudyConfig":
        if self.scenario != "boost_synthetic":
            if not self.beta or not self.cov_diag:
                raise ValueError(f"{self.scenario} needs beta and cov_diag")
            if len(self.beta) != len(self.cov_diag) + 1:
                raise ValueError(
                    f"beta holds the intercept then one slope per feature: expected {len(self.cov_diag) + 1} "
                    f"entries, got {len(self.beta)}"
                )
        if self.scenario == "overfit_shift":
            if not self.shift_cov_diag or len(self.shift_cov_diag) != len(self.cov_diag):
                raise ValueError("overfit_shift needs shift_cov_diag with one variance per feature")
            if not self.cv_depths:
                raise ValueError("overfit_shift needs cv_depths")
        return self

    @classmethod
    def for_scenario(cls, scenario: str, environment: Optional[str] = None, **overrides) -> "StudyConfig":
        """Scenario defaults from the settings file, updated with the non-None overrides"""
        if scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario '{scenario}' (expected one of {', '.join(SCENARIOS)})")
        params = get_config(environment).get_study_defaults(scenario)
        params.update({key: value for key, value in overrides.items() if value is not None})
        params["scenario"] = scenario
        try:
            return cls.model_validate(params)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"]) or "study"
            raise ConfigurationError(f"invalid study setting '{location}' for {scenario}: {first['msg']}") from e

    def no_shift_control(self) -> "StudyConfig":
        """Same study with test features drawn from the training distribution"""
        return self.model_copy(update={"shift_cov_diag": list(self.cov_diag)})


@dataclass
class StudyResult:
    """Tidy per-replication draws plus the acceptance statistics computed from them"""

    config: StudyConfig
    draws: pd.DataFrame
    summary: Dict[str, Any]
    failures: List[Dict[str, Any]] = field(default_factory=list)
    wall_time_s: float = 0.0

    def quantity(self, quantity: str, partition: str = "test", feature: str = "") -> pd.Series:
        """One quantity indexed by replication"""
        rows = self.draws[(self.draws["quantity"] == quantity) & (self.draws["partition"] == partition)
                          & (self.draws["feature"] == feature)]
        return rows.set_index("replication")["value"]


def _report_rows(replication: int, partition: str, report: XperReport) -> List[Tuple]:
    rows = [
        (replication, partition, "pm", "", report.raw_pm),
        (replication, partition, "phi0", "", report.phi0),
    ]
    shares = report.shares
    for j, name in enumerate(report.feature_names):
        rows.append((replication, partition, "phi", name, float(report.phi[j])))
        rows.append((replication, partition, "share", name, np.nan if shares is None else float(shares[j])))
    return rows


def _describe(values) -> Dict[str, Optional[float]]:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {"count": 0, "mean": None, "std": None, "min": None, "max": None}
    return {
        "count": int(values.size),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "min": float(values.min()),
        "max": float(values.max()),
    }


def _probit_replication(config: StudyConfig, replication: int) -> List[Tuple]:
    seed = derive_seed(config.seed, replication)
    sample = simulate_latent_probit(config.beta, config.cov_diag, config.train_size + config.test_size, seed)
    train, test = head_tail_split(sample, config.train_size)
    model = ModelRecipe.parse(config.model).fit(train)
    report = xper_exact(test, model, get_metric(config.metric), threads=1)
    return _report_rows(replication, "test", report)


def _overfit_replication(config: StudyConfig, replication: int) -> List[Tuple]:
    seed = derive_seed(config.seed, replication)
    metric = get_metric(config.metric)
    if config.scenario == "overfit_shift":
        train = simulate_latent_probit(config.beta, config.cov_diag, config.train_size, derive_seed(seed, 1))
        test = simulate_latent_probit(config.beta, config.shift_cov_diag, config.test_size, derive_seed(seed, 2))
        depth = cross_validate_depth(train, config.cv_depths, folds=config.cv_folds, seed=seed)
        model: ModelAdapter = fit_cart(train, max_depth=depth, seed=seed)
    else:
        sample = simulate_latent_probit(config.beta, config.cov_diag, config.train_size + config.test_size, seed)
        train, test = head_tail_split(sample, config.train_size)
        model = ModelRecipe.parse(config.model).fit(train)
    rows = _report_rows(replication, "train", xper_exact(train, model, metric, threads=1))
    rows += _report_rows(replication, "test", xper_exact(test, model, metric, threads=1))
    if hasattr(model, "depth"):
        rows.append((replication, "train", "depth", "", float(model.depth)))
    return rows


def _guarded(runner, config: StudyConfig, replication: int) -> Tuple[int, List[Tuple], Optional[str]]:
    try:
        return replication, runner(config, replication), None
    except XperError as e:
        return replication, [], e.describe()


def _run(config: StudyConfig, runner) -> Tuple[pd.DataFrame, List[Dict[str, Any]], float]:
    started = time.perf_counter()
    workers = config.workers or get_config().threads
    logger.info(f"Running {config.scenario}: {config.replications} replications on {workers} worker(s)")
    if workers > 1:
        outcomes = Parallel(n_jobs=workers)(
            delayed(_guarded)(runner, config, r) for r in range(config.replications)
        )
    else:
        outcomes = [_guarded(runner, config, r) for r in range(config.replications)]

    rows: List[Tuple] = []
    failures = []
    for replication, replication_rows, error in sorted(outcomes, key=lambda outcome: outcome[0]):
        if error is not None:
            logger.warning(f"replication {replication} excluded: {error}")
            failures.append({"replication": replication, "error": error})
        rows.extend(replication_rows)
    if len(failures) == config.replications:
        raise RangeError(f"all {config.replications} replications of {config.scenario} failed; first: "
                         f"{failures[0]['error']}")
    draws = pd.DataFrame(rows, columns=DRAW_COLUMNS)
    return draws, failures, time.perf_counter() - started


def _wide(draws: pd.DataFrame, partition: str, quantity: str) -> pd.DataFrame:
    """replication x feature table of one per-feature quantity"""
    rows = draws[(draws["partition"] == partition) & (draws["quantity"] == quantity)]
    return rows.pivot(index="replication", columns="feature", values="value")


def _scalar(draws: pd.DataFrame, partition: str, quantity: str) -> pd.Series:
    rows = draws[(draws["partition"] == partition) & (draws["quantity"] == quantity)]
    return rows.set_index("replication")["value"]


def _feature_order(config: StudyConfig) -> List[str]:
    return [f"x{j + 1}" for j in range(len(config.cov_diag))]


def run_probit_study(config: StudyConfig) -> StudyResult:
    """Monte Carlo of the XPER decomposition of a probit model's test metric"""
    if config.scenario != "probit_baseline":
        raise ConfigurationError(f"run_probit_study runs probit_baseline, not {config.scenario}")
    draws, failures, elapsed = _run(config, _probit_replication)
    names = _feature_order(config)
    phi = _wide(draws, "test", "phi")[names]
    shares = _wide(draws, "test", "share")[names]
    summary = {
        "scenario": config.scenario,
        "metric": config.metric,
        "replications": config.replications,
        "completed": config.replications - len(failures),
        "failed": len(failures),
        "pm": _describe(_scalar(draws, "test", "pm")),
        "phi0": _describe(_scalar(draws, "test", "phi0")),
        "phi": {name: _describe(phi[name]) for name in names},
        "share": {name: _describe(shares[name]) for name in names},
        "mean_phi_ranking": list(phi.mean().sort_values(ascending=False, kind="stable").index),
    }
    logger.info(f"{config.scenario}: mean pm {summary['pm']['mean']:.4f}, mean phi0 {summary['phi0']['mean']:.4f}")
    return StudyResult(config, draws, summary, failures, elapsed)


def run_overfit_study(config: StudyConfig) -> StudyResult:
    """Train versus test XPER shares of a tree model, with or without a shift in the test features"""
    if config.scenario not in ("overfit_depth", "overfit_shift"):
        raise ConfigurationError(f"run_overfit_study runs overfit_depth or overfit_shift, not {config.scenario}")
    draws, failures, elapsed = _run(config, _overfit_replication)
    names = _feature_order(config)
    train_shares = _wide(draws, "train", "share").reindex(columns=names)
    test_shares = _wide(draws, "test", "share").reindex(columns=names)
    drift = (test_shares - train_shares).dropna()
    undefined = len(train_shares) - len(drift)
    if undefined:
        logger.warning(f"{undefined} replication(s) have an undefined share and are left out of the drift")
    auc_gap = _scalar(draws, "train", "pm") - _scalar(draws, "test", "pm")
    mean_drift = drift.mean()
    summary = {
        "scenario": config.scenario,
        "metric": config.metric,
        "replications": config.replications,
        "completed": config.replications - len(failures),
        "failed": len(failures),
        "pm_train": _describe(_scalar(draws, "train", "pm")),
        "pm_test": _describe(_scalar(draws, "test", "pm")),
        "pm_gap": _describe(auc_gap),
        "share_train": {name: _describe(train_shares[name]) for name in names},
        "share_test": {name: _describe(test_shares[name]) for name in names},
        "share_drift": {name: _describe(drift[name]) for name in names},
        "max_abs_mean_share_drift": float(mean_drift.abs().max()) if len(drift) else None,
        "rising_share_frequency": {
            name: float((drift[name] > 0.0).mean()) if len(drift) else None for name in names
        },
    }
    depths = _scalar(draws, "train", "depth")
    if len(depths):
        summary["depth"] = _describe(depths)
    logger.info(
        f"{config.scenario}: mean pm gap {summary['pm_gap']['mean']:.4f}, "
        f"max |mean share drift| {summary['max_abs_mean_share_drift']}"
    )
    return StudyResult(config, draws, summary, failures, elapsed)


def run_boost_study(config: StudyConfig) -> StudyResult:
    """Segmentation comparison on the two-regime synthetic data, one row per replication and column"""
    if config.scenario != "boost_synthetic":
        raise ConfigurationError(f"run_boost_study runs boost_synthetic, not {config.scenario}")
    started = time.perf_counter()
    rows: List[Tuple] = []
    failures = []
    metric = get_metric(config.metric)
    recipe = ModelRecipe.parse(config.model)
    for replication in range(config.replications):
        seed = derive_seed(config.seed, replication)
        sample = simulate_two_regime(config.train_size + config.test_size, seed, config.regime_share,
                                     config.regime_slope)
        train, test = head_tail_split(sample, config.train_size)
        try:
            report = boost_pipeline(train, test, recipe, metric, config.clusters, seed=seed)
        except XperError as e:
            logger.warning(f"replication {replication} excluded: {e.describe()}")
            failures.append({"replication": replication, "error": e.describe()})
            continue
        for name, column in report.columns.items():
            for metric_id, value in column.suite.items():
                rows.append((replication, name, metric_id, "", np.nan if value is None else value))
    draws = pd.DataFrame(rows, columns=DRAW_COLUMNS)
    summary: Dict[str, Any] = {
        "scenario": config.scenario,
        "metric": config.metric,
        "replications": config.replications,
        "completed": config.replications - len(failures),
        "failed": len(failures),
    }
    for name in ("initial", "xper_clusters", "feature_clusters"):
        summary[name] = _describe(_scalar(draws, name, config.metric))
    return StudyResult(config, draws, summary, failures, time.perf_counter() - started)


def run_study(config: StudyConfig) -> StudyResult:
    if config.scenario == "probit_baseline":
        return run_probit_study(config)
    if config.scenario == "boost_synthetic":
        return run_boost_study(config)
    return run_overfit_study(config)


@dataclass(frozen=True)
class PermutationImportance:
    """Mean metric drop per feature when its column is shuffled"""

    feature_names: Tuple[str, ...]
    drops: np.ndarray
    repeats: int

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.drops > 0.0))

    @property
    def values(self) -> np.ndarray:
        """Drops divided by their sum when every drop is positive, raw drops otherwise"""
        return self.drops / self.drops.sum() if self.is_normalized else self.drops


def permutation_importance(sample: EvalSample, model: ModelAdapter, metric: MetricSpec, repeats: int,
                           seed: int) -> PermutationImportance:
    if repeats < 1:
        raise RangeError(f"repeats must be at least 1, got {repeats}")
    reference = sample_metric(metric, sample, model)
    drops = np.zeros(sample.q)
    for j in range(sample.q):
        total = 0.0
        for repeat in range(repeats):
            rng = np.random.default_rng(derive_seed(seed, j, repeat))
            features = np.array(sample.features)
            features[:, j] = rng.permutation(features[:, j])
            total += reference - sample_metric(metric, sample.with_features(features), model)
        drops[j] = total / repeats
    logger.info(f"Permutation importance ({metric.name}, {repeats} repeats): {np.round(drops, 6).tolist()}")
    return PermutationImportance(sample.feature_names, drops, repeats)


def bootstrap_xper(sample: EvalSample, model: ModelAdapter, metric: MetricSpec, draws: int,
                   seed: int) -> np.ndarray:
    """XPER values on ``draws`` bootstrap resamples, one row per resample that kept the metric defined"""
    if draws < 1:
        raise RangeError(f"draws must be at least 1, got {draws}")
    rows = []
    for b in range(draws):
        rng = np.random.default_rng(derive_seed(seed, b))
        resample = sample.subset(rng.integers(0, sample.n, size=sample.n))
        try:
            rows.append(xper_exact(resample, model, metric, threads=1).phi)
        except DegenerateMetricError as e:
            logger.warning(f"bootstrap draw {b} skipped: {e}")
    return np.array(rows).reshape(len(rows), sample.q)
