"""
Performance metrics as per-instance contributions.

Every metric is written as the sample mean of a per-instance contribution
G(y_i; x_i; delta) where delta is a nuisance record frozen from the reference
sample. All metrics are oriented so that higher is better: MAE, MSE and Brier
contributions are negated.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from components.base_component import ModelAdapter, Predictions
from components.errors import ContractError, DegenerateMetricError, DomainError
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)

METRIC_IDS = (
    "mae",
    "mse",
    "r2",
    "accuracy",
    "balanced_accuracy",
    "brier",
    "precision",
    "sensitivity",
    "specificity",
    "auc",
    "prediction",
)
FLIPPED = frozenset({"mae", "mse", "brier"})
PROBABILITY_METRICS = frozenset({"auc", "brier"})
LABEL_METRICS = frozenset({"accuracy", "balanced_accuracy", "precision", "sensitivity", "specificity"})
BOTH_CLASSES_METRICS = frozenset({"auc", "balanced_accuracy", "sensitivity", "specificity"})
PAIRWISE_METRICS = frozenset({"auc"})
CLASSIFICATION_METRICS = PROBABILITY_METRICS | LABEL_METRICS
REGRESSION_SUITE = ("mse", "mae", "r2")
CLASSIFICATION_SUITE = ("auc", "accuracy", "balanced_accuracy", "brier", "precision", "sensitivity", "specificity")


@dataclass(frozen=True)
class MetricSpec:
    """A metric id plus the hard-label threshold used by label metrics.

    ``terms`` is only set for composite metrics a*G1 + b*G2 + ...
    """

    id: str
    label_threshold: float = 0.5
    terms: Tuple[Tuple[float, "MetricSpec"], ...] = ()

    def __post_init__(self):
        if self.id == "composite":
            if not self.terms:
                raise DomainError("a composite metric needs at least one term")
        elif self.id not in METRIC_IDS:
            raise DomainError(f"unknown metric '{self.id}' (expected one of {', '.join(METRIC_IDS)})")
        if not 0.0 < self.label_threshold < 1.0:
            raise DomainError(f"label threshold must lie in (0, 1), got {self.label_threshold}")

    @property
    def orientation_flip(self) -> bool:
        return self.id in FLIPPED

    @property
    def needs_probability(self) -> bool:
        if self.terms:
            return any(spec.needs_probability for _, spec in self.terms)
        return self.id in PROBABILITY_METRICS

    @property
    def needs_label(self) -> bool:
        if self.terms:
            return any(spec.needs_label for _, spec in self.terms)
        return self.id in LABEL_METRICS

    @property
    def needs_both_classes(self) -> bool:
        if self.terms:
            return any(spec.needs_both_classes for _, spec in self.terms)
        return self.id in BOTH_CLASSES_METRICS

    @property
    def pairwise(self) -> bool:
        """Contributions compare an instance against the opposite class, not just its own prediction"""
        if self.terms:
            return any(spec.pairwise for _, spec in self.terms)
        return self.id in PAIRWISE_METRICS

    @property
    def name(self) -> str:
        if not self.terms:
            return self.id
        return " + ".join(f"{weight:g}*{spec.name}" for weight, spec in self.terms)


def get_metric(metric_id: str, label_threshold: float = 0.5) -> MetricSpec:
    return MetricSpec(metric_id.strip().lower(), label_threshold)


def composite_metric(terms: Sequence[Tuple[float, MetricSpec]]) -> MetricSpec:
    """Metric whose contribution is the weighted sum of the terms' contributions"""
    return MetricSpec("composite", terms=tuple((float(w), spec) for w, spec in terms))


@dataclass(frozen=True)
class Nuisance:
    """Sample-level parameters a metric's contribution depends on, frozen from the reference sample"""

    metric_id: str
    values: Dict[str, float] = field(default_factory=dict)
    positive_pool: Optional[np.ndarray] = None
    negative_pool: Optional[np.ndarray] = None
    parts: Tuple["Nuisance", ...] = ()

    @property
    def n(self) -> int:
        return int(self.values.get("n", 0))

    def to_dict(self) -> Dict[str, object]:
        record: Dict[str, object] = {"metric": self.metric_id, **self.values}
        if self.positive_pool is not None:
            record["pool_size"] = int(self.positive_pool.size + self.negative_pool.size)
        if self.parts:
            record["parts"] = [part.to_dict() for part in self.parts]
        return record


def _is_binary(y: np.ndarray) -> bool:
    return bool(np.all((y == 0.0) | (y == 1.0)))


def _labels(metric: MetricSpec, predictions: Predictions) -> np.ndarray:
    if predictions.probability is not None:
        return (predictions.probability >= metric.label_threshold).astype(float)
    return predictions.require("label", metric.id)


def nuisance_from_arrays(metric: MetricSpec, y: np.ndarray, predictions: Predictions) -> Nuisance:
    """Freeze the nuisance record from a target vector and the model's predictions on it"""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 0:
        raise DegenerateMetricError(f"{metric.name} is undefined on an empty sample")
    if len(predictions) != n:
        raise ContractError(f"{len(predictions)} predictions for {n} targets")
    if metric.terms:
        parts = tuple(nuisance_from_arrays(spec, y, predictions) for _, spec in metric.terms)
        return Nuisance("composite", {"n": float(n)}, parts=parts)

    mid = metric.id
    if mid in CLASSIFICATION_METRICS and not _is_binary(y):
        raise DegenerateMetricError(f"{mid} requires a binary 0/1 target")
    if metric.needs_both_classes:
        positives = float(np.count_nonzero(y == 1.0))
        if positives == 0.0 or positives == n:
            present = "positives" if positives else "negatives"
            raise DegenerateMetricError(f"{mid} requires both classes; the sample holds only {present}")
    if metric.needs_probability:
        predictions.require("probability", mid)

    values: Dict[str, float] = {"n": float(n)}
    if mid == "r2":
        variance = float(np.mean((y - y.mean()) ** 2))
        if variance <= 0.0:
            raise DegenerateMetricError("r2 is undefined for a constant target (zero variance)")
        values["variance"] = variance
    elif mid == "balanced_accuracy":
        values["positive_rate"] = float(np.mean(y))
        values["negative_rate"] = float(np.mean(1.0 - y))
    elif mid == "sensitivity":
        values["positive_rate"] = float(np.mean(y))
    elif mid == "specificity":
        values["negative_rate"] = float(np.mean(1.0 - y))
    elif mid == "precision":
        predicted_rate = float(np.mean(_labels(metric, predictions)))
        if predicted_rate == 0.0:
            raise DegenerateMetricError("precision is undefined: the model predicts no positives")
        values["predicted_rate"] = predicted_rate
    elif mid == "auc":
        probability = predictions.probability
        positive_pool = np.sort(probability[y == 1.0])
        negative_pool = np.sort(probability[y == 0.0])
        positive_pool.setflags(write=False)
        negative_pool.setflags(write=False)
        values["positives"] = float(positive_pool.size)
        values["negatives"] = float(negative_pool.size)
        values["pair_rate"] = positive_pool.size * negative_pool.size / float(n * n)
        return Nuisance(mid, values, positive_pool, negative_pool)
    return Nuisance(mid, values)


def coalition_nuisance(metric: MetricSpec, nuisance: Nuisance, y: np.ndarray, predictions: Predictions) -> Nuisance:
    """Nuisance for one coalition's hybrid rows.

    Pairwise metrics compare each hybrid row against the opposite-class pool
    of the same coalition's hybrid predictions, so both members of a pair are
    perturbed. Class counts and the pair rate stay frozen. Every other metric
    keeps ``nuisance`` as is.
    """
    if not metric.pairwise:
        return nuisance
    if metric.terms:
        parts = tuple(coalition_nuisance(spec, part, y, predictions)
                      for (_, spec), part in zip(metric.terms, nuisance.parts))
        return replace(nuisance, parts=parts)
    y = np.asarray(y, dtype=float)
    probability = predictions.require("probability", metric.id)
    if probability.shape != y.shape:
        raise ContractError(f"{probability.size} hybrid predictions for {y.size} targets")
    positive_pool = np.sort(probability[y == 1.0])
    negative_pool = np.sort(probability[y == 0.0])
    positive_pool.setflags(write=False)
    negative_pool.setflags(write=False)
    return replace(nuisance, positive_pool=positive_pool, negative_pool=negative_pool)


def fit_nuisance(metric: MetricSpec, sample: EvalSample, model: ModelAdapter,
                 predictions: Optional[Predictions] = None) -> Nuisance:
    """Compute the frozen nuisance record of ``metric`` on the reference sample"""
    if metric.needs_both_classes:
        sample.require_both_classes(metric.name)
    if predictions is None:
        predictions = model.predict(sample.features)
    nuisance = nuisance_from_arrays(metric, sample.target, predictions)
    logger.debug(f"Nuisance for {metric.name}: {nuisance.to_dict()}")
    return nuisance


def _auc_contributions(y: np.ndarray, probability: np.ndarray, nuisance: Nuisance) -> np.ndarray:
    """Symmetric pairwise AUC contribution against the nuisance's class pools.

    A negative instance earns the share of pooled positives scored above it,
    a positive instance the share of pooled negatives scored below it;
    ties count one half. Shares are scaled to the frozen class counts, so on
    the reference pools the sample mean of these terms is the rank AUC.
    """
    pos, neg = nuisance.positive_pool, nuisance.negative_pool
    n = float(nuisance.n)
    pos_right = np.searchsorted(pos, probability, side="right")
    pos_left = np.searchsorted(pos, probability, side="left")
    neg_right = np.searchsorted(neg, probability, side="right")
    neg_left = np.searchsorted(neg, probability, side="left")
    positives_above = ((pos.size - pos_right) + 0.5 * (pos_right - pos_left)) * (nuisance.values["positives"] / pos.size)
    negatives_below = (neg_left + 0.5 * (neg_right - neg_left)) * (nuisance.values["negatives"] / neg.size)
    credit = np.where(y == 1.0, negatives_below, positives_above) / n
    return credit / (2.0 * nuisance.values["pair_rate"])


def contributions(metric: MetricSpec, y: np.ndarray, predictions: Predictions, nuisance: Nuisance) -> np.ndarray:
    """Vectorized per-instance contributions G(y_i; prediction_i; nuisance)"""
    y = np.asarray(y, dtype=float)
    if metric.terms:
        total = np.zeros(y.shape)
        for (weight, spec), part in zip(metric.terms, nuisance.parts):
            total = total + weight * contributions(spec, y, predictions, part)
        return total

    mid = metric.id
    if mid != nuisance.metric_id:
        raise ContractError(f"nuisance was fitted for '{nuisance.metric_id}', not '{mid}'")
    if mid == "prediction":
        return np.array(predictions.value, dtype=float)
    if mid == "mae":
        return -np.abs(y - predictions.value)
    if mid == "mse":
        return -((y - predictions.value) ** 2)
    if mid == "r2":
        return 1.0 - (y - predictions.value) ** 2 / nuisance.values["variance"]
    if mid == "brier":
        return -((y - predictions.require("probability", mid)) ** 2)
    if mid == "auc":
        return _auc_contributions(y, predictions.require("probability", mid), nuisance)

    label = _labels(metric, predictions)
    if mid == "accuracy":
        return y * label + (1.0 - y) * (1.0 - label)
    if mid == "balanced_accuracy":
        return 0.5 * (y * label / nuisance.values["positive_rate"]
                      + (1.0 - y) * (1.0 - label) / nuisance.values["negative_rate"])
    if mid == "precision":
        return y * label / nuisance.values["predicted_rate"]
    if mid == "sensitivity":
        return y * label / nuisance.values["positive_rate"]
    if mid == "specificity":
        return (1.0 - y) * (1.0 - label) / nuisance.values["negative_rate"]
    raise DomainError(f"no contribution formula for '{mid}'")


def contribution(metric: MetricSpec, y: float, prediction: Predictions, nuisance: Nuisance) -> float:
    """Contribution of a single instance; ``prediction`` holds one record"""
    if len(prediction) != 1:
        raise ContractError(f"expected one prediction record, got {len(prediction)}")
    return float(contributions(metric, np.array([y], dtype=float), prediction, nuisance)[0])


def mean_contribution(values: Iterable[float]) -> float:
    """Exactly rounded sample mean; shared by every code path that reports PM_n"""
    values = np.asarray(values, dtype=float)
    return math.fsum(values.tolist()) / values.size


def sample_metric(metric: MetricSpec, sample: EvalSample, model: ModelAdapter) -> float:
    """Oriented PM_n: the mean of per-instance contributions on the sample"""
    predictions = model.predict(sample.features)
    nuisance = fit_nuisance(metric, sample, model, predictions)
    return mean_contribution(contributions(metric, sample.target, predictions, nuisance))


def raw_value(metric: MetricSpec, oriented: float) -> float:
    """Undo the orientation flip of MAE, MSE and Brier"""
    return -oriented if metric.orientation_flip else oriented


def evaluate_predictions(metric: MetricSpec, y: np.ndarray, predictions: Predictions) -> float:
    """Oriented metric of arbitrary predictions against ``y``"""
    nuisance = nuisance_from_arrays(metric, y, predictions)
    return mean_contribution(contributions(metric, y, predictions, nuisance))


def metric_suite(y: np.ndarray, predictions: Predictions, ids: Optional[Sequence[str]] = None,
                 label_threshold: float = 0.5) -> Dict[str, Optional[float]]:
    """Raw (un-flipped) values of several metrics; undefined ones map to None"""
    y = np.asarray(y, dtype=float)
    if ids is None:
        ids = CLASSIFICATION_SUITE if predictions.probability is not None else REGRESSION_SUITE
    suite: Dict[str, Optional[float]] = {}
    for metric_id in ids:
        metric = MetricSpec(metric_id, label_threshold)
        try:
            suite[metric_id] = raw_value(metric, evaluate_predictions(metric, y, predictions))
        except DegenerateMetricError as e:
            logger.warning(f"{metric_id} undefined on pooled predictions: {e}")
            suite[metric_id] = None
    return suite


def rank_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC with half credit for ties"""
    spec = MetricSpec("auc")
    probability = np.asarray(scores, dtype=float)
    return evaluate_predictions(spec, y, Predictions(score=probability, probability=probability))
