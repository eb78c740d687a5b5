"""
XPER-based segmentation: cluster instances on their individual XPER values,
fit one model per cluster and compare pooled test performance with the
one-fits-all model and with clustering on the features themselves.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from components.base_component import ModelAdapter, Predictions
from components.clustering import ClusterModel, fit_kmeans, fit_kmedoids, nearest_centroid
from components.errors import DegenerateMetricError, DomainError, GroupDegeneracyError, SeparationError
from components.metrics import MetricSpec, metric_suite
from components.recipes import ModelRecipe
from components.xper_exact import xper_exact
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)

BOOST_SPACES = ("xper", "features", "both")


@dataclass
class GroupedColumn:
    """One segmentation: its clustering, per-group models and pooled test predictions"""

    name: str
    cluster: Optional[ClusterModel]
    models: List[ModelAdapter]
    train_labels: np.ndarray
    test_labels: np.ndarray
    predictions: Predictions
    suite: Dict[str, Optional[float]]
    decompositions: List[Optional[Dict[str, Any]]] = field(default_factory=list)

    def group_sizes(self) -> Dict[str, List[int]]:
        k = len(self.models)
        return {
            "train": np.bincount(self.train_labels, minlength=k).tolist(),
            "test": np.bincount(self.test_labels, minlength=k).tolist(),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metrics": dict(self.suite),
            "group_sizes": self.group_sizes(),
            "group_models": [model.to_dict() for model in self.models],
            "group_xper": list(self.decompositions),
        }


@dataclass
class BoostReport:
    """Test metrics of the one-fits-all model next to the cluster-wise models"""

    metric: MetricSpec
    recipe: str
    k: int
    seed: int
    deploy_safe: bool
    columns: Dict[str, GroupedColumn]

    def table(self) -> Dict[str, Dict[str, Optional[float]]]:
        """metric id -> column -> value"""
        ids = list(next(iter(self.columns.values())).suite)
        return {mid: {name: column.suite.get(mid) for name, column in self.columns.items()} for mid in ids}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric.name,
            "model": self.recipe,
            "clusters": self.k,
            "seed": self.seed,
            "deploy_safe": self.deploy_safe,
            "table": self.table(),
            "columns": {name: column.to_dict() for name, column in self.columns.items()},
        }


def _fit_groups(train: EvalSample, labels: np.ndarray, k: int, recipe: ModelRecipe,
                baseline: ModelAdapter) -> List[ModelAdapter]:
    if k == 1:
        return [baseline]
    models = []
    for group in range(k):
        members = train.subset(np.flatnonzero(labels == group))
        if members.n == 0:
            raise GroupDegeneracyError(f"cluster {group} received no training instances; use fewer clusters", group)
        if train.is_classification and not members.has_both_classes():
            raise GroupDegeneracyError(
                f"cluster {group} holds a single target class ({members.n} instances); use fewer clusters", group
            )
        try:
            models.append(recipe.fit(members))
        except SeparationError as e:
            raise GroupDegeneracyError(f"cluster {group}: {e}; use fewer clusters", group) from e
        logger.info(f"Fitted {recipe} on cluster {group} ({members.n} instances)")
    return models


def _pooled_predictions(test: EvalSample, labels: np.ndarray, models: Sequence[ModelAdapter]) -> Predictions:
    """Each test instance predicted by its own group's model, returned in test order"""
    parts, indices = [], []
    for group, model in enumerate(models):
        rows = np.flatnonzero(labels == group)
        if rows.size:
            parts.append(model.predict(test.features[rows]))
            indices.append(rows)
    order = np.concatenate(indices)
    return Predictions.concat(parts).take(np.argsort(order, kind="stable"))


def _group_decompositions(train: EvalSample, labels: np.ndarray, models: Sequence[ModelAdapter],
                          metric: MetricSpec, threads: Optional[int]) -> List[Optional[Dict[str, Any]]]:
    records = []
    for group, model in enumerate(models):
        members = train.subset(np.flatnonzero(labels == group))
        try:
            report = xper_exact(members, model, metric, threads=threads)
            records.append(report.to_dict(include_individual=False))
        except DegenerateMetricError as e:
            logger.warning(f"XPER of cluster {group} undefined: {e}")
            records.append(None)
    return records


def boost_pipeline(
    train: EvalSample,
    test: EvalSample,
    recipe: ModelRecipe,
    metric: MetricSpec,
    k: int,
    space: str = "both",
    seed: int = 0,
    deploy_safe: bool = False,
    metric_ids: Optional[Sequence[str]] = None,
    threads: Optional[int] = None,
) -> BoostReport:
    """Compare one-fits-all, XPER-cluster and feature-cluster models on the test sample.

    Test instances are routed to a cluster by nearest medoid on their own
    individual XPER values against the one-fits-all model (needs test labels),
    or, with ``deploy_safe``, by a nearest-centroid rule on the features that
    imitates the XPER clusters.
    """
    if space not in BOOST_SPACES:
        raise DomainError(f"unknown clustering space '{space}' (expected one of {BOOST_SPACES})")
    if train.feature_names != test.feature_names:
        raise DomainError(f"train and test columns differ: {train.feature_names} vs {test.feature_names}")

    baseline = recipe.fit(train)
    threshold = baseline.label_threshold
    initial_predictions = baseline.predict(test.features)
    columns: Dict[str, GroupedColumn] = {
        "initial": GroupedColumn(
            name="initial",
            cluster=None,
            models=[baseline],
            train_labels=np.zeros(train.n, dtype=int),
            test_labels=np.zeros(test.n, dtype=int),
            predictions=initial_predictions,
            suite=metric_suite(test.target, initial_predictions, metric_ids, threshold),
            decompositions=_group_decompositions(train, np.zeros(train.n, dtype=int), [baseline], metric, threads),
        )
    }

    if space in ("xper", "both"):
        train_xper = xper_exact(train, baseline, metric, individual=True, threads=threads)
        cluster = fit_kmedoids(train_xper.individual_phi, k, seed=seed, space="xper")
        if deploy_safe:
            router = nearest_centroid(train.features, cluster.labels, k)
            test_labels = router.assign(test.features)
        else:
            test_xper = xper_exact(test, baseline, metric, individual=True, threads=threads)
            test_labels = cluster.assign(test_xper.individual_phi)
        columns["xper_clusters"] = _grouped_column("xper_clusters", cluster, train, test, test_labels, recipe,
                                                   baseline, metric, metric_ids, threads)

    if space in ("features", "both"):
        cluster = fit_kmeans(train.features, k, seed=seed)
        columns["feature_clusters"] = _grouped_column("feature_clusters", cluster, train, test,
                                                      cluster.assign(test.features), recipe, baseline, metric,
                                                      metric_ids, threads)

    report = BoostReport(metric=metric, recipe=str(recipe), k=k, seed=seed, deploy_safe=deploy_safe, columns=columns)
    logger.info(f"Segmentation comparison ({metric.name}, k={k}): " + ", ".join(
        f"{name}={column.suite.get(metric.id)}" for name, column in columns.items()
    ))
    return report


def _grouped_column(name: str, cluster: ClusterModel, train: EvalSample, test: EvalSample, test_labels: np.ndarray,
                    recipe: ModelRecipe, baseline: ModelAdapter, metric: MetricSpec,
                    metric_ids: Optional[Sequence[str]], threads: Optional[int]) -> GroupedColumn:
    models = _fit_groups(train, cluster.labels, cluster.k, recipe, baseline)
    predictions = _pooled_predictions(test, test_labels, models)
    return GroupedColumn(
        name=name,
        cluster=cluster,
        models=models,
        train_labels=cluster.labels,
        test_labels=test_labels,
        predictions=predictions,
        suite=metric_suite(test.target, predictions, metric_ids, baseline.label_threshold),
        decompositions=_group_decompositions(train, cluster.labels, models, metric, threads),
    )
