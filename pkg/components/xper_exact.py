"""
Exact XPER decomposition by full coalition enumeration
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from components.base_component import ModelAdapter
from components.coalition import CoalitionValueTable, shapley_weight
from components.errors import ContractError, GuardRailError, RangeError
from components.metrics import MetricSpec, Nuisance, raw_value
from config.environment import get_config
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)

SHARE_EPSILON = 1e-9


@dataclass
class XperReport:
    """Benchmark, per-feature XPER values and, optionally, their per-instance counterparts"""

    metric: MetricSpec
    feature_names: Tuple[str, ...]
    pm: float
    phi0: float
    phi: np.ndarray
    estimator: str = "exact"
    individual_phi: Optional[np.ndarray] = None
    individual_phi0: Optional[np.ndarray] = None
    instance_contributions: Optional[np.ndarray] = None
    instance_predictions: Optional[np.ndarray] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def q(self) -> int:
        return self.phi.size

    @property
    def efficiency_residual(self) -> float:
        return float(self.pm - self.phi0 - np.sum(self.phi))

    @property
    def raw_pm(self) -> float:
        return raw_value(self.metric, self.pm)

    @property
    def spread(self) -> float:
        return self.pm - self.phi0

    @property
    def shares(self) -> Optional[np.ndarray]:
        """phi_j / (PM - phi0), or None when the spread is too small to normalize by"""
        if abs(self.spread) < SHARE_EPSILON:
            return None
        return self.phi / self.spread

    @property
    def has_individual(self) -> bool:
        return self.individual_phi is not None

    def individual_residuals(self) -> np.ndarray:
        if not self.has_individual:
            raise ContractError("report holds no individual values")
        return self.instance_contributions - self.individual_phi0 - self.individual_phi.sum(axis=1)

    def to_dict(self, include_individual: bool = True) -> Dict[str, Any]:
        shares = self.shares
        record: Dict[str, Any] = {
            "metric": self.metric.name,
            "feature_names": list(self.feature_names),
            "pm": self.pm,
            "raw_pm": self.raw_pm,
            "phi0": self.phi0,
            "phi": self.phi.tolist(),
            "shares": None if shares is None else shares.tolist(),
            "estimator": self.estimator,
            "efficiency_residual": self.efficiency_residual,
            "diagnostics": dict(self.diagnostics),
        }
        if include_individual and self.has_individual:
            record["individual"] = {
                "phi0": self.individual_phi0.tolist(),
                "phi": self.individual_phi.tolist(),
                "contribution": self.instance_contributions.tolist(),
                "prediction": self.instance_predictions.tolist(),
            }
        return record


@dataclass(frozen=True)
class IndividualBreakdown:
    index: int
    phi0: float
    phi: np.ndarray
    contribution: float
    prediction: float

    @property
    def residual(self) -> float:
        return float(self.contribution - self.phi0 - np.sum(self.phi))


def _subset_sizes(q: int) -> np.ndarray:
    masks = np.arange(1 << q)
    return np.array([bin(int(m)).count("1") for m in masks])


def shapley_from_values(global_values: np.ndarray, q: int,
                        instance_values: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Weighted marginal contributions from a complete table of coalition values.

    ``global_values`` is indexed by mask; ``instance_values`` (n x 2^q) is
    optional. Returns (phi, individual phi or None).
    """
    masks = np.arange(1 << q)
    sizes = _subset_sizes(q)
    weights = np.array([shapley_weight(q, s) if s < q else 0.0 for s in range(q + 1)])
    phi = np.empty(q)
    individual = None if instance_values is None else np.empty((instance_values.shape[0], q))
    for j in range(q):
        bit = 1 << j
        without = masks[(masks & bit) == 0]
        w = weights[sizes[without]]
        phi[j] = float(np.sum(w * (global_values[without | bit] - global_values[without])))
        if individual is not None:
            individual[:, j] = (instance_values[:, without | bit] - instance_values[:, without]) @ w
    return phi, individual


def check_guard_rail(q: int, allow_large_q: bool) -> None:
    limit = get_config().max_exact_features
    if q > limit and not allow_large_q:
        raise GuardRailError(
            f"exact enumeration over q={q} features needs 2^{q} coalitions (limit q={limit}); "
            f"use the wls estimator or set the override"
        )


def xper_exact(
    sample: EvalSample,
    model: ModelAdapter,
    metric: MetricSpec,
    individual: bool = False,
    allow_large_q: bool = False,
    nuisance: Optional[Nuisance] = None,
    chunk_rows: Optional[int] = None,
    threads: Optional[int] = None,
) -> XperReport:
    """Exact XPER: every one of the 2^q coalitions is evaluated once and shared by all features"""
    q = sample.q
    check_guard_rail(q, allow_large_q)
    table = CoalitionValueTable(sample, model, metric, nuisance=nuisance, individual=individual,
                                chunk_rows=chunk_rows, threads=threads)
    table.fill(range(1 << q))
    global_values = table.global_vector()
    instance_values = table.per_instance_matrix() if individual else None
    phi, individual_phi = shapley_from_values(global_values, q, instance_values)

    report = XperReport(
        metric=metric,
        feature_names=sample.feature_names,
        pm=table.pm,
        phi0=float(global_values[0]),
        phi=phi,
        estimator="exact",
        individual_phi=individual_phi,
        individual_phi0=None if instance_values is None else instance_values[:, 0].copy(),
        instance_contributions=np.array(table.instance_contributions) if individual else None,
        instance_predictions=np.array(table.predictions.value) if individual else None,
        diagnostics=table.diagnostics(),
    )
    logger.info(
        f"Exact XPER ({metric.name}) on n={sample.n}, q={q}: pm={report.pm:.6f}, phi0={report.phi0:.6f}, "
        f"residual={report.efficiency_residual:.2e}, {report.diagnostics['predictions']} predictions"
    )
    return report


def individual_report(report: XperReport, index: int) -> IndividualBreakdown:
    """Per-instance breakdown: benchmark, feature values, contribution and prediction"""
    if not report.has_individual:
        raise ContractError("report was computed without individual values")
    n = report.individual_phi.shape[0]
    if not 0 <= index < n:
        raise RangeError(f"instance index {index} is outside [0, {n})")
    return IndividualBreakdown(
        index=index,
        phi0=float(report.individual_phi0[index]),
        phi=report.individual_phi[index].copy(),
        contribution=float(report.instance_contributions[index]),
        prediction=float(report.instance_predictions[index]),
    )


def ranking(values: np.ndarray, names: Tuple[str, ...]) -> List[str]:
    """Feature names sorted by decreasing value"""
    order = np.argsort(-np.asarray(values), kind="stable")
    return [names[j] for j in order]
