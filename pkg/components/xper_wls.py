"""
Sampled-coalition XPER by kernel-weighted least squares.

Each sampled coalition S_k gives one equation v(S_k) = phi0 + sum_j phi_j z_kj
weighted by kernel_weight(q, |S_k|). The default solve is constrained:
phi0 = v(empty) and sum_j phi_j = v(full) - v(empty), enforced by
eliminating the last coefficient, so efficiency holds for every K.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from components.base_component import ModelAdapter
from components.coalition import Coalition, CoalitionValueTable, kernel_weight
from components.errors import DomainError, RangeError, RankError
from components.metrics import MetricSpec, Nuisance
from components.xper_exact import XperReport
from config.environment import get_config
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)

SAMPLING_SCHEMES = ("uniform", "kernel")


def admissible_count(q: int) -> int:
    """Number of coalitions that are neither empty nor full"""
    return (1 << q) - 2


def sample_coalitions(q: int, K: int, seed: int, scheme: str = "uniform") -> List[Coalition]:
    """K distinct coalitions, none empty or full, drawn without replacement.

    ``uniform`` draws every admissible mask with equal probability;
    ``kernel`` draws masks with probability proportional to their kernel weight.
    """
    total = admissible_count(q)
    if not 1 <= K <= total:
        raise RangeError(f"K must lie in [1, {total}] for q={q}, got {K}")
    if scheme not in SAMPLING_SCHEMES:
        raise DomainError(f"unknown sampling scheme '{scheme}' (expected one of {SAMPLING_SCHEMES})")
    if K == total:
        return [Coalition(mask, q) for mask in range(1, total + 1)]

    rng = np.random.default_rng(seed)
    if scheme == "uniform":
        masks = rng.choice(total, size=K, replace=False) + 1
        return [Coalition(int(mask), q) for mask in masks]

    sizes = np.arange(1, q)
    size_probability = np.array([1.0 / (s * (q - s)) for s in sizes])
    size_probability /= size_probability.sum()
    chosen: List[int] = []
    seen = set()
    while len(chosen) < K:
        size = int(rng.choice(sizes, p=size_probability))
        members = rng.choice(q, size=size, replace=False)
        mask = int(np.sum(1 << members.astype(np.int64)))
        if mask not in seen:
            seen.add(mask)
            chosen.append(mask)
    return [Coalition(mask, q) for mask in chosen]


def _factor(normal: np.ndarray, rank_tol: float, K: int):
    scale = float(np.max(np.diag(normal))) if normal.size else 0.0
    eigenvalues = np.linalg.eigvalsh(normal) if normal.size else np.array([1.0])
    if scale <= 0.0 or eigenvalues.min() <= rank_tol * scale:
        raise RankError(
            f"weighted least squares system is rank deficient with K={K} coalitions; draw more coalitions"
        )
    return linalg.cho_factor(normal)


def _solve_constrained(Z: np.ndarray, weights: np.ndarray, targets: np.ndarray, v_empty: np.ndarray,
                       spread: np.ndarray, rank_tol: float) -> np.ndarray:
    """Coefficients (q x m) for m target columns under phi0 = v_empty and sum(phi) = spread"""
    q = Z.shape[1]
    A = Z[:, : q - 1] - Z[:, q - 1 : q]
    B = targets - v_empty[None, :] - Z[:, q - 1 : q] * spread[None, :]
    weighted = A * weights[:, None]
    factor = _factor(weighted.T @ A, rank_tol, Z.shape[0])
    head = linalg.cho_solve(factor, weighted.T @ B)
    return np.vstack([head, spread[None, :] - head.sum(axis=0, keepdims=True)])


def _solve_unconstrained(Z: np.ndarray, weights: np.ndarray, targets: np.ndarray,
                         rank_tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Intercepts (m,) and coefficients (q x m) of a plain weighted regression on [1, Z]"""
    design = np.column_stack([np.ones(Z.shape[0]), Z])
    weighted = design * weights[:, None]
    factor = _factor(weighted.T @ design, rank_tol, Z.shape[0])
    solution = linalg.cho_solve(factor, weighted.T @ targets)
    return solution[0], solution[1:]


def xper_wls(
    sample: EvalSample,
    model: ModelAdapter,
    metric: MetricSpec,
    K: int,
    seed: int,
    individual: bool = False,
    constrained: bool = True,
    scheme: Optional[str] = None,
    coalitions: Optional[Sequence[Coalition]] = None,
    nuisance: Optional[Nuisance] = None,
    chunk_rows: Optional[int] = None,
    threads: Optional[int] = None,
) -> XperReport:
    """Approximate XPER from K sampled coalitions"""
    settings = get_config()
    scheme = scheme or settings.wls.sampling
    rank_tol = settings.wls.rank_tol
    q = sample.q
    if q == 1:
        coalitions = []
    elif coalitions is None:
        if K < q:
            raise RangeError(f"K={K} coalitions cannot identify {q} XPER values; use K >= {q}")
        coalitions = sample_coalitions(q, K, seed, scheme)
    else:
        coalitions = list(coalitions)
        for coalition in coalitions:
            if coalition.q != q or coalition.mask in (0, (1 << q) - 1):
                raise RangeError(f"coalition mask {coalition.mask} is not admissible for q={q}")

    table = CoalitionValueTable(sample, model, metric, nuisance=nuisance, individual=individual,
                                chunk_rows=chunk_rows, threads=threads)
    full = (1 << q) - 1
    masks = [c.mask for c in coalitions]
    table.fill([0, full] + masks)
    v_empty = table.value(Coalition.empty(q))
    v_full = table.value(Coalition.full(q))

    instance_empty = instance_full = None
    if individual:
        instance_empty = table.instance_values(Coalition.empty(q))
        instance_full = table.instance_values(Coalition.full(q))

    if q == 1:
        phi = np.array([v_full - v_empty])
        phi0 = v_empty
        individual_phi = None if not individual else (instance_full - instance_empty)[:, None]
        individual_phi0 = None if not individual else np.array(instance_empty)
    else:
        Z = np.array([c.indicator() for c in coalitions], dtype=float)
        weights = np.array([kernel_weight(q, c.size) for c in coalitions])
        targets = table.global_vector()[masks][:, None]
        if individual:
            per_instance = table.per_instance_matrix()[:, masks].T
            targets = np.hstack([targets, per_instance])
        if constrained:
            empties = np.array([v_empty] + ([] if not individual else list(instance_empty)))
            spreads = np.array([v_full - v_empty] + ([] if not individual else list(instance_full - instance_empty)))
            coefficients = _solve_constrained(Z, weights, targets, empties, spreads, rank_tol)
            intercepts = empties
        else:
            intercepts, coefficients = _solve_unconstrained(Z, weights, targets, rank_tol)
        phi = coefficients[:, 0].copy()
        phi0 = float(intercepts[0])
        individual_phi = coefficients[:, 1:].T.copy() if individual else None
        individual_phi0 = np.array(intercepts[1:]) if individual else None

    diagnostics = table.diagnostics()
    diagnostics.update({"K": len(coalitions), "seed": seed, "constrained": constrained, "sampling": scheme})
    report = XperReport(
        metric=metric,
        feature_names=sample.feature_names,
        pm=table.pm,
        phi0=phi0,
        phi=phi,
        estimator="wls",
        individual_phi=individual_phi,
        individual_phi0=individual_phi0,
        instance_contributions=np.array(table.instance_contributions) if individual else None,
        instance_predictions=np.array(table.predictions.value) if individual else None,
        diagnostics=diagnostics,
    )
    logger.info(
        f"WLS XPER ({metric.name}) with K={len(coalitions)} on n={sample.n}, q={q}: "
        f"residual={report.efficiency_residual:.2e}"
    )
    return report
