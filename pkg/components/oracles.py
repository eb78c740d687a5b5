"""
Independent reference implementations used to check the estimators.

* closed forms of the R2 and MSE decompositions of a linear model
* brute-force Shapley values of an arbitrary coalition game
* interventional SHAP values by direct enumeration
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from components.base_component import ModelAdapter
from components.errors import ContractError, DomainError, RangeError
from components.linear_models import LinearModel
from components.metrics import MetricSpec
from components.xper_exact import check_guard_rail, ranking, xper_exact
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_Q = 12
DIAGONAL_TOLERANCE = 0.1


@dataclass(frozen=True)
class LinearDgpMoments:
    """Moments of (y, x) together with the coefficients of a linear model f(x) = intercept + x'beta_hat.

    Variances and covariances are population moments (divide by n when
    estimated from a sample).
    """

    beta_hat: np.ndarray
    sigma_y2: float
    sigma_yx: np.ndarray
    sigma_xx: np.ndarray
    mu_x: np.ndarray
    mu_y: float = 0.0
    intercept: float = 0.0

    def __post_init__(self):
        q = self.beta_hat.shape[0]
        if self.sigma_yx.shape != (q,) or self.mu_x.shape != (q,) or self.sigma_xx.shape != (q, q):
            raise ContractError(f"moments do not agree on q={q}")
        if not self.sigma_y2 > 0.0:
            raise DomainError(f"target variance must be positive, got {self.sigma_y2}")
        if not np.allclose(self.sigma_xx, self.sigma_xx.T, rtol=0.0, atol=1e-12):
            raise DomainError("feature covariance matrix is not symmetric")

    @property
    def q(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def sigma_x2(self) -> np.ndarray:
        return np.diag(self.sigma_xx).copy()

    @property
    def second_moments(self) -> np.ndarray:
        """E(x_j^2)"""
        return self.sigma_x2 + self.mu_x ** 2

    @property
    def bias(self) -> float:
        """E(y) - E(f(x))"""
        return float(self.mu_y - self.intercept - self.beta_hat @ self.mu_x)

    def max_correlation(self) -> float:
        scale = np.sqrt(self.sigma_x2)
        correlation = self.sigma_xx / np.outer(scale, scale)
        np.fill_diagonal(correlation, 0.0)
        return float(np.max(np.abs(correlation))) if self.q > 1 else 0.0


def empirical_moments(sample: EvalSample, model: LinearModel) -> LinearDgpMoments:
    """Sample moments of (y, x) paired with a fitted linear model's coefficients"""
    if not isinstance(model, LinearModel):
        raise ContractError(f"closed forms need a linear model, got {model.kind}")
    if model.q != sample.q:
        raise ContractError(f"model expects {model.q} features, sample has {sample.q}")
    x, y = sample.features, sample.target
    mu_x = x.mean(axis=0)
    centered = x - mu_x
    y_centered = y - y.mean()
    return LinearDgpMoments(
        beta_hat=np.array(model.coef),
        sigma_y2=float(np.mean(y_centered ** 2)),
        sigma_yx=centered.T @ y_centered / sample.n,
        sigma_xx=centered.T @ centered / sample.n,
        mu_x=mu_x,
        mu_y=float(y.mean()),
        intercept=model.intercept,
    )


def true_moments(beta: Sequence[float], cov_diag: Sequence[float], noise_var: float,
                 intercept: float = 0.0) -> LinearDgpMoments:
    """Population moments of y = intercept + x'beta + e with x ~ N(0, diag(cov_diag)), evaluated at beta_hat = beta"""
    beta = np.asarray(beta, dtype=float)
    variances = np.asarray(cov_diag, dtype=float)
    if beta.shape != variances.shape:
        raise ContractError(f"{beta.size} coefficients for {variances.size} feature variances")
    return LinearDgpMoments(
        beta_hat=beta,
        sigma_y2=float(np.sum(beta ** 2 * variances) + noise_var),
        sigma_yx=beta * variances,
        sigma_xx=np.diag(variances),
        mu_x=np.zeros(beta.size),
        mu_y=float(intercept),
        intercept=float(intercept),
    )


def _require_diagonal(m: LinearDgpMoments, tolerance: float) -> None:
    correlation = m.max_correlation()
    if correlation > tolerance:
        raise DomainError(
            f"closed form assumes uncorrelated features; largest feature correlation is {correlation:.3f} "
            f"(tolerance {tolerance})"
        )


def closed_form_r2_xper(m: LinearDgpMoments, tolerance: float = DIAGONAL_TOLERANCE) -> Tuple[float, np.ndarray]:
    """phi_j = 2 beta_j sigma_{y,x_j} / sigma_y^2 and phi0 = -(beta' Sigma beta + bias^2) / sigma_y^2"""
    _require_diagonal(m, tolerance)
    phi = 2.0 * m.beta_hat * m.sigma_yx / m.sigma_y2
    phi0 = -(m.beta_hat @ m.sigma_xx @ m.beta_hat + m.bias ** 2) / m.sigma_y2
    return float(phi0), phi


def closed_form_mse_xper(m: LinearDgpMoments, tolerance: float = DIAGONAL_TOLERANCE) -> Tuple[float, np.ndarray, float]:
    """Oriented MSE: phi_j = 2 beta_j sigma_{y,x_j}, phi0 = -beta' Sigma beta - sigma_y^2 - bias^2"""
    _require_diagonal(m, tolerance)
    phi = 2.0 * m.beta_hat * m.sigma_yx
    phi0 = float(-(m.beta_hat @ m.sigma_xx @ m.beta_hat) - m.sigma_y2 - m.bias ** 2)
    return phi0, phi, float(phi0 + phi.sum())


def closed_form_individual_r2(m: LinearDgpMoments, x_i, y_i) -> np.ndarray:
    """Per-instance R2 XPER values of a linear model.

    phi_ij = [b_j (x_ij - E x_j) A_ij - b_j^2 (x_ij^2 - E x_j^2) + b_j sum_{k!=j} b_k s_kj] / sigma_y^2
    with A_ij = 2 (y_i - intercept) - sum_{k!=j} b_k (x_ik + E x_k).
    Accepts one instance (q-vector, scalar) or n instances ((n, q) matrix, n-vector).
    """
    rows = np.asarray(x_i, dtype=float)
    single = rows.ndim == 1
    rows = np.atleast_2d(rows)
    targets = np.atleast_1d(np.asarray(y_i, dtype=float))
    if rows.shape[1] != m.q or targets.shape[0] != rows.shape[0]:
        raise ContractError(f"expected {m.q}-wide rows with one target each, got {rows.shape} and {targets.shape}")
    b = m.beta_hat
    weighted = rows * b + b * m.mu_x
    others = weighted.sum(axis=1, keepdims=True) - weighted
    a_term = 2.0 * (targets[:, None] - m.intercept) - others
    covariance = m.sigma_xx @ b - b * m.sigma_x2
    phi = (b * (rows - m.mu_x) * a_term - b ** 2 * (rows ** 2 - m.second_moments) + b * covariance) / m.sigma_y2
    return phi[0] if single else phi


def brute_force_shapley(value_fn: Callable[[int], float], q: int) -> Tuple[float, np.ndarray]:
    """Shapley values of the game ``value_fn`` (mask -> value) from the factorial-weight definition"""
    if not 1 <= q <= BRUTE_FORCE_MAX_Q:
        raise RangeError(f"brute force enumeration supports 1 <= q <= {BRUTE_FORCE_MAX_Q}, got {q}")
    cache = {}

    def value(mask: int) -> float:
        if mask not in cache:
            cache[mask] = float(value_fn(mask))
        return cache[mask]

    phi = np.zeros(q)
    for j in range(q):
        others = [k for k in range(q) if k != j]
        for size in range(q):
            weight = math.factorial(size) * math.factorial(q - size - 1) / math.factorial(q)
            for members in itertools.combinations(others, size):
                mask = sum(1 << k for k in members)
                phi[j] += weight * (value(mask | (1 << j)) - value(mask))
    return value(0), phi


def _marginal_predictions(sample: EvalSample, model: ModelAdapter, mask: int, chunk_rows: int) -> np.ndarray:
    """Mean over u of f(hybrid(x_i, x_u, S)) for every instance i"""
    x, n, q = sample.features, sample.n, sample.q
    keep = np.array([bool(mask >> j & 1) for j in range(q)])
    out = np.empty(n)
    block = max(1, chunk_rows // n)
    for start in range(0, n, block):
        stop = min(n, start + block)
        hybrid = np.where(keep, x[start:stop, None, :], x[None, :, :]).reshape(-1, q)
        out[start:stop] = model.predict(hybrid).value.reshape(stop - start, n).mean(axis=1)
    return out


def shap_values(sample: EvalSample, model: ModelAdapter, allow_large_q: bool = False,
                chunk_rows: int = 8192) -> Tuple[np.ndarray, np.ndarray]:
    """Interventional SHAP values by enumeration.

    Returns the n x q matrix of SHAP values and the n-vector of base values
    (the mean prediction over the sample, repeated).
    """
    q = sample.q
    check_guard_rail(q, allow_large_q)
    values = np.column_stack([_marginal_predictions(sample, model, mask, chunk_rows) for mask in range(1 << q)])
    shap = np.zeros((sample.n, q))
    for j in range(q):
        others = [k for k in range(q) if k != j]
        for size in range(q):
            weight = math.factorial(size) * math.factorial(q - size - 1) / math.factorial(q)
            for members in itertools.combinations(others, size):
                mask = sum(1 << k for k in members)
                shap[:, j] += weight * (values[:, mask | (1 << j)] - values[:, mask])
    return shap, values[:, 0].copy()


def mean_abs_shap(shap: np.ndarray) -> np.ndarray:
    return np.mean(np.abs(np.asarray(shap, dtype=float)), axis=0)


def xper_vs_shap(sample: EvalSample, model: ModelAdapter, metric: MetricSpec,
                 threads: Optional[int] = None) -> pd.DataFrame:
    """Side-by-side XPER and mean |SHAP| per feature with both rankings"""
    report = xper_exact(sample, model, metric, threads=threads)
    shap, _ = shap_values(sample, model)
    importance = mean_abs_shap(shap)
    names = sample.feature_names
    xper_order = ranking(report.phi, names)
    shap_order = ranking(importance, names)
    shares = report.shares
    return pd.DataFrame({
        "feature": list(names),
        "xper": report.phi,
        "xper_share": shares if shares is not None else np.full(report.q, np.nan),
        "mean_abs_shap": importance,
        "xper_rank": [xper_order.index(name) + 1 for name in names],
        "shap_rank": [shap_order.index(name) + 1 for name in names],
    })


def closed_form_table(sample: EvalSample, model: LinearModel, metric: MetricSpec,
                      tolerance: float = DIAGONAL_TOLERANCE, threads: Optional[int] = None) -> pd.DataFrame:
    """Closed-form decomposition next to the exact estimator for r2 or mse"""
    if metric.id not in ("r2", "mse"):
        raise DomainError(f"closed forms exist for r2 and mse only, got {metric.name}")
    moments = empirical_moments(sample, model)
    if metric.id == "r2":
        phi0, phi = closed_form_r2_xper(moments, tolerance)
    else:
        phi0, phi, _ = closed_form_mse_xper(moments, tolerance)
    report = xper_exact(sample, model, metric, threads=threads)
    table = pd.DataFrame({
        "term": ["benchmark"] + list(sample.feature_names),
        "closed_form": np.concatenate([[phi0], phi]),
        "estimator": np.concatenate([[report.phi0], report.phi]),
    })
    table["abs_diff"] = (table["closed_form"] - table["estimator"]).abs()
    logger.info(f"Closed form vs exact estimator ({metric.name}): max |diff| = {table['abs_diff'].max():.3e}")
    return table
