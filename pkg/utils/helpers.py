"""
Synthetic data generators and seed helpers for simulation studies
"""
from typing import Sequence

import numpy as np

from components.errors import DomainError
from utils.data_loader import CLASSIFICATION, REGRESSION, EvalSample


def derive_seed(seed: int, *keys: int) -> int:
    """Reproducible child seed for (seed, keys...), e.g. one per replication"""
    if seed < 0 or any(key < 0 for key in keys):
        raise DomainError(f"seeds must be unsigned, got {seed} and keys {keys}")
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def feature_names(q: int) -> tuple:
    return tuple(f"x{j + 1}" for j in range(q))


def _gaussian_features(rng: np.random.Generator, cov_diag: Sequence[float], n: int) -> np.ndarray:
    variances = np.asarray(cov_diag, dtype=float)
    if variances.ndim != 1 or variances.size < 1:
        raise DomainError("cov_diag must be a non-empty vector of variances")
    if np.any(~np.isfinite(variances)) or np.any(variances <= 0.0):
        raise DomainError(f"feature variances must be positive, got {variances.tolist()}")
    return rng.standard_normal((n, variances.size)) * np.sqrt(variances)


def simulate_latent_probit(beta: Sequence[float], cov_diag: Sequence[float], n_total: int, seed: int) -> EvalSample:
    """Draw y = 1(b0 + x'b + e > 0) with x ~ N(0, diag(cov_diag)) and e ~ N(0, 1).

    ``beta`` holds the intercept first, then one slope per feature.
    """
    coef = np.asarray(beta, dtype=float)
    if coef.size != len(cov_diag) + 1:
        raise DomainError(f"beta needs {len(cov_diag) + 1} entries (intercept + slopes), got {coef.size}")
    if n_total < 2:
        raise DomainError(f"n_total must be at least 2, got {n_total}")
    rng = np.random.default_rng(seed)
    features = _gaussian_features(rng, cov_diag, n_total)
    noise = rng.standard_normal(n_total)
    latent = coef[0] + (features * coef[1:]).sum(axis=1) + noise
    return EvalSample(
        features=features,
        target=(latent > 0.0).astype(float),
        feature_names=feature_names(features.shape[1]),
        task=CLASSIFICATION,
    )


def simulate_linear_regression(
    beta: Sequence[float],
    cov_diag: Sequence[float],
    noise_var: float,
    n: int,
    seed: int,
    intercept: float = 0.0,
) -> EvalSample:
    """Draw y = intercept + x'beta + e with independent Gaussian features and noise"""
    coef = np.asarray(beta, dtype=float)
    if coef.size != len(cov_diag):
        raise DomainError(f"beta needs {len(cov_diag)} slopes, got {coef.size}")
    if noise_var < 0.0:
        raise DomainError(f"noise variance must be non-negative, got {noise_var}")
    rng = np.random.default_rng(seed)
    features = _gaussian_features(rng, cov_diag, n)
    noise = rng.standard_normal(n) * np.sqrt(noise_var)
    return EvalSample(
        features=features,
        target=intercept + (features * coef).sum(axis=1) + noise,
        feature_names=feature_names(features.shape[1]),
        task=REGRESSION,
    )


def simulate_two_regime(n: int, seed: int, share: float = 0.35, slope: float = 2.0) -> EvalSample:
    """Latent two-regime probit mixture.

    A hidden group g ~ Bernoulli(share) flips the sign of the x1 slope:
    y* = s_g * slope * x1 + 0.5 * x2 + e with s_0 = +1, s_1 = -1; x3 is noise.
    No single index model fits both regimes.
    """
    if not 0.0 < share < 1.0:
        raise DomainError(f"regime share must lie in (0, 1), got {share}")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, 3))
    regime = rng.random(n) < share
    sign = np.where(regime, -1.0, 1.0)
    latent = sign * slope * features[:, 0] + 0.5 * features[:, 1] + rng.standard_normal(n)
    return EvalSample(
        features=features,
        target=(latent > 0.0).astype(float),
        feature_names=feature_names(3),
        task=CLASSIFICATION,
    )
