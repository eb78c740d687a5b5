"""
Linear-index models: OLS, probit and logit fitted by Newton-Raphson
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit, log_ndtr, ndtr

from components.base_component import ModelAdapter
from components.errors import DomainError, SeparationError, SingularDesignError
from config.environment import get_config
from utils.data_loader import CLASSIFICATION, REGRESSION, EvalSample

logger = logging.getLogger(__name__)

LINEAR_KINDS = ("ols", "probit", "logit")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class LinearModel(ModelAdapter):
    """f(x) = link(intercept + x'coef) with an identity, probit or logit link"""

    def __init__(
        self,
        kind: str,
        coef: Sequence[float],
        intercept: float,
        feature_names: Sequence[str],
        task: Optional[str] = None,
        label_threshold: float = 0.5,
        fit_intercept: bool = True,
        diagnostics: Optional[Dict[str, Any]] = None,
    ):
        if kind not in LINEAR_KINDS:
            raise DomainError(f"unknown linear model kind '{kind}' (expected one of {LINEAR_KINDS})")
        if task is None:
            task = REGRESSION if kind == "ols" else CLASSIFICATION
        if kind != "ols" and task != CLASSIFICATION:
            raise DomainError(f"{kind} models are binary classifiers")
        super().__init__(task, feature_names, label_threshold)
        self.kind = kind
        self.coef = np.array(coef, dtype=float)
        self.coef.setflags(write=False)
        if self.coef.shape != (self.q,):
            raise DomainError(f"{self.q} feature names for {self.coef.size} coefficients")
        self.intercept = float(intercept)
        self.fit_intercept = bool(fit_intercept)
        self.diagnostics = dict(diagnostics or {})

    @classmethod
    def from_coefficients(cls, kind: str, coef: Sequence[float], intercept: float = 0.0,
                          feature_names: Optional[Sequence[str]] = None, **kwargs) -> "LinearModel":
        names = feature_names or tuple(f"x{j + 1}" for j in range(len(coef)))
        return cls(kind, coef, intercept, names, **kwargs)

    def linear_index(self, rows: np.ndarray) -> np.ndarray:
        # row-wise reduction keeps every row's value independent of the batch it sits in
        return (rows * self.coef).sum(axis=1) + self.intercept

    def _raw_predict(self, rows: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        eta = self.linear_index(rows)
        if self.kind == "probit":
            return eta, ndtr(eta)
        if self.kind == "logit":
            return eta, expit(eta)
        if self.is_classifier:
            # linear probability model
            return eta, np.clip(eta, 0.0, 1.0)
        return eta, None

    def parameters(self) -> Dict[str, Any]:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "fit_intercept": self.fit_intercept,
        }


def _design(train: EvalSample, intercept: bool) -> Tuple[np.ndarray, List[str]]:
    names = list(train.feature_names)
    if intercept:
        return np.column_stack([np.ones(train.n), train.features]), ["intercept"] + names
    return np.array(train.features), names


def _check_rank(design: np.ndarray, names: List[str], rank_tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unpivoted QR; a column whose part orthogonal to the preceding ones vanishes is collinear."""
    n, p = design.shape
    if n <= p:
        raise SingularDesignError(f"{n} rows cannot identify {p} parameters", column=names[-1])
    q_factor, r_factor = linalg.qr(design, mode="economic")
    norms = np.linalg.norm(design, axis=0)
    for k in range(p):
        if norms[k] == 0.0 or abs(r_factor[k, k]) <= rank_tol * norms[k]:
            raise SingularDesignError(
                f"column '{names[k]}' is collinear with the preceding design columns", column=names[k]
            )
    return q_factor, r_factor


def fit_ols(train: EvalSample, intercept: bool = True, rank_tol: Optional[float] = None) -> LinearModel:
    """Least squares via a rank-checked QR factorization"""
    rank_tol = get_config().fitting.rank_tol if rank_tol is None else rank_tol
    design, names = _design(train, intercept)
    q_factor, r_factor = _check_rank(design, names, rank_tol)
    beta = linalg.solve_triangular(r_factor, q_factor.T @ train.target)
    residual = train.target - design @ beta
    orthogonality = float(np.max(np.abs(design.T @ residual)) / max(1.0, np.abs(train.target).sum()))
    model = LinearModel(
        "ols",
        beta[1:] if intercept else beta,
        beta[0] if intercept else 0.0,
        train.feature_names,
        task=train.task,
        fit_intercept=intercept,
        diagnostics={"residual_orthogonality": orthogonality, "n": train.n},
    )
    logger.info(f"Fitted ols on n={train.n}, q={train.q}: intercept={model.intercept:.6g}")
    return model


def _probit_terms(eta: np.ndarray, sign: np.ndarray, design: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    z = sign * eta
    log_cdf = log_ndtr(z)
    # inverse Mills ratio phi(z) / Phi(z), evaluated in log space
    mills = np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_cdf)
    loglik = float(np.sum(log_cdf))
    gradient = design.T @ (sign * mills)
    curvature = mills * (mills + z)
    hessian = -(design * curvature[:, None]).T @ design
    return loglik, gradient, hessian


def _logit_terms(eta: np.ndarray, sign: np.ndarray, design: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    loglik = float(-np.sum(np.logaddexp(0.0, -sign * eta)))
    prob = expit(eta)
    target = (sign + 1.0) / 2.0
    gradient = design.T @ (target - prob)
    hessian = -(design * (prob * (1.0 - prob))[:, None]).T @ design
    return loglik, gradient, hessian


def _loglik(link: str, eta: np.ndarray, sign: np.ndarray) -> float:
    if link == "probit":
        return float(np.sum(log_ndtr(sign * eta)))
    return float(-np.sum(np.logaddexp(0.0, -sign * eta)))


def _fit_binary(train: EvalSample, link: str, intercept: bool, max_iter: Optional[int],
                tol: Optional[float]) -> LinearModel:
    """Newton-Raphson with step halving on the binary log-likelihood"""
    settings = get_config().fitting
    max_iter = settings.max_iter if max_iter is None else max_iter
    tol = settings.tol if tol is None else tol
    if not train.is_classification:
        raise DomainError(f"{link} needs a binary classification sample")
    if not train.has_both_classes():
        raise DomainError(f"{link} needs both classes in the training sample")

    design, names = _design(train, intercept)
    _check_rank(design, names, settings.rank_tol)
    sign = 2.0 * train.target - 1.0
    terms = _probit_terms if link == "probit" else _logit_terms
    beta = np.zeros(design.shape[1])
    loglik_path: List[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        eta = design @ beta
        loglik, gradient, hessian = terms(eta, sign, design)
        loglik_path.append(loglik)
        if np.max(np.abs(gradient)) <= tol:
            converged = True
            break
        try:
            factor = linalg.cho_factor(-hessian)
            step = linalg.cho_solve(factor, gradient)
        except linalg.LinAlgError:
            raise SeparationError(f"{link} information matrix became singular at iteration {iterations}; "
                                  f"the classes look separable")
        scale = 1.0
        candidate = beta + step
        floor = loglik - 1e-12 * abs(loglik)
        while _loglik(link, design @ candidate, sign) < floor and scale > 2.0 ** -30:
            scale *= 0.5
            candidate = beta + scale * step
        beta = candidate
        logger.debug(f"{link} iteration {iterations}: loglik={loglik:.10f} step scale={scale}")
        if np.all(sign * (design @ beta) > 0.0):
            raise SeparationError(f"{link} fit separates the classes perfectly at iteration {iterations}; "
                                  f"the likelihood has no maximum")

    if not converged:
        raise SeparationError(
            f"{link} did not converge in {max_iter} iterations (max |beta| = {np.max(np.abs(beta)):.3g}); "
            f"coefficients diverge"
        )
    model = LinearModel(
        link,
        beta[1:] if intercept else beta,
        beta[0] if intercept else 0.0,
        train.feature_names,
        task=CLASSIFICATION,
        fit_intercept=intercept,
        diagnostics={"iterations": iterations, "converged": converged, "loglik_path": loglik_path},
    )
    logger.info(f"Fitted {link} on n={train.n}: {iterations} iteration(s), loglik={loglik_path[-1]:.6f}")
    return model


def fit_probit(train: EvalSample, intercept: bool = True, max_iter: Optional[int] = None,
               tol: Optional[float] = None) -> LinearModel:
    return _fit_binary(train, "probit", intercept, max_iter, tol)


def fit_logit(train: EvalSample, intercept: bool = True, max_iter: Optional[int] = None,
              tol: Optional[float] = None) -> LinearModel:
    return _fit_binary(train, "logit", intercept, max_iter, tol)
