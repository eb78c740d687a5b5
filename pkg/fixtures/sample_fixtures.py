"""
Shared samples and fitted models.

Session-scoped fixtures are immutable (EvalSample arrays are read-only and
fitted models never change), so one instance serves every test.
"""
from pathlib import Path

import numpy as np
import pytest

from components.linear_models import LinearModel, fit_ols, fit_probit
from utils.data_loader import CLASSIFICATION, REGRESSION, EvalSample, head_tail_split, write_csv
from utils.helpers import simulate_latent_probit, simulate_linear_regression

PROBIT_BETA = [0.05, 0.5, 0.5, 0.0]
PROBIT_COV = [1.2, 1.0, 1.0]
LINEAR_BETA = [1.0, -0.5, 0.25]
LINEAR_COV = [1.0, 2.0, 0.5]


@pytest.fixture(scope="session")
def probit_draw():
    """One draw of the probit study: probit fitted on the first 700 rows, test on the last 300"""
    sample = simulate_latent_probit(PROBIT_BETA, PROBIT_COV, 1000, seed=7)
    train, test = head_tail_split(sample, 700)
    return train, test, fit_probit(train)


@pytest.fixture(scope="session")
def probit_test(probit_draw):
    return probit_draw[1]


@pytest.fixture(scope="session")
def probit_model(probit_draw):
    return probit_draw[2]


@pytest.fixture(scope="session")
def linear_sample():
    """Regression sample from y = x'b + e with independent Gaussian features"""
    return simulate_linear_regression(LINEAR_BETA, LINEAR_COV, noise_var=1.0, n=120, seed=11)


@pytest.fixture(scope="session")
def ols_model(linear_sample):
    return fit_ols(linear_sample)


@pytest.fixture
def small_regression():
    """Hand-sized regression sample with a model using only x1 and x2"""
    features = np.array([
        [0.0, 1.0, 3.0],
        [1.0, 0.0, -1.0],
        [2.0, 2.0, 0.5],
        [3.0, 1.0, 2.0],
        [4.0, 3.0, -2.0],
        [5.0, 2.0, 1.0],
    ])
    target = np.array([1.0, 1.5, 4.0, 4.5, 7.5, 7.0])
    sample = EvalSample(features, target, ("x1", "x2", "x3"), task=REGRESSION)
    model = LinearModel.from_coefficients("ols", [1.0, 0.5, 0.0], intercept=0.2)
    return sample, model


@pytest.fixture
def small_classification():
    """Eight-row binary sample with a fixed probit model"""
    features = np.array([
        [-1.5, 0.2],
        [-0.8, -1.0],
        [-0.3, 0.7],
        [0.1, -0.4],
        [0.4, 1.1],
        [0.9, -0.6],
        [1.3, 0.3],
        [2.0, -1.2],
    ])
    target = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0])
    sample = EvalSample(features, target, ("x1", "x2"), task=CLASSIFICATION)
    model = LinearModel.from_coefficients("probit", [0.9, 0.4], intercept=-0.1)
    return sample, model


@pytest.fixture
def csv_writer(tmp_path):
    """Write raw CSV text or an EvalSample under tmp_path and return the path"""

    def _write(content, name: str = "data.csv") -> Path:
        path = tmp_path / name
        if isinstance(content, EvalSample):
            return write_csv(content, path)
        path.write_text(content, encoding="utf-8")
        return path

    return _write
