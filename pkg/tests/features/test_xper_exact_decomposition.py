"""
Exact XPER: efficiency, symmetry, null features and agreement with brute force
"""
import numpy as np
import pytest

from components.coalition import Coalition, CoalitionValueTable
from components.errors import ContractError, DegenerateMetricError, GuardRailError, RangeError
from components.linear_models import LinearModel
from components.metrics import composite_metric, get_metric, sample_metric
from components.oracles import brute_force_shapley
from components.tree import fit_cart
from components.xper_exact import check_guard_rail, individual_report, ranking, xper_exact
from utils.data_loader import CLASSIFICATION, EvalSample
from utils.fluent_helpers import expect_report


@pytest.mark.smoke
def test_efficiency_on_probit_auc(probit_test, probit_model):
    report = xper_exact(probit_test, probit_model, get_metric("auc"))

    expect_report(report, "probit auc").should_satisfy_efficiency().should_use_estimator("exact")
    assert report.pm == pytest.approx(sample_metric(get_metric("auc"), probit_test, probit_model), abs=1e-15)
    assert report.phi0 == pytest.approx(0.5, abs=1e-12)


def test_auc_benchmark_per_class(probit_test, probit_model):
    report = xper_exact(probit_test, probit_model, get_metric("auc"), individual=True)
    positive_rate = probit_test.target.mean()
    positives = probit_test.target == 1.0

    # without features every instance is ranked against its own score distribution
    np.testing.assert_allclose(report.individual_phi0[positives], 1.0 / (4.0 * positive_rate), rtol=0, atol=1e-12)
    np.testing.assert_allclose(report.individual_phi0[~positives], 1.0 / (4.0 * (1.0 - positive_rate)),
                               rtol=0, atol=1e-12)
    expect_report(report, "auc benchmark").should_average_to_global().should_satisfy_efficiency()
    assert report.phi[0] > 0.1 and report.phi[1] > 0.05
    assert abs(report.phi[2]) < 0.01


@pytest.mark.parametrize("metric_id", ["mse", "mae", "r2", "prediction"])
def test_individual_efficiency_and_averaging_for_regression(small_regression, metric_id):
    sample, model = small_regression
    report = xper_exact(sample, model, get_metric(metric_id), individual=True)
    (
        expect_report(report, metric_id)
        .should_satisfy_efficiency()
        .should_average_to_global()
        .should_have_null_feature(2, individual=True)
    )


@pytest.mark.parametrize("metric_id", ["auc", "accuracy", "balanced_accuracy", "brier", "sensitivity",
                                       "specificity", "precision"])
def test_individual_efficiency_for_classification(small_classification, metric_id):
    sample, model = small_classification
    report = xper_exact(sample, model, get_metric(metric_id), individual=True)
    expect_report(report, metric_id).should_satisfy_efficiency().should_average_to_global()


@pytest.mark.oracle
def test_matches_brute_force_shapley(probit_test, probit_model):
    sample = probit_test.subset(np.arange(120))
    metric = get_metric("auc")
    report = xper_exact(sample, probit_model, metric)
    table = CoalitionValueTable(sample, probit_model, metric)
    phi0, phi = brute_force_shapley(lambda mask: table.value(Coalition(mask, sample.q)), sample.q)

    expect_report(report, "brute force").should_have_phi0(phi0, tol=1e-15).should_have_phi(phi, tol=1e-12)


def test_unused_tree_feature_is_null(probit_draw):
    train, test, _ = probit_draw
    tree = fit_cart(train, max_depth=1)
    unused = next(j for j in range(train.q) if j not in tree.used_features())

    report = xper_exact(test, tree, get_metric("auc"), individual=True)
    expect_report(report, "stump").should_have_null_feature(unused, individual=True).should_satisfy_efficiency()


def test_symmetric_features_get_equal_values():
    rng = np.random.default_rng(5)
    features = rng.standard_normal((60, 2))
    target = (features.sum(axis=1) + 0.3 * rng.standard_normal(60) > 0).astype(float)
    sample = EvalSample(features, target, ("a", "b"), task=CLASSIFICATION)
    swapped = sample.permute_features([1, 0])
    model = LinearModel.from_coefficients("probit", [0.7, 0.7], feature_names=("a", "b"))

    report = xper_exact(sample, model, get_metric("brier"))
    mirrored = xper_exact(swapped, model, get_metric("brier"))
    np.testing.assert_allclose(report.phi, mirrored.phi[::-1], rtol=0, atol=1e-12)


def test_composite_metric_decomposes_linearly(probit_test, probit_model):
    sample = probit_test.subset(np.arange(100))
    auc = xper_exact(sample, probit_model, get_metric("auc"), individual=True)
    accuracy = xper_exact(sample, probit_model, get_metric("accuracy"), individual=True)
    mixed = xper_exact(sample, probit_model, composite_metric([(2.0, get_metric("auc")),
                                                               (0.5, get_metric("accuracy"))]), individual=True)

    np.testing.assert_allclose(mixed.phi, 2.0 * auc.phi + 0.5 * accuracy.phi, rtol=0, atol=1e-10)
    assert mixed.phi0 == pytest.approx(2.0 * auc.phi0 + 0.5 * accuracy.phi0, abs=1e-10)
    np.testing.assert_allclose(mixed.individual_phi, 2.0 * auc.individual_phi + 0.5 * accuracy.individual_phi,
                               rtol=0, atol=1e-10)


@pytest.mark.parametrize("metric_id", ["auc", "brier", "accuracy"])
def test_duplicated_column_with_tied_coefficient_shares_equally(probit_test, metric_id):
    features = probit_test.features[:120]
    sample = EvalSample(np.column_stack([features[:, 0], features[:, 0], features[:, 1]]), probit_test.target[:120],
                        ("x1", "x1_copy", "x2"), task=CLASSIFICATION)
    model = LinearModel.from_coefficients("probit", [0.4, 0.4, 0.5], feature_names=sample.feature_names)

    report = xper_exact(sample, model, get_metric(metric_id), individual=True)
    assert report.phi[0] == pytest.approx(report.phi[1], abs=1e-10)
    np.testing.assert_allclose(report.individual_phi[:, 0], report.individual_phi[:, 1], rtol=0, atol=1e-10)


def test_feature_order_is_equivariant(small_regression):
    sample, model = small_regression
    order = [2, 0, 1]
    permuted_model = LinearModel.from_coefficients("ols", model.coef[order], model.intercept,
                                                   feature_names=tuple(sample.feature_names[j] for j in order))
    report = xper_exact(sample, model, get_metric("r2"))
    permuted = xper_exact(sample.permute_features(order), permuted_model, get_metric("r2"))

    np.testing.assert_allclose(permuted.phi, report.phi[order], rtol=0, atol=1e-12)
    assert permuted.phi0 == pytest.approx(report.phi0, abs=1e-12)


def test_single_feature_takes_the_whole_spread():
    sample = EvalSample(np.array([[0.0], [1.0], [2.0], [4.0]]), np.array([0.5, 0.9, 2.2, 3.8]), ("x1",))
    model = LinearModel.from_coefficients("ols", [1.0])
    report = xper_exact(sample, model, get_metric("r2"))
    assert report.phi[0] == pytest.approx(report.pm - report.phi0, abs=1e-15)


def test_threads_leave_results_unchanged(probit_test, probit_model):
    sample = probit_test.subset(np.arange(100))
    serial = xper_exact(sample, probit_model, get_metric("auc"), threads=1)
    parallel = xper_exact(sample, probit_model, get_metric("auc"), threads=3)
    expect_report(parallel, "threads").should_match(serial, tol=1e-14)


def test_guard_rail_blocks_large_q():
    with pytest.raises(GuardRailError, match="wls"):
        check_guard_rail(16, allow_large_q=False)
    check_guard_rail(16, allow_large_q=True)

    sample = EvalSample(np.zeros((3, 16)) + np.arange(3.0)[:, None], np.arange(3.0), tuple(f"x{j}" for j in range(16)))
    model = LinearModel.from_coefficients("ols", np.ones(16), feature_names=sample.feature_names)
    with pytest.raises(GuardRailError):
        xper_exact(sample, model, get_metric("mse"))


def test_single_class_sample_is_degenerate_for_auc(small_classification):
    sample, model = small_classification
    positives = sample.subset(np.flatnonzero(sample.target == 1.0))
    with pytest.raises(DegenerateMetricError):
        xper_exact(positives, model, get_metric("auc"))


def test_individual_breakdown(small_regression):
    sample, model = small_regression
    report = xper_exact(sample, model, get_metric("mse"), individual=True)
    breakdown = individual_report(report, 3)

    assert breakdown.residual == pytest.approx(0.0, abs=1e-12)
    assert breakdown.prediction == pytest.approx(model.predict(sample.features[3]).score[0])
    with pytest.raises(RangeError):
        individual_report(report, sample.n)
    with pytest.raises(ContractError):
        individual_report(xper_exact(sample, model, get_metric("mse")), 0)


def test_report_record_and_shares(small_regression):
    sample, model = small_regression
    report = xper_exact(sample, model, get_metric("mse"))
    record = report.to_dict()

    assert record["raw_pm"] == pytest.approx(-report.pm)
    assert sum(record["shares"]) == pytest.approx(1.0)
    assert "individual" not in record
    assert record["diagnostics"]["coalitions"] == 8


def test_ranking_orders_by_decreasing_value():
    assert ranking(np.array([0.1, 0.3, -0.2]), ("a", "b", "c")) == ["b", "a", "c"]
