"""
Built-in models: OLS, probit, logit, CART trees and model recipes
"""
import numpy as np
import pytest
from scipy.special import log_ndtr, ndtr

from components.errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    SeparationError,
    SingularDesignError,
)
from components.linear_models import LinearModel, fit_logit, fit_ols, fit_probit
from components.recipes import ModelRecipe, load_model, save_model
from components.tree import cross_validate_depth, fit_cart, stratified_folds
from utils.data_loader import CLASSIFICATION, REGRESSION, EvalSample


@pytest.mark.smoke
def test_ols_matches_least_squares(linear_sample, ols_model):
    design = np.column_stack([np.ones(linear_sample.n), linear_sample.features])
    expected, *_ = np.linalg.lstsq(design, linear_sample.target, rcond=None)

    assert ols_model.intercept == pytest.approx(expected[0], abs=1e-10)
    np.testing.assert_allclose(ols_model.coef, expected[1:], atol=1e-10)
    assert ols_model.diagnostics["residual_orthogonality"] < 1e-10


def test_ols_without_intercept(linear_sample):
    model = fit_ols(linear_sample, intercept=False)
    expected, *_ = np.linalg.lstsq(linear_sample.features, linear_sample.target, rcond=None)

    assert model.intercept == 0.0
    np.testing.assert_allclose(model.coef, expected, atol=1e-10)


def test_collinear_column_is_named():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 1))
    features = np.column_stack([x, 2.0 * x])
    sample = EvalSample(features, rng.standard_normal(20), ("a", "b"))
    with pytest.raises(SingularDesignError) as excinfo:
        fit_ols(sample)
    assert excinfo.value.column == "b"


def test_probit_converges_on_simulated_draw(probit_draw):
    train, _, model = probit_draw
    path = model.diagnostics["loglik_path"]

    assert model.diagnostics["converged"]
    assert all(later >= earlier - 1e-9 for earlier, later in zip(path, path[1:]))
    # true slopes 0.5, 0.5, 0.0 with 700 draws
    np.testing.assert_allclose(model.coef, [0.5, 0.5, 0.0], atol=0.2)


def test_probit_score_equations_hold(probit_draw):
    train, _, model = probit_draw
    eta = model.linear_index(train.features)
    sign = 2.0 * train.target - 1.0
    mills = np.exp(-0.5 * eta ** 2 - 0.5 * np.log(2 * np.pi) - log_ndtr(sign * eta))
    gradient = np.column_stack([np.ones(train.n), train.features]).T @ (sign * mills)

    assert np.max(np.abs(gradient)) < 1e-6
    np.testing.assert_allclose(model.predict(train.features).probability, ndtr(eta))


def test_logit_and_probit_rank_alike(probit_draw):
    train, test, probit = probit_draw
    logit = fit_logit(train)
    assert np.corrcoef(probit.linear_index(test.features), logit.linear_index(test.features))[0, 1] > 0.99


def test_separable_classes_raise_separation():
    sample = EvalSample(np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([0.0, 0.0, 1.0, 1.0]), ("a",),
                        task=CLASSIFICATION)
    with pytest.raises(SeparationError):
        fit_probit(sample)


def test_probit_needs_a_binary_sample(linear_sample):
    with pytest.raises(DomainError):
        fit_probit(linear_sample)


def test_prediction_records_for_classifiers():
    model = LinearModel.from_coefficients("logit", [1.0], intercept=0.0, label_threshold=0.6)
    predictions = model.predict(np.array([[0.0], [1.0]]))

    np.testing.assert_allclose(predictions.probability, [0.5, 1.0 / (1.0 + np.exp(-1.0))])
    np.testing.assert_array_equal(predictions.label, [0.0, 1.0])
    assert predictions.kinds == ("score", "probability", "label")


def test_row_width_is_checked():
    model = LinearModel.from_coefficients("ols", [1.0, 2.0])
    with pytest.raises(ContractError, match="width 2"):
        model.predict(np.ones((3, 3)))


def test_single_row_is_accepted():
    model = LinearModel.from_coefficients("ols", [1.0, 2.0], intercept=1.0)
    assert model.predict(np.array([1.0, 1.0])).score.tolist() == [4.0]


def test_with_threshold_leaves_original_untouched():
    model = LinearModel.from_coefficients("probit", [1.0])
    clone = model.with_threshold(0.8)
    assert (model.label_threshold, clone.label_threshold) == (0.5, 0.8)
    assert model.fingerprint() != clone.fingerprint()


def test_cart_splits_between_classes():
    sample = _step_sample()
    tree = fit_cart(sample, max_depth=3)

    assert tree.depth == 1
    assert tree.nodes[0].threshold == pytest.approx(1.5)
    np.testing.assert_array_equal(tree.predict(sample.features).probability, [0.0, 0.0, 1.0, 1.0])
    assert tree.used_features() == [0]


def test_cart_min_depth_forces_splits():
    tree = fit_cart(_step_sample(), max_depth=2, min_depth=2)
    assert tree.depth == 2
    assert len(tree.leaves) == 4


def test_cart_leaf_region_bounds():
    tree = fit_cart(_step_sample(), max_depth=1)
    right_leaf = tree.nodes[0].right
    assert tree.leaf_region(right_leaf) == {0: (1.5, np.inf)}


def test_cart_rejects_regression_and_bad_settings(linear_sample):
    with pytest.raises(DomainError):
        fit_cart(linear_sample, max_depth=2)
    with pytest.raises(ConfigurationError):
        fit_cart(_step_sample(), max_depth=0)
    with pytest.raises(ConfigurationError):
        fit_cart(_step_sample(), max_depth=2, min_depth=3)


def test_stratified_folds_balance_classes():
    target = np.array([0.0] * 10 + [1.0] * 5)
    folds = stratified_folds(target, 5, seed=0)
    for fold in range(5):
        assert np.count_nonzero((folds == fold) & (target == 1.0)) == 1
        assert np.count_nonzero((folds == fold) & (target == 0.0)) == 2


def test_cross_validated_depth_is_a_candidate(probit_draw):
    train, _, _ = probit_draw
    depth = cross_validate_depth(train.subset(np.arange(300)), [1, 2, 3], folds=3, seed=4)
    assert depth in (1, 2, 3)


@pytest.mark.parametrize(
    "spec, kind, options",
    [
        ("probit", "probit", {}),
        ("builtin:ols", "ols", {}),
        ("cart:max_depth=3,min_leaf=5", "cart", {"max_depth": 3, "min_leaf": 5}),
        ("logit:intercept=false", "logit", {"intercept": False}),
    ],
)
def test_recipe_parsing(spec, kind, options):
    recipe = ModelRecipe.parse(spec)
    assert (recipe.kind, recipe.options) == (kind, options)


@pytest.mark.parametrize("spec", ["svm", "cart", "cart:max_depth=deep", "probit:alpha=1", "probit:intercept"])
def test_bad_recipes(spec):
    with pytest.raises(ConfigurationError):
        ModelRecipe.parse(spec)


def test_recipe_string_is_canonical():
    assert str(ModelRecipe.parse("cart:min_leaf=2, max_depth=4")) == "cart:max_depth=4,min_leaf=2"


@pytest.mark.parametrize("spec", ["probit", "cart:max_depth=3"])
def test_saved_model_predicts_identically(probit_draw, tmp_path, spec):
    train, test, _ = probit_draw
    model = ModelRecipe.parse(spec).fit(train)
    restored = load_model(save_model(model, tmp_path / "model.json"))

    np.testing.assert_array_equal(restored.predict(test.features).probability,
                                  model.predict(test.features).probability)
    assert restored.fingerprint() == model.fingerprint()


def test_ols_recipe_on_regression(linear_sample):
    model = ModelRecipe.parse("ols").fit(linear_sample)
    assert model.task == REGRESSION


# Helpers
def _step_sample() -> EvalSample:
    return EvalSample(np.array([[0.0], [1.0], [2.0], [3.0]]), np.array([0.0, 0.0, 1.0, 1.0]), ("a",),
                      task=CLASSIFICATION)
