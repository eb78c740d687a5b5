"""
Coalition masks, Shapley and kernel weights, and the memoized value table
"""
import math

import numpy as np
import pytest

from components.coalition import (
    Coalition,
    CoalitionValueTable,
    coalition_value,
    hybrid_row,
    kernel_weight,
    shapley_weight,
)
from components.errors import ContractError, DomainError, RangeError
from components.metrics import composite_metric, fit_nuisance, get_metric


@pytest.mark.smoke
def test_coalition_members_and_label():
    coalition = Coalition.from_members([0, 2], q=4)
    assert (coalition.mask, coalition.size, coalition.members) == (5, 2, (0, 2))
    assert coalition.label(["a", "b", "c", "d"]) == "{a, c}"
    assert Coalition.full(3).mask == 7 and Coalition.empty(3).size == 0


def test_coalition_bounds():
    with pytest.raises(RangeError):
        Coalition(8, q=3)
    with pytest.raises(RangeError):
        Coalition.from_members([3], q=3)


@pytest.mark.parametrize("q", [1, 2, 3, 5, 8])
def test_shapley_weights_sum_to_one_over_subsets_of_others(q):
    total = sum(math.comb(q - 1, s) * shapley_weight(q, s) for s in range(q))
    assert total == pytest.approx(1.0, abs=1e-15)


def test_shapley_weight_values():
    assert shapley_weight(3, 0) == pytest.approx(1 / 3)
    assert shapley_weight(3, 1) == pytest.approx(1 / 6)
    with pytest.raises(DomainError):
        shapley_weight(3, 3)


def test_kernel_weight_values_and_infinite_ends():
    assert kernel_weight(4, 1) == pytest.approx(3 / (4 * 1 * 3))
    assert kernel_weight(4, 2) == pytest.approx(3 / (6 * 2 * 2))
    for size in (0, 4):
        with pytest.raises(DomainError, match="infinite"):
            kernel_weight(4, size)


def test_hybrid_row_takes_members_from_first_row():
    mixed = hybrid_row([1.0, 2.0, 3.0], [9.0, 8.0, 7.0], Coalition.from_members([1], 3))
    np.testing.assert_array_equal(mixed, [9.0, 2.0, 7.0])
    with pytest.raises(ContractError):
        hybrid_row([1.0, 2.0], [1.0, 2.0], Coalition(1, 3))


def test_value_matches_direct_definition(small_regression):
    sample, model = small_regression
    metric = get_metric("mse")
    table = CoalitionValueTable(sample, model, metric, individual=True)
    coalition = Coalition.from_members([0], 3)

    expected = np.empty(sample.n)
    for i in range(sample.n):
        rows = np.array([hybrid_row(sample.features[i], sample.features[u], coalition) for u in range(sample.n)])
        expected[i] = np.mean(-(sample.target[i] - model.predict(rows).score) ** 2)

    np.testing.assert_allclose(table.instance_values(coalition), expected, rtol=0, atol=1e-12)
    assert table.value(coalition) == pytest.approx(expected.mean(), abs=1e-12)


def test_full_coalition_equals_sample_metric(small_classification):
    sample, model = small_classification
    table = CoalitionValueTable(sample, model, get_metric("auc"), individual=True)

    assert table.value(Coalition.full(2)) == table.pm
    np.testing.assert_array_equal(table.instance_values(Coalition.full(2)), table.instance_contributions)


def test_masks_are_filled_once(small_regression):
    sample, model = small_regression
    table = CoalitionValueTable(sample, model, get_metric("r2"))
    table.fill(range(8))
    rows_after_first_fill = table.prediction_rows
    table.fill(range(8))

    assert table.prediction_rows == rows_after_first_fill
    assert table.evaluated == 8
    assert sorted(table.fill_order) == list(range(8))


def test_threads_and_chunking_do_not_change_values(probit_test, probit_model):
    metric = get_metric("auc")
    sample = probit_test.subset(np.arange(80))
    reference = CoalitionValueTable(sample, probit_model, metric, threads=1)
    reference.fill(range(8))
    threaded = CoalitionValueTable(sample, probit_model, metric, threads=4, chunk_rows=100)
    threaded.fill(range(8))

    np.testing.assert_allclose(threaded.global_vector(), reference.global_vector(), rtol=0, atol=1e-14)


def test_instance_values_need_individual_table(small_regression):
    sample, model = small_regression
    table = CoalitionValueTable(sample, model, get_metric("mse"))
    with pytest.raises(ContractError, match="not requested"):
        table.instance_values(Coalition.empty(3))


def test_coalition_value_checks_its_table(small_regression, small_classification):
    sample, model = small_regression
    metric = get_metric("mse")
    table = CoalitionValueTable(sample, model, metric)

    assert coalition_value(table, Coalition.empty(3), sample, model, metric) == table.value(Coalition.empty(3))
    with pytest.raises(ContractError, match="another sample"):
        coalition_value(table, Coalition.empty(3), sample, model, get_metric("mae"))
    with pytest.raises(ContractError, match="nuisance"):
        coalition_value(table, Coalition.empty(3), nuisance=fit_nuisance(metric, sample, model))


def test_nuisance_comes_from_the_unmodified_sample(small_classification):
    sample, model = small_classification
    metric = get_metric("balanced_accuracy")
    table = CoalitionValueTable(sample, model, metric)
    assert table.nuisance.values["positive_rate"] == pytest.approx(sample.positives / sample.n)


def test_model_and_sample_width_must_agree(small_regression, small_classification):
    sample, _ = small_regression
    _, model = small_classification
    with pytest.raises(ContractError, match="expects 2 features"):
        CoalitionValueTable(sample, model, get_metric("mse"))


@pytest.mark.parametrize("members", [(), (0,), (1,)])
def test_auc_ranks_hybrid_rows_within_their_coalition(small_classification, members):
    sample, model = small_classification
    table = CoalitionValueTable(sample, model, get_metric("auc"), individual=True, chunk_rows=16)
    coalition = Coalition.from_members(members, 2)

    expected = _hybrid_pair_values(sample, model, coalition)
    np.testing.assert_allclose(table.instance_values(coalition), expected, rtol=0, atol=1e-12)
    assert table.value(coalition) == pytest.approx(expected.mean(), abs=1e-12)


def test_auc_benchmark_is_one_half(small_classification):
    sample, model = small_classification
    table = CoalitionValueTable(sample, model, get_metric("auc"), individual=True)

    assert table.value(Coalition.empty(2)) == pytest.approx(0.5, abs=1e-12)
    # four positives out of eight
    np.testing.assert_allclose(table.instance_values(Coalition.empty(2)), 0.5, rtol=0, atol=1e-12)
    assert table.nuisance.values["pair_rate"] == pytest.approx(16 / 64)


def test_composite_pairwise_term_uses_coalition_pool(small_classification):
    sample, model = small_classification
    composite = composite_metric([(2.0, get_metric("auc")), (1.0, get_metric("accuracy"))])
    mixed = CoalitionValueTable(sample, model, composite)
    auc = CoalitionValueTable(sample, model, get_metric("auc"))
    accuracy = CoalitionValueTable(sample, model, get_metric("accuracy"))
    empty = Coalition.empty(2)

    assert mixed.value(empty) == pytest.approx(2.0 * auc.value(empty) + accuracy.value(empty), abs=1e-12)


# Helpers
def _hybrid_pair_values(sample, model, coalition: Coalition) -> np.ndarray:
    """v_i(S) by direct pair counting over every hybrid row of the coalition"""
    n, y = sample.n, sample.target
    scores = np.array([
        [model.predict(hybrid_row(sample.features[i], sample.features[u], coalition)[None, :]).probability[0]
         for u in range(n)]
        for i in range(n)
    ])
    positives, negatives = int(y.sum()), int(n - y.sum())
    values = np.empty(n)
    for i in range(n):
        opposite = scores[y != y[i]].ravel()
        total = 0.0
        for s in scores[i]:
            below = np.count_nonzero(opposite < s) + 0.5 * np.count_nonzero(opposite == s)
            above = np.count_nonzero(opposite > s) + 0.5 * np.count_nonzero(opposite == s)
            total += below if y[i] == 1.0 else above
        # counts over n hybrid copies of each opposite-class instance
        values[i] = total / n / n / (2.0 * positives * negatives / n)
    return values
