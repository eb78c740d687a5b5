"""
CSV ingestion, sample validation and partitioning
"""
import numpy as np
import pytest

from components.errors import (
    DataFormatError,
    DegenerateMetricError,
    MissingColumnError,
    RangeError,
    StratificationError,
    XperError,
)
from utils.data_loader import (
    CLASSIFICATION,
    REGRESSION,
    EvalSample,
    SplitSpec,
    head_tail_split,
    load_csv,
    stratified_split,
    undersample,
)


@pytest.mark.smoke
def test_load_csv_reads_header_and_infers_task(csv_writer):
    path = csv_writer("a,b,y\n1,2,0\n3,4,1\n5,6,1\n")
    sample = load_csv(path, "y")

    assert sample.feature_names == ("a", "b")
    assert sample.task == CLASSIFICATION
    assert sample.n == 3 and sample.q == 2
    np.testing.assert_array_equal(sample.target, [0.0, 1.0, 1.0])


def test_load_csv_regression_target(csv_writer):
    sample = load_csv(csv_writer("x,y\n1,0.5\n2,1.5\n3,2.0\n"), "y")
    assert sample.task == REGRESSION


def test_target_column_can_sit_anywhere(csv_writer):
    sample = load_csv(csv_writer("y,a,b\n1,2,3\n0,4,5\n"), "y")
    assert sample.feature_names == ("a", "b")
    np.testing.assert_array_equal(sample.features[1], [4.0, 5.0])


def test_categorical_labels_are_coded_by_sorted_label(csv_writer):
    path = csv_writer("color,x,y\nred,1,0\nblue,2,1\ngreen,3,0\nblue,4,1\n")
    sample = load_csv(path, "y", kinds={"color": "categorical"})

    np.testing.assert_array_equal(sample.features[:, 0], [2.0, 0.0, 1.0, 0.0])
    assert sample.feature_kinds == ("categorical", "continuous")


def test_binary_column_with_three_labels_is_rejected(csv_writer):
    path = csv_writer("flag,y\na,0\nb,1\nc,0\n")
    with pytest.raises(DataFormatError, match="tagged binary"):
        load_csv(path, "y", kinds={"flag": "binary"})


def test_unparseable_cell_reports_row_and_column(csv_writer):
    path = csv_writer("a,b,y\n1,2,0\n3,oops,1\n")
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(path, "y")

    assert excinfo.value.row == 2
    assert excinfo.value.column == "b"
    assert excinfo.value.describe().startswith("data format: ")


def test_empty_cell_is_a_data_format_error(csv_writer):
    with pytest.raises(DataFormatError, match="empty cell"):
        load_csv(csv_writer("a,y\n1,0\n,1\n"), "y")


def test_missing_target_column(csv_writer):
    with pytest.raises(MissingColumnError) as excinfo:
        load_csv(csv_writer("a,b\n1,2\n3,4\n"), "y")
    assert "a, b" in str(excinfo.value)


def test_header_only_file_is_rejected(csv_writer):
    with pytest.raises(DataFormatError, match="no data rows"):
        load_csv(csv_writer("a,y\n"), "y")


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv", "y")


def test_single_row_sample_is_rejected():
    with pytest.raises(DataFormatError, match="at least 2 rows"):
        EvalSample(np.ones((1, 2)), np.zeros(1), ("a", "b"))


def test_classification_target_must_be_binary():
    with pytest.raises(DataFormatError, match="only 0 and 1"):
        EvalSample(np.ones((3, 1)), np.array([0.0, 1.0, 2.0]), ("a",), task=CLASSIFICATION)


def test_non_finite_feature_is_located():
    features = np.array([[1.0, 2.0], [np.nan, 1.0]])
    with pytest.raises(DataFormatError) as excinfo:
        EvalSample(features, np.zeros(2), ("a", "b"))
    assert (excinfo.value.row, excinfo.value.column) == (2, "a")


def test_sample_arrays_are_read_only():
    sample = EvalSample(np.zeros((2, 1)), np.zeros(2), ("a",))
    with pytest.raises(ValueError):
        sample.features[0, 0] = 1.0


def test_require_both_classes_on_single_class_sample():
    sample = EvalSample(np.arange(4.0).reshape(4, 1), np.ones(4), ("a",), task=CLASSIFICATION)
    assert not sample.has_both_classes()
    with pytest.raises(DegenerateMetricError, match="only positives"):
        sample.require_both_classes("auc")


def test_permute_features_reorders_names_and_columns():
    sample = EvalSample(np.arange(6.0).reshape(2, 3), np.zeros(2), ("a", "b", "c"))
    permuted = sample.permute_features([2, 0, 1])

    assert permuted.feature_names == ("c", "a", "b")
    np.testing.assert_array_equal(permuted.features[0], [2.0, 0.0, 1.0])
    with pytest.raises(RangeError):
        sample.permute_features([0, 0, 1])


def test_stratified_split_keeps_class_proportions():
    target = np.array([1.0] * 20 + [0.0] * 80)
    sample = EvalSample(np.arange(100.0).reshape(100, 1), target, ("a",), task=CLASSIFICATION)
    train, test = stratified_split(sample, SplitSpec(0.7, stratified=True, seed=3))

    assert (train.n, test.n) == (70, 30)
    assert (train.positives, test.positives) == (14, 6)


def test_stratified_split_is_reproducible():
    target = np.tile([0.0, 1.0], 20)
    sample = EvalSample(np.arange(40.0).reshape(40, 1), target, ("a",), task=CLASSIFICATION)
    first, _ = stratified_split(sample, SplitSpec(0.5, seed=9))
    second, _ = stratified_split(sample, SplitSpec(0.5, seed=9))
    np.testing.assert_array_equal(first.features, second.features)


def test_stratified_split_needs_two_members_per_class():
    target = np.array([1.0] + [0.0] * 9)
    sample = EvalSample(np.arange(10.0).reshape(10, 1), target, ("a",), task=CLASSIFICATION)
    with pytest.raises(StratificationError):
        stratified_split(sample, SplitSpec(0.5))


def test_head_tail_split_bounds():
    sample = EvalSample(np.arange(10.0).reshape(10, 1), np.zeros(10), ("a",))
    train, test = head_tail_split(sample, 7)

    np.testing.assert_array_equal(train.features[:, 0], np.arange(7.0))
    np.testing.assert_array_equal(test.features[:, 0], [7.0, 8.0, 9.0])
    with pytest.raises(RangeError):
        head_tail_split(sample, 9)


def test_undersample_hits_target_rate():
    target = np.array([1.0] * 10 + [0.0] * 90)
    sample = EvalSample(np.arange(100.0).reshape(100, 1), target, ("a",), task=CLASSIFICATION)
    balanced = undersample(sample, 0.5, seed=1)

    assert balanced.positives == 10
    assert balanced.n == 20


def test_engine_errors_keep_builtin_bases():
    assert issubclass(DataFormatError, ValueError)
    assert issubclass(RangeError, IndexError)
    assert issubclass(MissingColumnError, XperError)
