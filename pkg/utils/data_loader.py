"""
Evaluation samples: CSV ingestion, encoding, and partitioning
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from components.errors import (
    DataFormatError,
    DegenerateMetricError,
    DomainError,
    MissingColumnError,
    RangeError,
    StratificationError,
)

logger = logging.getLogger(__name__)

REGRESSION = "regression"
CLASSIFICATION = "binary_classification"
TASKS = (REGRESSION, CLASSIFICATION)
FEATURE_KINDS = ("continuous", "binary", "categorical")


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True, order="C")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class EvalSample:
    """An evaluation dataset: features, target and feature metadata.

    Arrays are copied on construction and marked read-only, so one sample can
    be shared by concurrent readers.
    """

    features: np.ndarray
    target: np.ndarray
    feature_names: Tuple[str, ...]
    task: str = REGRESSION
    feature_kinds: Tuple[str, ...] = ()
    target_name: str = "y"

    def __post_init__(self):
        features = _frozen(self.features)
        target = _frozen(self.target)
        if features.ndim != 2:
            raise DataFormatError(f"features must be a 2-d matrix, got {features.ndim} dimension(s)")
        n, q = features.shape
        names = tuple(str(name) for name in self.feature_names)
        kinds = tuple(self.feature_kinds) or ("continuous",) * q

        if n < 2:
            raise DataFormatError(f"an evaluation sample needs at least 2 rows, got {n}")
        if q < 1:
            raise DataFormatError("an evaluation sample needs at least one feature")
        if target.shape != (n,):
            raise DataFormatError(f"target has shape {target.shape}, expected ({n},)")
        if len(names) != q:
            raise DataFormatError(f"{len(names)} feature names for {q} feature columns")
        if len(set(names)) != q:
            raise DataFormatError(f"duplicate feature names: {names}")
        if len(kinds) != q or any(kind not in FEATURE_KINDS for kind in kinds):
            raise DataFormatError(f"feature kinds must be {q} tags among {FEATURE_KINDS}, got {kinds}")
        if self.task not in TASKS:
            raise DataFormatError(f"unknown task '{self.task}' (expected one of {TASKS})")
        if not np.all(np.isfinite(features)):
            row, col = np.argwhere(~np.isfinite(features))[0]
            raise DataFormatError(
                f"missing or non-finite value at row {row + 1}, column '{names[col]}'",
                row=int(row) + 1,
                column=names[col],
            )
        if not np.all(np.isfinite(target)):
            raise DataFormatError(f"missing or non-finite value in target '{self.target_name}'")
        if self.task == CLASSIFICATION and not np.all((target == 0.0) | (target == 1.0)):
            raise DataFormatError(f"classification target '{self.target_name}' must contain only 0 and 1")

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def q(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task == CLASSIFICATION

    @property
    def positives(self) -> int:
        return int(np.count_nonzero(self.target == 1.0))

    def has_both_classes(self) -> bool:
        return self.is_classification and 0 < self.positives < self.n

    def require_both_classes(self, context: str) -> None:
        """Raise when ``context`` needs positives and negatives but one class is missing"""
        if not self.is_classification:
            raise DegenerateMetricError(f"{context} requires a binary classification sample")
        if not self.has_both_classes():
            present = "positives" if self.positives else "negatives"
            raise DegenerateMetricError(f"{context} requires both classes; the sample holds only {present}")

    def subset(self, indices: Iterable[int]) -> "EvalSample":
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=int)
        return EvalSample(
            features=self.features[idx],
            target=self.target[idx],
            feature_names=self.feature_names,
            task=self.task,
            feature_kinds=self.feature_kinds,
            target_name=self.target_name,
        )

    def with_features(self, features: np.ndarray) -> "EvalSample":
        """Same target and metadata over a replacement feature matrix"""
        return EvalSample(
            features=features,
            target=self.target,
            feature_names=self.feature_names,
            task=self.task,
            feature_kinds=self.feature_kinds,
            target_name=self.target_name,
        )

    def permute_features(self, order: Sequence[int]) -> "EvalSample":
        order = list(order)
        if sorted(order) != list(range(self.q)):
            raise RangeError(f"{order} is not a permutation of {self.q} features")
        return EvalSample(
            features=self.features[:, order],
            target=self.target,
            feature_names=tuple(self.feature_names[j] for j in order),
            task=self.task,
            feature_kinds=tuple(self.feature_kinds[j] for j in order),
            target_name=self.target_name,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise RangeError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise RangeError(f"seed must be unsigned, got {self.seed}")


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _encode_labels(values: pd.Series, column: str, binary: bool) -> np.ndarray:
    labels = sorted(values.unique())
    if binary:
        numeric = pd.to_numeric(values, errors="coerce")
        if numeric.notna().all() and set(numeric.unique()) <= {0.0, 1.0}:
            return numeric.to_numpy(dtype=float)
        if len(labels) > 2:
            raise DataFormatError(
                f"column '{column}' is tagged binary but holds {len(labels)} distinct values", column=column
            )
    codes = {label: code for code, label in enumerate(labels)}
    return values.map(codes).to_numpy(dtype=float)


def _parse_numeric(values: pd.Series, column: str) -> np.ndarray:
    numeric = pd.to_numeric(values, errors="coerce")
    bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        cell = values.iloc[position]
        what = "empty cell" if cell == "" else f"cannot parse '{cell}' as a number"
        raise DataFormatError(
            f"row {position + 1}, column '{column}': {what}", row=position + 1, column=column
        )
    return numeric.to_numpy(dtype=float)


def load_csv(
    path: Union[str, Path],
    target_column: str,
    kinds: Optional[Mapping[str, str]] = None,
    task: Optional[str] = None,
) -> EvalSample:
    """Load a comma-separated file with a header row into an EvalSample.

    ``kinds`` tags columns as continuous (default), binary or categorical;
    non-numeric labels of binary/categorical columns are coded by sorted label.
    Row numbers in errors count data rows from 1, header excluded.
    When ``task`` is omitted it is inferred: a target holding only 0 and 1 is a
    classification target.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise FileNotFoundError(f"Data file not found: {file_path}")
    try:
        frame = pd.read_csv(file_path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{file_path} is empty: a header row is required")
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{file_path} is not a well-formed CSV file: {e}")

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    if frame.empty:
        raise DataFormatError(f"{file_path} holds a header but no data rows")
    if target_column not in columns:
        raise MissingColumnError(target_column, columns)
    kinds = dict(kinds or {})
    for column in kinds:
        if column not in columns:
            raise MissingColumnError(column, columns)
        if kinds[column] not in FEATURE_KINDS:
            raise DataFormatError(f"unknown kind '{kinds[column]}' for column '{column}'", column=column)

    encoded: Dict[str, np.ndarray] = {}
    for column in columns:
        values = frame[column].str.strip()
        kind = kinds.get(column, "continuous")
        if kind == "continuous":
            encoded[column] = _parse_numeric(values, column)
        else:
            if (values == "").any():
                position = int(np.flatnonzero((values == "").to_numpy())[0])
                raise DataFormatError(
                    f"row {position + 1}, column '{column}': empty cell", row=position + 1, column=column
                )
            encoded[column] = _encode_labels(values, column, binary=(kind == "binary"))

    target = encoded[target_column]
    if task is None:
        task = CLASSIFICATION if set(np.unique(target)) <= {0.0, 1.0} else REGRESSION
    feature_columns = [c for c in columns if c != target_column]
    if not feature_columns:
        raise DataFormatError(f"{file_path} has no feature columns besides target '{target_column}'")

    sample = EvalSample(
        features=np.column_stack([encoded[c] for c in feature_columns]),
        target=target,
        feature_names=tuple(feature_columns),
        task=task,
        feature_kinds=tuple(kinds.get(c, "continuous") for c in feature_columns),
        target_name=target_column,
    )
    logger.info(f"Loaded {file_path.name}: n={sample.n}, q={sample.q}, task={sample.task}")
    return sample


def write_csv(sample: EvalSample, path: Union[str, Path]) -> Path:
    """Write features then target with 17 significant digits"""
    file_path = Path(path)
    frame = pd.DataFrame(sample.features, columns=list(sample.feature_names))
    frame[sample.target_name] = sample.target
    frame.to_csv(file_path, index=False, float_format="%.17g", encoding="utf-8")
    return file_path


def stratified_split(sample: EvalSample, spec: SplitSpec) -> Tuple[EvalSample, EvalSample]:
    """Split into (train, test); stratified mode keeps class counts proportional per class."""
    rng = np.random.default_rng(spec.seed)
    train_parts = []
    if spec.stratified:
        if not sample.is_classification:
            raise DomainError("stratified splitting requires a binary classification sample")
        for label in (0.0, 1.0):
            members = np.flatnonzero(sample.target == label)
            if members.size < 2:
                raise StratificationError(
                    f"class {int(label)} has {members.size} member(s); at least 2 are needed to stratify"
                )
            n_train = min(max(_round_half_up(spec.train_fraction * members.size), 1), members.size - 1)
            train_parts.append(rng.permutation(members)[:n_train])
    else:
        if sample.n < 4:
            raise RangeError(f"cannot split {sample.n} rows into two samples of at least 2 rows")
        n_train = min(max(_round_half_up(spec.train_fraction * sample.n), 2), sample.n - 2)
        train_parts.append(rng.permutation(sample.n)[:n_train])

    in_train = np.zeros(sample.n, dtype=bool)
    in_train[np.concatenate(train_parts)] = True
    train_idx = np.flatnonzero(in_train)
    test_idx = np.flatnonzero(~in_train)
    if train_idx.size < 2 or test_idx.size < 2:
        raise StratificationError(
            f"split leaves {train_idx.size} train and {test_idx.size} test rows; both need at least 2"
        )
    return sample.subset(train_idx), sample.subset(test_idx)


def head_tail_split(sample: EvalSample, n_train: int) -> Tuple[EvalSample, EvalSample]:
    """First ``n_train`` rows train, remaining rows test"""
    if not 2 <= n_train <= sample.n - 2:
        raise RangeError(f"n_train must lie in [2, {sample.n - 2}], got {n_train}")
    return sample.subset(np.arange(n_train)), sample.subset(np.arange(n_train, sample.n))


def undersample(sample: EvalSample, target_rate: float, seed: int) -> EvalSample:
    """Drop instances of the over-represented class, without replacement, to hit ``target_rate`` positives."""
    if not sample.is_classification:
        raise DomainError("undersampling requires a binary classification sample")
    if not 0.0 < target_rate < 1.0:
        raise RangeError(f"target_rate must lie in (0, 1), got {target_rate}")
    sample.require_both_classes("undersampling")

    rng = np.random.default_rng(seed)
    positives = np.flatnonzero(sample.target == 1.0)
    negatives = np.flatnonzero(sample.target == 0.0)
    keep_negatives = _round_half_up(positives.size * (1.0 - target_rate) / target_rate)
    if keep_negatives <= negatives.size:
        negatives = rng.choice(negatives, size=max(keep_negatives, 1), replace=False)
    else:
        keep_positives = _round_half_up(negatives.size * target_rate / (1.0 - target_rate))
        positives = rng.choice(positives, size=max(keep_positives, 1), replace=False)
    kept = np.sort(np.concatenate([positives, negatives]))
    logger.info(f"Undersampled {sample.n} -> {kept.size} rows at positive rate {target_rate:.3f}")
    return sample.subset(kept)
