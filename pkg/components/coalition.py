"""
Coalitions of features, Shapley and kernel weights, and the cached coalition value table.

For a coalition S the per-instance value is

    v_i(S) = (1/n) * sum_u G(y_i; hybrid(x_i, x_u, S); delta)

where the hybrid row keeps instance i's coordinates inside S and takes
instance u's coordinates elsewhere. The global value v(S) is the mean of
v_i(S) over i. The nuisance delta always comes from the unmodified sample.

Pairwise metrics (AUC) rank each hybrid row against the opposite-class hybrid
rows of the same coalition, with class counts still frozen. Such a coalition
holds all n x n hybrid predictions at once; chunking only bounds the batches
sent to the model.
"""
import logging
import math
import threading
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from components.base_component import ModelAdapter, Predictions
from components.errors import AdapterIOError, ContractError, DomainError, RangeError
from components.metrics import MetricSpec, Nuisance, coalition_nuisance, contributions, fit_nuisance, mean_contribution
from config.environment import get_config
from utils.data_loader import EvalSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Coalition:
    """Bit-mask over q features; bit j set means feature j is a member"""

    mask: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise DomainError(f"a coalition needs q >= 1, got {self.q}")
        if not 0 <= self.mask < (1 << self.q):
            raise RangeError(f"mask {self.mask} is outside [0, 2^{self.q})")

    @classmethod
    def empty(cls, q: int) -> "Coalition":
        return cls(0, q)

    @classmethod
    def full(cls, q: int) -> "Coalition":
        return cls((1 << q) - 1, q)

    @classmethod
    def from_members(cls, members: Iterable[int], q: int) -> "Coalition":
        mask = 0
        for j in members:
            if not 0 <= j < q:
                raise RangeError(f"feature index {j} is outside [0, {q})")
            mask |= 1 << j
        return cls(mask, q)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def members(self) -> Tuple[int, ...]:
        return tuple(j for j in range(self.q) if self.mask >> j & 1)

    def contains(self, feature: int) -> bool:
        return bool(self.mask >> feature & 1)

    def with_feature(self, feature: int) -> "Coalition":
        return Coalition(self.mask | (1 << feature), self.q)

    def indicator(self) -> np.ndarray:
        return membership(self.mask, self.q)

    def label(self, names: Optional[Sequence[str]] = None) -> str:
        names = names or [f"x{j + 1}" for j in range(self.q)]
        return "{" + ", ".join(names[j] for j in self.members) + "}"


def membership(mask: int, q: int) -> np.ndarray:
    """Boolean indicator of the features in ``mask``"""
    return np.array([bool(mask >> j & 1) for j in range(q)])


def shapley_weight(q: int, coalition_size: int) -> float:
    """|S|! (q - |S| - 1)! / q!"""
    if q < 1 or not 0 <= coalition_size <= q - 1:
        raise DomainError(f"coalition size must lie in [0, {q - 1}] for q={q}, got {coalition_size}")
    return math.factorial(coalition_size) * math.factorial(q - coalition_size - 1) / math.factorial(q)


def kernel_weight(q: int, coalition_size: int) -> float:
    """(q - 1) / (C(q, |S|) |S| (q - |S|)); infinite for the empty and the full coalition"""
    if coalition_size in (0, q):
        raise DomainError(f"kernel weight is infinite for coalition size {coalition_size} with q={q}")
    if q < 2 or not 1 <= coalition_size <= q - 1:
        raise DomainError(f"coalition size must lie in [1, {q - 1}] for q={q}, got {coalition_size}")
    return (q - 1) / (math.comb(q, coalition_size) * coalition_size * (q - coalition_size))


def hybrid_row(v_row, u_row, mask: Coalition) -> np.ndarray:
    """Coordinates of ``v_row`` inside the coalition, of ``u_row`` outside it"""
    v = np.asarray(v_row, dtype=float)
    u = np.asarray(u_row, dtype=float)
    if v.shape != (mask.q,) or u.shape != (mask.q,):
        raise ContractError(f"hybrid rows need two vectors of width {mask.q}, got {v.shape} and {u.shape}")
    return np.where(mask.indicator(), v, u)


class CoalitionValueTable:
    """Memoized coalition values for one (sample, model, metric) triple.

    Global values are kept for every evaluated mask. Per-instance values are
    kept only when ``individual`` is set. Each mask is filled at most once,
    also under concurrent access.
    """

    def __init__(
        self,
        sample: EvalSample,
        model: ModelAdapter,
        metric: MetricSpec,
        nuisance: Optional[Nuisance] = None,
        individual: bool = False,
        chunk_rows: Optional[int] = None,
        threads: Optional[int] = None,
    ):
        if model.q != sample.q:
            raise ContractError(f"model expects {model.q} features, sample has {sample.q}")
        settings = get_config()
        self.sample = sample
        self.model = model
        self.metric = metric
        self.individual = individual
        self.chunk_rows = chunk_rows or settings.chunk_rows
        self.threads = threads or settings.threads
        self.predictions = model.predict(sample.features)
        self.nuisance = nuisance or fit_nuisance(metric, sample, model, self.predictions)
        self.instance_contributions = contributions(metric, sample.target, self.predictions, self.nuisance)
        self.instance_contributions.setflags(write=False)
        self.pm = mean_contribution(self.instance_contributions)
        self.model_fingerprint = model.fingerprint()

        self._global: Dict[int, float] = {}
        self._per_instance: Dict[int, np.ndarray] = {}
        self._mask_locks: Dict[int, threading.Lock] = {}
        self._lock = threading.Lock()
        self.prediction_rows = sample.n
        self.fill_order: List[int] = []
        self.started = time.perf_counter()

    @property
    def q(self) -> int:
        return self.sample.q

    @property
    def full_mask(self) -> int:
        return (1 << self.q) - 1

    @property
    def evaluated(self) -> int:
        return len(self._global)

    def _mask_lock(self, mask: int) -> threading.Lock:
        with self._lock:
            return self._mask_locks.setdefault(mask, threading.Lock())

    def _compute(self, mask: int) -> np.ndarray:
        sample, n = self.sample, self.sample.n
        if mask == self.full_mask:
            return np.array(self.instance_contributions)
        member = membership(mask, self.q)
        features, target = sample.features, sample.target
        pairwise = self.metric.pairwise
        per_instance = np.empty(n)
        batches: List[Predictions] = []
        block = max(1, self.chunk_rows // n)
        rows_used = 0
        for start in range(0, n, block):
            stop = min(n, start + block)
            hybrid = np.where(member, features[start:stop, None, :], features[None, :, :]).reshape(-1, self.q)
            try:
                predictions = self.model.predict(hybrid)
            except AdapterIOError as e:
                raise AdapterIOError(
                    f"prediction failed for coalition {Coalition(mask, self.q).label(sample.feature_names)}: {e}",
                    diagnostics=e.diagnostics,
                ) from e
            rows_used += hybrid.shape[0]
            if pairwise:
                batches.append(predictions)
                continue
            values = contributions(self.metric, np.repeat(target[start:stop], n), predictions, self.nuisance)
            per_instance[start:stop] = values.reshape(stop - start, n).mean(axis=1)
        if pairwise:
            predictions = Predictions.concat(batches)
            targets = np.repeat(target, n)
            nuisance = coalition_nuisance(self.metric, self.nuisance, targets, predictions)
            per_instance = contributions(self.metric, targets, predictions, nuisance).reshape(n, n).mean(axis=1)
        with self._lock:
            self.prediction_rows += rows_used
        return per_instance

    def _fill(self, mask: int) -> float:
        if mask in self._global:
            return self._global[mask]
        with self._mask_lock(mask):
            if mask in self._global:
                return self._global[mask]
            per_instance = self._compute(mask)
            value = self.pm if mask == self.full_mask else mean_contribution(per_instance)
            with self._lock:
                if self.individual:
                    per_instance.setflags(write=False)
                    self._per_instance[mask] = per_instance
                self._global[mask] = value
                self.fill_order.append(mask)
            logger.debug(f"v({Coalition(mask, self.q).label(self.sample.feature_names)}) = {value:.12g}")
            return value

    def fill(self, masks: Iterable[int]) -> None:
        """Evaluate every mask not yet in the table, in parallel when threads > 1"""
        pending = sorted({int(m) for m in masks} - set(self._global))
        for mask in pending:
            Coalition(mask, self.q)
        if not pending:
            return
        if self.threads > 1 and len(pending) > 1:
            Parallel(n_jobs=self.threads, prefer="threads")(delayed(self._fill)(mask) for mask in pending)
        else:
            for mask in pending:
                self._fill(mask)

    def value(self, coalition: Coalition) -> float:
        """Global value v(S)"""
        self._check(coalition)
        return self._fill(coalition.mask)

    def instance_values(self, coalition: Coalition) -> np.ndarray:
        """Per-instance values v_i(S) for every i"""
        self._check(coalition)
        if not self.individual:
            raise ContractError("per-instance values were not requested for this table")
        self._fill(coalition.mask)
        return self._per_instance[coalition.mask]

    def per_instance_matrix(self) -> np.ndarray:
        """n x 2^q matrix with NaN where a mask has not been evaluated"""
        matrix = np.full((self.sample.n, 1 << self.q), np.nan)
        for mask, values in self._per_instance.items():
            matrix[:, mask] = values
        return matrix

    def global_vector(self) -> np.ndarray:
        vector = np.full(1 << self.q, np.nan)
        for mask, value in self._global.items():
            vector[mask] = value
        return vector

    def matches(self, sample: EvalSample, model: ModelAdapter, metric: MetricSpec) -> bool:
        return sample is self.sample and metric == self.metric and model.fingerprint() == self.model_fingerprint

    def _check(self, coalition: Coalition) -> None:
        if coalition.q != self.q:
            raise ContractError(f"coalition over {coalition.q} features used with a {self.q}-feature table")

    def diagnostics(self) -> Dict[str, float]:
        return {
            "coalitions": self.evaluated,
            "predictions": self.prediction_rows,
            "wall_time_s": time.perf_counter() - self.started,
        }


def coalition_value(
    table: CoalitionValueTable,
    coalition: Coalition,
    sample: Optional[EvalSample] = None,
    model: Optional[ModelAdapter] = None,
    metric: Optional[MetricSpec] = None,
    nuisance: Optional[Nuisance] = None,
) -> float:
    """Memoized v(S); the optional arguments are checked against the table they must match"""
    if sample is not None and model is not None and metric is not None:
        if not table.matches(sample, model, metric):
            raise ContractError("coalition table was built for another sample, model or metric")
    if nuisance is not None and nuisance is not table.nuisance:
        raise ContractError("coalition values must use the nuisance frozen in the table")
    return table.value(coalition)
