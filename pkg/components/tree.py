"""
CART classification tree grown greedily on Gini impurity
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from components.base_component import ModelAdapter
from components.errors import ConfigurationError, DomainError, StratificationError
from components.metrics import rank_auc
from utils.data_loader import CLASSIFICATION, EvalSample

logger = logging.getLogger(__name__)

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """One node of a fitted tree; leaves have ``feature == -1``"""

    feature: int
    threshold: float
    left: int
    right: int
    value: float
    depth: int
    n_samples: int

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _gini(positives: np.ndarray, totals: np.ndarray) -> np.ndarray:
    rate = positives / totals
    return 2.0 * rate * (1.0 - rate)


def _best_split(features: np.ndarray, target: np.ndarray, order: Sequence[int],
                min_leaf: int) -> Optional[Tuple[int, float, float]]:
    """Best (feature, threshold, gain) over all features by a sorted sweep of cumulative counts.

    Features are scanned in ``order``; a later feature must beat the current
    gain strictly, so ``order`` decides ties.
    """
    n = target.size
    parent = float(_gini(np.array(target.sum()), np.array(float(n))))
    best: Optional[Tuple[int, float, float]] = None
    for feature in order:
        column = features[:, feature]
        sorted_idx = np.argsort(column, kind="mergesort")
        values = column[sorted_idx]
        cum_pos = np.cumsum(target[sorted_idx])

        # a cut after position i needs values[i] < values[i + 1] and min_leaf rows per side
        cuts = np.flatnonzero(values[:-1] < values[1:])
        cuts = cuts[(cuts + 1 >= min_leaf) & (n - cuts - 1 >= min_leaf)]
        if cuts.size == 0:
            continue
        n_left = (cuts + 1).astype(float)
        n_right = n - n_left
        left_pos = cum_pos[cuts]
        right_pos = cum_pos[-1] - left_pos
        child = (n_left * _gini(left_pos, n_left) + n_right * _gini(right_pos, n_right)) / n
        gains = parent - child
        pos = int(np.argmax(gains))
        if best is None or gains[pos] > best[2]:
            low, high = values[cuts[pos]], values[cuts[pos] + 1]
            threshold = low + (high - low) / 2.0
            if threshold >= high:
                threshold = low
            best = (int(feature), float(threshold), float(gains[pos]))
    return best


class TreeModel(ModelAdapter):
    """Compiled binary tree; leaves hold the training share of positives"""

    kind = "cart"

    def __init__(self, nodes: Sequence[TreeNode], feature_names: Sequence[str], label_threshold: float = 0.5,
                 settings: Optional[Dict[str, Any]] = None):
        super().__init__(CLASSIFICATION, feature_names, label_threshold)
        self.nodes = tuple(nodes)
        self.settings = dict(settings or {})
        self._feature = np.array([node.feature for node in self.nodes], dtype=int)
        self._threshold = np.array([node.threshold for node in self.nodes], dtype=float)
        self._left = np.array([node.left for node in self.nodes], dtype=int)
        self._right = np.array([node.right for node in self.nodes], dtype=int)
        self._value = np.array([node.value for node in self.nodes], dtype=float)

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    @property
    def leaves(self) -> List[int]:
        return [i for i, node in enumerate(self.nodes) if node.is_leaf]

    def used_features(self) -> List[int]:
        return sorted({node.feature for node in self.nodes if not node.is_leaf})

    def apply(self, rows) -> np.ndarray:
        """Leaf index reached by every row"""
        matrix = np.asarray(rows, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1)
        node = np.zeros(matrix.shape[0], dtype=int)
        for _ in range(self.depth):
            feature = self._feature[node]
            internal = feature >= 0
            if not internal.any():
                break
            rows_idx = np.flatnonzero(internal)
            go_left = matrix[rows_idx, feature[internal]] <= self._threshold[node[internal]]
            node[rows_idx] = np.where(go_left, self._left[node[internal]], self._right[node[internal]])
        return node

    def leaf_region(self, leaf: int) -> Dict[int, Tuple[float, float]]:
        """Per-feature (low, high] bounds of the region a leaf covers"""
        parent: Dict[int, Tuple[int, bool]] = {}
        for i, node in enumerate(self.nodes):
            if not node.is_leaf:
                parent[node.left] = (i, True)
                parent[node.right] = (i, False)
        region: Dict[int, Tuple[float, float]] = {}
        current = leaf
        while current in parent:
            index, went_left = parent[current]
            node = self.nodes[index]
            low, high = region.get(node.feature, (-np.inf, np.inf))
            if went_left:
                high = min(high, node.threshold)
            else:
                low = max(low, node.threshold)
            region[node.feature] = (low, high)
            current = index
        return region

    def _raw_predict(self, rows: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        probability = self._value[self.apply(rows)]
        return probability, probability

    def parameters(self) -> Dict[str, Any]:
        return {
            "settings": self.settings,
            "nodes": [
                {
                    "feature": node.feature,
                    "threshold": node.threshold,
                    "left": node.left,
                    "right": node.right,
                    "value": node.value,
                    "depth": node.depth,
                    "n_samples": node.n_samples,
                }
                for node in self.nodes
            ],
        }

    @classmethod
    def from_parameters(cls, parameters: Dict[str, Any], feature_names: Sequence[str],
                        label_threshold: float = 0.5) -> "TreeModel":
        nodes = [TreeNode(**record) for record in parameters["nodes"]]
        return cls(nodes, feature_names, label_threshold, parameters.get("settings"))


def fit_cart(train: EvalSample, max_depth: int, min_depth: Optional[int] = None, min_leaf: int = 1,
             seed: int = 0) -> TreeModel:
    """Grow a Gini tree.

    Above ``min_depth`` the best available split is taken even when it does
    not reduce impurity; below it a node splits only on a positive gain.
    ``seed`` fixes the feature scan order that breaks ties between equally
    good splits.
    """
    if not train.is_classification:
        raise DomainError("cart trees here are binary classifiers")
    if max_depth < 1:
        raise ConfigurationError(f"max_depth must be at least 1, got {max_depth}")
    if min_depth is not None and not 0 <= min_depth <= max_depth:
        raise ConfigurationError(f"min_depth must lie in [0, max_depth={max_depth}], got {min_depth}")
    if min_leaf < 1 or 2 * min_leaf > train.n:
        raise ConfigurationError(f"min_leaf={min_leaf} is infeasible for {train.n} training rows")

    order = np.random.default_rng(seed).permutation(train.q)
    features, target = train.features, train.target
    nodes: List[Optional[TreeNode]] = [None]
    stack = [(0, np.arange(train.n), 0)]
    while stack:
        slot, rows, depth = stack.pop()
        node_target = target[rows]
        value = float(node_target.mean())
        forced = min_depth is not None and depth < min_depth
        pure = value in (0.0, 1.0)
        split = None
        if depth < max_depth and (forced or not pure):
            split = _best_split(features[rows], node_target, order, min_leaf)
            if split is not None and not forced and split[2] <= _MIN_GAIN:
                split = None
        if split is None:
            nodes[slot] = TreeNode(-1, 0.0, -1, -1, value, depth, int(rows.size))
            continue
        feature, threshold, _ = split
        go_left = features[rows, feature] <= threshold
        left_slot, right_slot = len(nodes), len(nodes) + 1
        nodes.extend([None, None])
        nodes[slot] = TreeNode(feature, threshold, left_slot, right_slot, value, depth, int(rows.size))
        stack.append((right_slot, rows[~go_left], depth + 1))
        stack.append((left_slot, rows[go_left], depth + 1))

    settings = {"max_depth": max_depth, "min_depth": min_depth, "min_leaf": min_leaf, "seed": seed}
    model = TreeModel(nodes, train.feature_names, settings=settings)
    logger.info(f"Fitted cart on n={train.n}: depth {model.depth}, {len(model.leaves)} leaves")
    return model


def stratified_folds(target: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per row, dealing each class round-robin after a seeded shuffle"""
    rng = np.random.default_rng(seed)
    fold_id = np.empty(target.size, dtype=int)
    for label in (0.0, 1.0):
        members = np.flatnonzero(target == label)
        if members.size < folds:
            raise StratificationError(f"class {int(label)} has {members.size} member(s), fewer than {folds} folds")
        fold_id[rng.permutation(members)] = np.arange(members.size) % folds
    return fold_id


def cross_validate_depth(train: EvalSample, depths: Sequence[int], folds: int = 5, seed: int = 0,
                         min_leaf: int = 1) -> int:
    """Depth with the best mean validation AUC over stratified folds; ties go to the smaller depth"""
    if folds < 2:
        raise ConfigurationError(f"cross validation needs at least 2 folds, got {folds}")
    if not depths:
        raise ConfigurationError("no candidate depths given")
    train.require_both_classes("depth cross validation")
    fold_id = stratified_folds(train.target, folds, seed)

    best_depth, best_auc = None, -np.inf
    for depth in sorted(set(depths)):
        scores = []
        for fold in range(folds):
            held_out = fold_id == fold
            model = fit_cart(train.subset(np.flatnonzero(~held_out)), max_depth=depth, min_leaf=min_leaf, seed=seed)
            probability = model.predict(train.features[held_out]).probability
            scores.append(rank_auc(train.target[held_out], probability))
        mean_auc = float(np.mean(scores))
        logger.debug(f"depth {depth}: mean validation AUC {mean_auc:.4f}")
        if mean_auc > best_auc:
            best_depth, best_auc = depth, mean_auc
    logger.info(f"Cross-validated depth {best_depth} (mean AUC {best_auc:.4f})")
    return best_depth
