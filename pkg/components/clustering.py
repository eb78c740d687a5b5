"""
Clustering for the XPER-based segmentation: k-medoids (PAM), k-means and nearest-centroid rules
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist

from components.errors import ContractError, DomainError, RangeError

logger = logging.getLogger(__name__)

CLUSTER_SPACES = ("xper", "features")


@dataclass
class ClusterModel:
    """k centers plus the nearest-center assignment rule in one clustering space.

    Points are mapped through (points - offset) / scale before any distance is
    taken; the identity transform is the default.
    """

    k: int
    centers: np.ndarray
    space: str
    labels: np.ndarray
    objective: float
    medoid_indices: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    iterations: int = 0
    objective_path: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.space not in CLUSTER_SPACES:
            raise DomainError(f"unknown clustering space '{self.space}' (expected one of {CLUSTER_SPACES})")

    def transform(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.centers.shape[1]:
            raise ContractError(f"points have {points.shape[1]} columns, centers have {self.centers.shape[1]}")
        if self.offset is not None:
            points = (points - self.offset) / self.scale
        return points

    def assign(self, points) -> np.ndarray:
        """Index of the nearest center (Euclidean) for every point; ties go to the lower index"""
        return np.argmin(cdist(self.transform(points), self.centers), axis=1)

    def sizes(self) -> List[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


def standardization(points: np.ndarray):
    """Column means and standard deviations; constant columns keep scale 1"""
    offset = points.mean(axis=0)
    scale = points.std(axis=0)
    scale[scale == 0.0] = 1.0
    return offset, scale


def _check_points(points, k: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ContractError(f"points must be a non-empty matrix, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DomainError("points must be finite")
    if not 1 <= k <= points.shape[0]:
        raise RangeError(f"k must lie in [1, {points.shape[0]}], got {k}")
    return points


def fit_kmedoids(points, k: int, seed: int = 0, max_iter: int = 100, space: str = "xper",
                 standardize: bool = False) -> ClusterModel:
    """PAM: greedy build followed by best-improvement swaps until no swap lowers the objective.

    The objective is the sum of Euclidean distances to the nearest medoid.
    A seeded permutation of the points fixes the candidate order used to
    break ties.
    """
    points = _check_points(points, k)
    offset = scale = None
    if standardize:
        offset, scale = standardization(points)
        points = (points - offset) / scale
    m = points.shape[0]
    distances = cdist(points, points)
    order = np.random.default_rng(seed).permutation(m)

    # build
    medoids = [int(order[np.argmin(distances.sum(axis=0)[order])])]
    nearest = distances[:, medoids[0]].copy()
    while len(medoids) < k:
        costs = np.minimum(nearest[:, None], distances).sum(axis=0)
        costs[medoids] = np.inf
        chosen = int(order[np.argmin(costs[order])])
        medoids.append(chosen)
        nearest = np.minimum(nearest, distances[:, chosen])

    objective = float(nearest.sum())
    path = [objective]
    iterations = 0
    while iterations < max_iter and k < m:
        iterations += 1
        current = distances[:, medoids]
        best_cost, best_slot, best_candidate = objective, -1, -1
        for slot in range(k):
            rest = np.delete(current, slot, axis=1)
            other = rest.min(axis=1) if rest.shape[1] else np.full(m, np.inf)
            costs = np.minimum(other[:, None], distances).sum(axis=0)
            costs[medoids] = np.inf
            candidate = int(order[np.argmin(costs[order])])
            if costs[candidate] < best_cost:
                best_cost, best_slot, best_candidate = float(costs[candidate]), slot, candidate
        if best_slot < 0 or best_cost >= objective - 1e-12 * max(1.0, objective):
            break
        medoids[best_slot] = best_candidate
        objective = float(distances[:, medoids].min(axis=1).sum())
        path.append(objective)
        logger.debug(f"k-medoids swap {iterations}: objective {objective:.6f}")

    medoid_indices = np.array(medoids)
    labels = np.argmin(distances[:, medoid_indices], axis=1)
    logger.info(f"k-medoids ({space}) k={k} on {m} points: objective {objective:.6f} after {iterations} swap rounds")
    return ClusterModel(
        k=k,
        centers=points[medoid_indices].copy(),
        space=space,
        labels=labels,
        objective=objective,
        medoid_indices=medoid_indices,
        offset=offset,
        scale=scale,
        iterations=iterations,
        objective_path=path,
    )


def fit_kmeans(points, k: int, seed: int = 0, max_iter: int = 100, space: str = "features",
               standardize: bool = True) -> ClusterModel:
    """k-means on (by default) standardized columns, seeded k-means++ initialization"""
    points = _check_points(points, k)
    offset = scale = None
    if standardize:
        offset, scale = standardization(points)
        points = (points - offset) / scale
    centers, _ = kmeans2(points, k, iter=max_iter, minit="++", seed=np.random.default_rng(seed))
    distances = cdist(points, centers)
    labels = np.argmin(distances, axis=1)
    objective = float(distances[np.arange(points.shape[0]), labels].sum())
    logger.info(f"k-means ({space}) k={k} on {points.shape[0]} points: objective {objective:.6f}")
    return ClusterModel(k=k, centers=centers, space=space, labels=labels, objective=objective,
                        offset=offset, scale=scale, iterations=max_iter, objective_path=[objective])


def nearest_centroid(points, labels, k: int, space: str = "features", standardize: bool = True) -> ClusterModel:
    """Assignment rule imitating given cluster labels: one centroid per label in ``points`` space"""
    points = _check_points(points, k)
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (points.shape[0],):
        raise ContractError(f"{labels.size} labels for {points.shape[0]} points")
    offset = scale = None
    if standardize:
        offset, scale = standardization(points)
        points = (points - offset) / scale
    centers = np.empty((k, points.shape[1]))
    for group in range(k):
        members = points[labels == group]
        if members.shape[0] == 0:
            raise RangeError(f"cluster {group} has no members to build a centroid from")
        centers[group] = members.mean(axis=0)
    distances = cdist(points, centers)
    assigned = np.argmin(distances, axis=1)
    return ClusterModel(k=k, centers=centers, space=space, labels=assigned,
                        objective=float(distances[np.arange(points.shape[0]), assigned].sum()),
                        offset=offset, scale=scale)
