"""
Base model adapter shared by built-in and external models
Provides the uniform prediction interface every estimator talks to
"""
import copy
import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from components.errors import ContractError
from utils.data_loader import CLASSIFICATION, TASKS

PREDICTION_KINDS = ("score", "probability", "label")


@dataclass(frozen=True)
class Predictions:
    """Prediction records for a batch of rows.

    ``score`` is the raw model output (linear index, regression value or tree
    leaf mean); ``probability`` and ``label`` are present for classifiers.
    """

    score: np.ndarray
    probability: Optional[np.ndarray] = None
    label: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.score.shape[0]

    @property
    def kinds(self) -> Tuple[str, ...]:
        present = ["score"]
        if self.probability is not None:
            present.append("probability")
        if self.label is not None:
            present.append("label")
        return tuple(present)

    @property
    def value(self) -> np.ndarray:
        """The model's prediction f(x): probability for classifiers, score otherwise"""
        return self.probability if self.probability is not None else self.score

    def require(self, kind: str, context: str) -> np.ndarray:
        values = getattr(self, kind, None) if kind in PREDICTION_KINDS else None
        if values is None:
            raise ContractError(f"{context} needs '{kind}' predictions; the model provides {', '.join(self.kinds)}")
        return values

    def take(self, indices) -> "Predictions":
        return Predictions(
            score=self.score[indices],
            probability=None if self.probability is None else self.probability[indices],
            label=None if self.label is None else self.label[indices],
        )

    @staticmethod
    def concat(parts: Sequence["Predictions"]) -> "Predictions":
        if not parts:
            raise ContractError("cannot concatenate an empty list of prediction batches")

        def _join(kind: str) -> Optional[np.ndarray]:
            values = [getattr(part, kind) for part in parts]
            if any(v is None for v in values):
                return None
            return np.concatenate(values)

        return Predictions(score=np.concatenate([p.score for p in parts]), probability=_join("probability"),
                           label=_join("label"))


class ModelAdapter(ABC):
    """Base class for every model the engine evaluates"""

    kind: str = "abstract"
    #: built-in adapters are immutable after fitting and may be called from several threads
    supports_concurrent_predict: bool = True

    def __init__(self, task: str, feature_names: Sequence[str], label_threshold: float = 0.5):
        if task not in TASKS:
            raise ContractError(f"unknown task '{task}'")
        if not 0.0 < label_threshold < 1.0:
            raise ContractError(f"label threshold must lie in (0, 1), got {label_threshold}")
        self.task = task
        self.feature_names = tuple(feature_names)
        self.label_threshold = float(label_threshold)

    @property
    def q(self) -> int:
        return len(self.feature_names)

    @property
    def is_classifier(self) -> bool:
        return self.task == CLASSIFICATION

    @abstractmethod
    def _raw_predict(self, rows: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Return (score, probability or None) for a validated m x q matrix"""

    @abstractmethod
    def parameters(self) -> Dict[str, Any]:
        """JSON-ready parameter record"""

    def predict(self, rows) -> Predictions:
        """Predict a batch of rows; a single q-vector is treated as one row"""
        matrix = np.asarray(rows, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1)
        if matrix.ndim != 2 or matrix.shape[1] != self.q:
            raise ContractError(f"{self.kind} model expects rows of width {self.q}, got shape {matrix.shape}")
        score, probability = self._raw_predict(matrix)
        if not self.is_classifier:
            return Predictions(score=score)
        if probability is None:
            raise ContractError(f"{self.kind} classifier produced no probabilities")
        if np.any((probability < 0.0) | (probability > 1.0)):
            raise ContractError(f"{self.kind} classifier produced probabilities outside [0, 1]")
        label = (probability >= self.label_threshold).astype(float)
        return Predictions(score=score, probability=probability, label=label)

    def with_threshold(self, label_threshold: float) -> "ModelAdapter":
        """Copy of this model using another hard-label threshold"""
        if not 0.0 < label_threshold < 1.0:
            raise ContractError(f"label threshold must lie in (0, 1), got {label_threshold}")
        clone = copy.copy(self)
        clone.label_threshold = float(label_threshold)
        return clone

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "task": self.task,
            "feature_names": list(self.feature_names),
            "label_threshold": self.label_threshold,
            "parameters": self.parameters(),
        }

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def close(self) -> None:
        """Release resources; nothing to do for in-process models"""

    def __enter__(self) -> "ModelAdapter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind}, task={self.task}, q={self.q})"

