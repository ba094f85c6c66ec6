"""Shared pieces of every trained classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from biofuse.dataset import CASE, CONTROL, Dataset
from biofuse.errors import DimensionMismatch, SingleClass

FORMAT_VERSION = 1


def check_two_classes(d: Dataset) -> None:
    labels = set(np.unique(d.y).tolist())
    if not labels <= {CASE, CONTROL}:
        raise ValueError(f"labels must be +1/-1, got {sorted(labels)}")
    if len(labels) < 2:
        raise SingleClass("training data must contain both cases and controls")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        # constant columns map to zero instead of dividing by zero
        scale = np.where(sd > 0, sd, 1.0)
        return cls(mean, scale)

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(np.zeros(p), np.ones(p))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardizer":
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["scale"], dtype=np.float64))


class TrainedModel:
    """A fitted binary classifier with a real-valued soft score.

    Subclasses set ``kind`` and ``threshold`` and implement ``_scores``.
    A sample is labelled case only when its score is strictly above the
    threshold; ties go to control.
    """

    kind: str = ""
    threshold: float = 0.0
    n_features: int = 0
    converged: bool = True

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = X.reshape(1, -1) if single else X
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[-1]}")
        return X

    def _scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decision(self, X) -> np.ndarray:
        """Soft scores for a 2-D batch."""
        return self._scores(self._check(X))

    def labels(self, X) -> np.ndarray:
        return np.where(self.decision(X) > self.threshold, CASE, CONTROL)

    def to_dict(self) -> dict:
        raise NotImplementedError


def predict_score(m: TrainedModel, x) -> float | np.ndarray:
    """Soft score for one feature vector (returns a float) or a batch."""
    scores = m.decision(x)
    return float(scores[0]) if np.ndim(x) == 1 else scores


def predict_label(m: TrainedModel, x) -> int | np.ndarray:
    labels = m.labels(x)
    return int(labels[0]) if np.ndim(x) == 1 else labels
