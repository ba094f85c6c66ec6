"""Labelled feature matrix with per-column source tags."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

CASE = 1
CONTROL = -1


class SourceTag(str, Enum):
    SPECTRAL = "SPECTRAL"
    PANEL = "PANEL"
    SCORE = "SCORE"


@dataclass(frozen=True)
class Dataset:
    """``X`` is n x p, ``y`` holds +1 (case) / -1 (control)."""

    X: np.ndarray
    y: np.ndarray
    column_tags: tuple
    column_names: tuple
    sample_ids: tuple

    def __init__(self, X, y, column_tags=None, column_names=None, sample_ids=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(len(y), 0)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        n, p = X.shape
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if y.size != n:
            raise ValueError(f"{n} rows but {y.size} labels")
        if np.isnan(X).any():
            raise ValueError("missing values are not supported")
        tags = tuple(SourceTag(t) for t in (column_tags if column_tags is not None else [SourceTag.PANEL] * p))
        names = tuple(column_names) if column_names is not None else tuple(f"x{j}" for j in range(p))
        ids = tuple(str(s) for s in sample_ids) if sample_ids is not None else tuple(str(i) for i in range(n))
        if len(tags) != p or len(names) != p:
            raise ValueError("column tags/names must match the number of columns")
        if len(ids) != n:
            raise ValueError("sample ids must match the number of rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_tags", tags)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def rows(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.X[index],
            self.y[index],
            self.column_tags,
            self.column_names,
            [self.sample_ids[i] for i in index],
        )

    def columns(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.X[:, index],
            self.y,
            [self.column_tags[j] for j in index],
            [self.column_names[j] for j in index],
            self.sample_ids,
        )

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.X, y, self.column_tags, self.column_names, self.sample_ids)

    def add_column(self, values: np.ndarray, name: str, tag: SourceTag = SourceTag.SCORE) -> "Dataset":
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        return Dataset(
            np.hstack([self.X, values]),
            self.y,
            self.column_tags + (tag,),
            self.column_names + (name,),
            self.sample_ids,
        )


def empty_like_rows(d: Dataset) -> Dataset:
    return Dataset(np.zeros((d.n_samples, 0)), d.y, [], [], d.sample_ids)
