"""Peak feature extraction from a training mean profile."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from biofuse.dataset import Dataset, SourceTag
from biofuse.errors import EmptyTrainingSet, GridMismatch, NoPeaksFound
from biofuse.spectra import Spectrum, detect_spectrum_peaks


@dataclass(frozen=True)
class PeakModel:
    peak_indices: np.ndarray
    peak_mz: np.ndarray
    neighborhood: int = 5
    grid: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.peak_indices, dtype=np.int64)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("peak indices must be strictly increasing")
        if self.neighborhood < 0:
            raise ValueError("neighborhood must be >= 0")
        object.__setattr__(self, "peak_indices", idx)
        object.__setattr__(self, "peak_mz", np.asarray(self.peak_mz, dtype=np.float64))
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=np.float64)
            if idx.size and (idx[0] < 0 or idx[-1] >= grid.size):
                raise ValueError("peak index outside the training grid")
            object.__setattr__(self, "grid", grid)

    def __len__(self) -> int:
        return self.peak_indices.size

    @property
    def column_names(self) -> list[str]:
        return [f"peak_{mz:.4f}" for mz in self.peak_mz]

    def to_dict(self) -> dict:
        out = {
            "indices": self.peak_indices.tolist(),
            "mz": self.peak_mz.tolist(),
            "neighborhood": int(self.neighborhood),
        }
        if self.grid is not None:
            out["grid"] = self.grid.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PeakModel":
        return cls(
            np.asarray(data["indices"], dtype=np.int64),
            np.asarray(data["mz"], dtype=np.float64),
            int(data["neighborhood"]),
            None if data.get("grid") is None else np.asarray(data["grid"], dtype=np.float64),
        )


def _check_grid(batch: Sequence[Spectrum], grid: np.ndarray | None = None) -> np.ndarray:
    ref = batch[0].mz if grid is None else grid
    for s in batch:
        if s.mz.shape != ref.shape or not np.array_equal(s.mz, ref):
            raise GridMismatch(f"spectrum {s.sample_id!r} is not on the shared m/z grid")
    return ref


def mean_profile(training: Sequence[Spectrum]) -> Spectrum:
    if len(training) == 0:
        raise EmptyTrainingSet("mean profile needs at least one spectrum")
    grid = _check_grid(training)
    mean = np.mean(np.stack([s.intensity for s in training]), axis=0)
    return Spectrum(grid, mean, "mean")


def merge_close_peaks(indices: np.ndarray, heights: np.ndarray, min_gap: int) -> np.ndarray:
    """Greedy non-maximum suppression: among peaks closer than ``min_gap``
    index points, keep the one with the higher apex."""
    if min_gap <= 0 or indices.size < 2:
        return indices
    order = np.argsort(-heights, kind="stable")
    kept: list[int] = []  # sorted grid positions
    for k in order:
        pos = int(indices[k])
        at = bisect.bisect_left(kept, pos)
        if at > 0 and pos - kept[at - 1] < min_gap:
            continue
        if at < len(kept) and kept[at] - pos < min_gap:
            continue
        kept.insert(at, pos)
    return np.array(kept, dtype=np.int64)


def build_peak_model(mean: Spectrum, neighborhood: int = 5) -> PeakModel:
    idx = detect_spectrum_peaks(mean)
    if idx.size == 0:
        raise NoPeaksFound("mean profile has no peaks above the noise floor")
    idx = merge_close_peaks(idx, mean.intensity[idx], 2 * neighborhood)
    return PeakModel(idx, mean.mz[idx], neighborhood, mean.mz)


def feature_matrix(intensities: np.ndarray, pm: PeakModel) -> np.ndarray:
    """Windowed means for a stacked (n_samples, n_grid) intensity array."""
    n_grid = intensities.shape[1]
    w = pm.neighborhood
    window = pm.peak_indices[:, None] + np.arange(-w, w + 1)[None, :]
    valid = (window >= 0) & (window < n_grid)
    gathered = intensities[:, np.clip(window, 0, n_grid - 1)]
    return (gathered * valid).sum(axis=2) / valid.sum(axis=1)


def extract_features(
    batch: Sequence[Spectrum],
    pm: PeakModel,
    labels: Sequence[int] | np.ndarray | None = None,
) -> Dataset:
    if len(batch) == 0:
        raise EmptyTrainingSet("no spectra to extract features from")
    grid = _check_grid(batch, pm.grid)
    if pm.peak_indices.size and pm.peak_indices[-1] >= grid.size:
        raise GridMismatch("peak model does not fit this grid")
    X = feature_matrix(np.stack([s.intensity for s in batch]), pm)
    y = np.zeros(len(batch), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    return Dataset(
        X,
        y,
        [SourceTag.SPECTRAL] * X.shape[1],
        pm.column_names,
        [s.sample_id for s in batch],
    )
