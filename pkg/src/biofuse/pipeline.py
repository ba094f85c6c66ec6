"""Pipelines over the two sources and the per-split data they train on.

Source ``A`` is the spectral source, ``B`` the panel.  A pipeline spec is
a JSON object::

    {"id": "rf_panel", "source": "B", "model": {"kind": "rf"}}
    {"id": "ttest50_merged_rf", "source": "MERGED", "ttest_k": 50, "model": {"kind": "rf"}}
    {"id": "svm_rf_nb", "fusion": {"strategy": "composition", ...}}

``ttest_k`` always filters the spectral columns, using training rows only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from biofuse.dataset import Dataset, SourceTag
from biofuse.errors import ConfigInvalid
from biofuse.fusion import FusedModel, FusionSpec, check_matched, data_merge, t_test_rank, train_fusion
from biofuse.models import TrainedModel, train_model, validate_spec
from biofuse.peaks import build_peak_model, extract_features, feature_matrix, mean_profile
from biofuse.spectra import Spectrum

SOURCE_CHOICES = ("A", "B", "MERGED")


@dataclass(frozen=True)
class PipelineSpec:
    pipeline_id: str
    source: str = "MERGED"
    model: dict | None = None
    fusion: FusionSpec | None = None
    ttest_k: int | None = None

    def __post_init__(self):
        if (self.model is None) == (self.fusion is None):
            raise ConfigInvalid(f"pipeline {self.pipeline_id!r} needs exactly one of 'model' or 'fusion'")
        if self.model is not None:
            validate_spec(self.model)
            if self.source not in SOURCE_CHOICES:
                raise ConfigInvalid(f"source must be one of {SOURCE_CHOICES}")
        if self.ttest_k is not None and self.ttest_k < 1:
            raise ConfigInvalid("ttest_k must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineSpec":
        extra = set(data) - {"id", "source", "model", "fusion", "ttest_k"}
        if extra:
            raise ConfigInvalid(f"unknown pipeline keys: {sorted(extra)}")
        if "id" not in data:
            raise ConfigInvalid("every pipeline needs an 'id'")
        fusion = FusionSpec.from_dict(data["fusion"]) if data.get("fusion") is not None else None
        return cls(data["id"], data.get("source", "MERGED"), data.get("model"), fusion, data.get("ttest_k"))

    def to_dict(self) -> dict:
        out = {"id": self.pipeline_id}
        if self.fusion is not None:
            out["fusion"] = self.fusion.to_dict()
        else:
            out["source"] = self.source
            out["model"] = self.model
        if self.ttest_k is not None:
            out["ttest_k"] = self.ttest_k
        return out


class FittedPipeline:
    def __init__(self, spec: PipelineSpec, model: TrainedModel | FusedModel, selected: np.ndarray | None):
        self.spec = spec
        self.model = model
        self.selected = selected

    @property
    def threshold(self) -> float:
        return self.model.threshold

    @property
    def converged(self) -> bool:
        if isinstance(self.model, FusedModel):
            return all(m.converged for m in [self.model.top, *self.model.bases.values()])
        return self.model.converged

    def _inputs(self, data: dict[str, Dataset]):
        a, b = data["A"], data["B"]
        if self.selected is not None:
            a = a.columns(self.selected)
        if self.spec.fusion is not None:
            return a, b
        if self.spec.source == "A":
            return (a.X,)
        if self.spec.source == "B":
            return (b.X,)
        return (data_merge(a, b).X,)

    def decision(self, data: dict[str, Dataset]) -> np.ndarray:
        return self.model.decision(*self._inputs(data))

    def labels(self, data: dict[str, Dataset]) -> np.ndarray:
        return self.model.labels(*self._inputs(data))


class Pipeline:
    """Trainable wrapper around a :class:`PipelineSpec`."""

    def __init__(self, spec: PipelineSpec):
        self.spec = spec

    @property
    def pipeline_id(self) -> str:
        return self.spec.pipeline_id

    def fit(self, data: dict[str, Dataset], seed=None) -> FittedPipeline:
        a, b = data["A"], data["B"]
        check_matched(a, b)
        selected = None
        if self.spec.ttest_k is not None:
            selected = t_test_rank(a, self.spec.ttest_k)
            a = a.columns(selected)
        if self.spec.fusion is not None:
            return FittedPipeline(self.spec, train_fusion(self.spec.fusion, a, b, seed), selected)
        if self.spec.source == "A":
            d = a
        elif self.spec.source == "B":
            d = b
        else:
            d = data_merge(a, b)
        return FittedPipeline(self.spec, train_model(self.spec.model, d, seed=seed), selected)


class SourceBundle:
    """Sample-matched sources plus labels for one study.

    The spectral source is either a fixed feature :class:`Dataset` or a
    list of preprocessed spectra; in the latter case every call to
    :meth:`materialize` learns a fresh peak model from the training rows.
    """

    def __init__(self, labels, panel: Dataset, spectral: Dataset | None = None,
                 spectra: Sequence[Spectrum] | None = None, neighborhood: int = 5):
        if (spectral is None) == (spectra is None):
            raise ValueError("give either spectral features or spectra")
        self.labels = np.asarray(labels, dtype=np.int64)
        self.panel = panel.with_labels(self.labels)
        self.spectral = None if spectral is None else spectral.with_labels(self.labels)
        self.spectra = None if spectra is None else list(spectra)
        self.neighborhood = neighborhood
        self._cache: dict[bytes, Dataset] = {}  # training rows -> full feature matrix
        if self.spectra is not None:
            self._intensity = np.stack([s.intensity for s in self.spectra])
            self._ids = tuple(s.sample_id for s in self.spectra)
            if self._ids != self.panel.sample_ids:
                raise ConfigInvalid("spectra and panel list different samples")
        elif self.spectral.sample_ids != self.panel.sample_ids:
            raise ConfigInvalid("spectral and panel datasets list different samples")

    @property
    def n_samples(self) -> int:
        return self.labels.size

    def with_labels(self, labels) -> "SourceBundle":
        return SourceBundle(labels, self.panel, self.spectral, self.spectra, self.neighborhood)

    def _spectral_pair(self, train_idx, test_idx) -> tuple[Dataset, Dataset]:
        if self.spectral is not None:
            return self.spectral.rows(train_idx), self.spectral.rows(test_idx)
        key = np.asarray(train_idx, dtype=np.int64).tobytes()
        full = self._cache.get(key)
        if full is None:
            pm = build_peak_model(mean_profile([self.spectra[i] for i in train_idx]), self.neighborhood)
            feats = feature_matrix(self._intensity, pm)
            full = Dataset(feats, self.labels, [SourceTag.SPECTRAL] * len(pm), pm.column_names, self._ids)
            self._cache[key] = full
        return full.rows(train_idx), full.rows(test_idx)

    def materialize(self, train_idx, test_idx) -> tuple[dict[str, Dataset], dict[str, Dataset]]:
        a_tr, a_te = self._spectral_pair(train_idx, test_idx)
        return ({"A": a_tr, "B": self.panel.rows(train_idx)},
                {"A": a_te, "B": self.panel.rows(test_idx)})

    def full_spectral(self) -> Dataset:
        """Spectral features with the peak model learned on every sample."""
        if self.spectral is not None:
            return self.spectral
        pm = build_peak_model(mean_profile(self.spectra), self.neighborhood)
        return extract_features(self.spectra, pm, self.labels)
