"""Experiment configs: which inputs, which pipelines, which split plan.

An experiment config is a JSON document::

    {
      "schema_version": 1,
      "inputs": {"spectra": "spectra.csv", "panel": "panel.csv", "labels": "labels.csv"},
      "preprocess": {"smooth_sigma": 1.5},      # null: spectra are already preprocessed
      "peaks": {"neighborhood": 2},
      "split": {"train_fraction": 0.7, "n_repeats": 40, "seed": 0, "stratified": true},
      "pipelines": [{"id": "panel_rf", "source": "B", "model": {"kind": "rf"}}, ...]
    }

``inputs.features`` (a ``sample_id,...`` table) may replace ``inputs.spectra``
when a fixed spectral feature matrix is wanted.  Relative paths resolve
against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from biofuse.dataset import SourceTag
from biofuse.errors import ConfigInvalid, SampleMismatch
from biofuse.evaluation import EvalReport, SplitPlan, make_splits, run_experiment
from biofuse.io import SCHEMA_VERSION, labels_for, read_json, read_labels_csv, read_spectra_csv, read_table_csv
from biofuse.pipeline import Pipeline, PipelineSpec, SourceBundle
from biofuse.spectra import PipelineConfig, preprocess_batch

logger = logging.getLogger(__name__)

_SPLIT_KEYS = {"train_fraction", "n_repeats", "seed", "stratified"}
_TOP_KEYS = {"schema_version", "inputs", "preprocess", "peaks", "split", "pipelines", "outputs"}


def config_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    inputs: dict
    pipelines: tuple[PipelineSpec, ...]
    preprocess: PipelineConfig | None = None
    neighborhood: int = 5
    split: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self):
        ids = [p.pipeline_id for p in self.pipelines]
        if not ids:
            raise ConfigInvalid("experiment lists no pipelines")
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ConfigInvalid(f"duplicate pipeline ids: {dup}")
        if ("spectra" in self.inputs) == ("features" in self.inputs):
            raise ConfigInvalid("inputs need exactly one of 'spectra' or 'features'")
        for key in ("panel", "labels"):
            if key not in self.inputs:
                raise ConfigInvalid(f"inputs.{key} is required")
        extra = set(self.split) - _SPLIT_KEYS
        if extra:
            raise ConfigInvalid(f"unknown split keys: {sorted(extra)}")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigInvalid("experiment config must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigInvalid(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        extra = set(data) - _TOP_KEYS
        if extra:
            raise ConfigInvalid(f"unknown experiment keys: {sorted(extra)}")
        pipelines = data.get("pipelines") or []
        if not isinstance(pipelines, list):
            raise ConfigInvalid("pipelines must be a list")
        pre = data.get("preprocess")
        peaks = data.get("peaks") or {}
        if set(peaks) - {"neighborhood"}:
            raise ConfigInvalid(f"unknown peaks keys: {sorted(set(peaks) - {'neighborhood'})}")
        return cls(
            inputs=dict(data.get("inputs") or {}),
            pipelines=tuple(PipelineSpec.from_dict(p) for p in pipelines),
            preprocess=None if pre is None else PipelineConfig.from_dict(pre),
            neighborhood=int(peaks.get("neighborhood", 5)),
            split=dict(data.get("split") or {}),
            outputs=dict(data.get("outputs") or {}),
            base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(read_json(path), path.parent)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "inputs": self.inputs,
            "preprocess": None if self.preprocess is None else self.preprocess.to_dict(),
            "peaks": {"neighborhood": self.neighborhood},
            "split": self.split,
            "pipelines": [p.to_dict() for p in self.pipelines],
            "outputs": self.outputs,
        }

    def path(self, key: str) -> Path:
        p = Path(self.inputs[key])
        return p if p.is_absolute() else self.base_dir / p


@dataclass
class ExperimentResult:
    plan: SplitPlan
    reports: list[EvalReport]
    excluded: list[str]
    sample_ids: tuple[str, ...]

    def to_dict(self, config: ExperimentConfig | None = None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "plan": {"n": self.plan.n, **self.plan.params(), "fingerprint": self.plan.fingerprint,
                     "n_train": self.plan.n_train, "n_test": self.plan.n_test},
            "excluded": self.excluded,
            "reports": [r.to_dict() for r in self.reports],
        }
        if config is not None:
            out["config_hash"] = config_hash(config.to_dict())
        return out


def load_bundle(cfg: ExperimentConfig) -> tuple[SourceBundle, list[str]]:
    """Read inputs, run preprocessing if configured, match samples."""
    labels = read_labels_csv(cfg.path("labels"))
    panel = read_table_csv(cfg.path("panel"), SourceTag.PANEL)
    excluded: list[str] = []
    if "spectra" in cfg.inputs:
        spectra = read_spectra_csv(cfg.path("spectra"))
        if cfg.preprocess is not None:
            result = preprocess_batch(spectra, cfg.preprocess)
            spectra, excluded = result.spectra, result.excluded
        ids = [s.sample_id for s in spectra]
        spectral = None
    else:
        spectral = read_table_csv(cfg.path("features"), SourceTag.SPECTRAL)
        spectra = None
        ids = list(spectral.sample_ids)
    panel_pos = {sid: i for i, sid in enumerate(panel.sample_ids)}
    missing = [i for i in ids if i not in panel_pos]
    if missing:
        raise SampleMismatch(f"{len(missing)} spectral samples have no panel row, e.g. {missing[0]!r}")
    dropped = [i for i in panel.sample_ids if i not in set(ids) and i not in set(excluded)]
    if dropped:
        logger.warning("%d panel samples have no spectrum and are ignored", len(dropped))
    y = labels_for(ids, labels)
    panel = panel.rows(np.array([panel_pos[i] for i in ids], dtype=np.int64))
    bundle = SourceBundle(y, panel, spectral=spectral, spectra=spectra, neighborhood=cfg.neighborhood)
    return bundle, excluded


def plan_for(labels, split: dict) -> SplitPlan:
    params = {"train_fraction": 0.7, "n_repeats": 40, "seed": 0, "stratified": True, **split}
    return make_splits(labels, **params)


def run_pipelines(specs, bundle: SourceBundle, plan: SplitPlan, n_jobs: int | None = None) -> list[EvalReport]:
    reports = []
    for spec in specs:
        logger.info("evaluating %s", spec.pipeline_id)
        reports.append(run_experiment(Pipeline(spec), bundle, plan, n_jobs=n_jobs))
    return reports


def run_config(cfg: ExperimentConfig, n_jobs: int | None = None) -> ExperimentResult:
    bundle, excluded = load_bundle(cfg)
    plan = plan_for(bundle.labels, cfg.split)
    reports = run_pipelines(cfg.pipelines, bundle, plan, n_jobs)
    return ExperimentResult(plan, reports, excluded, bundle.panel.sample_ids)
