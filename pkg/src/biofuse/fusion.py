"""Combining the spectral and panel sources.

Three strategies share one calling convention: train on a pair of
sample-matched training datasets, then score a pair of test datasets.

* data merge: concatenate columns, fit one model;
* model inclusion: a base model's soft score on one source becomes an
  extra SCORE column of the other source, which the target model sees;
* model composition: one base model per source, a second-level model
  fitted on the n x 2 matrix of their soft scores.

Level-1 scores for the training rows are either in-sample or taken from
k-fold out-of-fold fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from biofuse.dataset import Dataset, SourceTag
from biofuse.errors import ConfigInvalid, KTooLarge, SampleMismatch
from biofuse.models import TrainedModel, model_from_dict, train_model, validate_spec
from biofuse.models.base import check_two_classes

SOURCES = ("A", "B")


class Strategy(str, Enum):
    DATA_MERGE = "merge"
    MODEL_INCLUSION = "inclusion"
    MODEL_COMPOSITION = "composition"


class ScoreMode(str, Enum):
    IN_SAMPLE = "in_sample"
    OUT_OF_FOLD = "out_of_fold"


@dataclass(frozen=True)
class FusionSpec:
    """JSON form, e.g. ``{"strategy": "composition", "base": {"A": {"kind": "svm"},
    "B": {"kind": "rf"}}, "second_level": {"kind": "nb"}}``.

    For inclusion, ``base`` names exactly one source; its score is appended
    to the other source and ``target`` is fitted there.  For merge only
    ``model`` is used.
    """

    strategy: Strategy
    base: dict = field(default_factory=dict)
    second_level: dict | None = None
    target: dict | None = None
    model: dict | None = None
    score_mode: ScoreMode = ScoreMode.IN_SAMPLE
    folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "score_mode", ScoreMode(self.score_mode))
        if self.folds < 2:
            raise ConfigInvalid("out-of-fold scoring needs at least 2 folds")
        if any(k not in SOURCES for k in self.base):
            raise ConfigInvalid(f"base sources must be among {SOURCES}")
        for spec in list(self.base.values()) + [self.second_level, self.target, self.model]:
            if spec is not None:
                validate_spec(spec)
        if self.strategy is Strategy.MODEL_COMPOSITION:
            if len(self.base) != 2 or self.second_level is None:
                raise ConfigInvalid("composition needs base models for A and B plus a second_level model")
        elif self.strategy is Strategy.MODEL_INCLUSION:
            if len(self.base) != 1 or self.target is None:
                raise ConfigInvalid("inclusion needs exactly one base model and one target model")
        elif self.model is None:
            raise ConfigInvalid("data merge needs a model")

    @property
    def base_source(self) -> str:
        return next(iter(self.base))

    @property
    def target_source(self) -> str:
        return "B" if self.base_source == "A" else "A"

    @classmethod
    def from_dict(cls, data: dict) -> "FusionSpec":
        known = {"strategy", "base", "second_level", "target", "model", "score_mode", "folds"}
        extra = set(data) - known
        if extra:
            raise ConfigInvalid(f"unknown fusion keys: {sorted(extra)}")
        try:
            return cls(**data)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy.value, "score_mode": self.score_mode.value, "folds": self.folds}
        for name in ("base", "second_level", "target", "model"):
            value = getattr(self, name)
            if value:
                out[name] = value
        return out


def check_matched(a: Dataset, b: Dataset) -> None:
    if a.sample_ids != b.sample_ids:
        raise SampleMismatch("datasets do not list the same samples in the same order")
    if not np.array_equal(a.y, b.y):
        raise SampleMismatch("datasets disagree on labels")


def data_merge(a: Dataset, b: Dataset) -> Dataset:
    check_matched(a, b)
    return Dataset(
        np.hstack([a.X, b.X]),
        a.y,
        a.column_tags + b.column_tags,
        a.column_names + b.column_names,
        a.sample_ids,
    )


def welch_t(d: Dataset) -> np.ndarray:
    """Per-column Welch t statistic, case minus control."""
    check_two_classes(d)
    case = d.y > 0
    Xc, Xn = d.X[case], d.X[~case]
    nc, nn = Xc.shape[0], Xn.shape[0]
    vc = Xc.var(axis=0, ddof=1) if nc > 1 else np.zeros(d.n_features)
    vn = Xn.var(axis=0, ddof=1) if nn > 1 else np.zeros(d.n_features)
    diff = Xc.mean(axis=0) - Xn.mean(axis=0)
    se = np.sqrt(vc / nc + vn / nn)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / se
    # zero spread: a mean difference separates perfectly, equality says nothing
    return np.where(se > 0, t, np.where(diff == 0, 0.0, np.copysign(np.inf, diff)))


def t_test_rank(d: Dataset, k: int) -> np.ndarray:
    """Column indices of the ``k`` largest |t|, in original column order."""
    if k > d.n_features:
        raise KTooLarge(f"k={k} exceeds the {d.n_features} available columns")
    if k < 0:
        raise ValueError("k must be non-negative")
    score = np.abs(welch_t(d))
    order = np.argsort(-score, kind="stable")  # stable: ties keep the lower index
    return np.sort(order[:k])


def t_test_select(d: Dataset, k: int) -> Dataset:
    return d.columns(t_test_rank(d, k))


def fold_assignment(y: np.ndarray, folds: int, seed) -> np.ndarray:
    """Stratified fold ids: each class is shuffled and dealt round-robin."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = np.empty(y.size, dtype=np.int64)
    offset = 0
    for label in (1, -1):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return out


def _seed(seed, *tail):
    base = [] if seed is None else np.atleast_1d(seed).astype(np.int64).tolist()
    return base + list(tail)


def level_one_scores(spec: dict, d: Dataset, mode: ScoreMode, folds: int, seed=None) -> tuple[TrainedModel, np.ndarray]:
    """Fit ``spec`` on all of ``d``; return it with training-row scores.

    Out-of-fold scores come from refits that never saw the scored row.  A
    fold whose training part lacks a class falls back to the full model's
    scores for that fold.
    """
    full = train_model(spec, d, seed=_seed(seed, 0))
    if mode is ScoreMode.IN_SAMPLE:
        return full, full.decision(d.X)
    k = min(folds, d.n_samples)
    fold = fold_assignment(d.y, k, _seed(seed, 1))
    scores = np.empty(d.n_samples)
    for f in range(k):
        held = fold == f
        if not held.any():
            continue
        fit_rows = np.flatnonzero(~held)
        if np.unique(d.y[fit_rows]).size < 2:
            scores[held] = full.decision(d.X[held])
            continue
        m = train_model(spec, d.rows(fit_rows), seed=_seed(seed, 2, f))
        scores[held] = m.decision(d.X[held])
    return full, scores


class FusedModel:
    """A fitted fusion pipeline; score with ``decision(a, b)``."""

    def __init__(self, spec: FusionSpec, bases: dict[str, TrainedModel], top: TrainedModel,
                 train_inputs: np.ndarray | None = None):
        self.spec = spec
        self.bases = bases
        self.top = top
        self.train_inputs = train_inputs

    @property
    def threshold(self) -> float:
        return self.top.threshold

    def top_inputs(self, a: Dataset, b: Dataset) -> np.ndarray:
        check_matched(a, b)
        data = {"A": a, "B": b}
        spec = self.spec
        if spec.strategy is Strategy.DATA_MERGE:
            return data_merge(a, b).X
        if spec.strategy is Strategy.MODEL_INCLUSION:
            score = self.bases[spec.base_source].decision(data[spec.base_source].X)
            return np.hstack([data[spec.target_source].X, score[:, None]])
        return np.column_stack([self.bases[s].decision(data[s].X) for s in SOURCES])

    def decision(self, a: Dataset, b: Dataset) -> np.ndarray:
        return self.top.decision(self.top_inputs(a, b))

    def labels(self, a: Dataset, b: Dataset) -> np.ndarray:
        return self.top.labels(self.top_inputs(a, b))

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "bases": {k: m.to_dict() for k, m in self.bases.items()},
            "top": self.top.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FusedModel":
        return cls(
            FusionSpec.from_dict(data["spec"]),
            {k: model_from_dict(v) for k, v in data["bases"].items()},
            model_from_dict(data["top"]),
        )


def train_merge(spec: FusionSpec, a: Dataset, b: Dataset, seed=None) -> FusedModel:
    merged = data_merge(a, b)
    return FusedModel(spec, {}, train_model(spec.model, merged, seed=_seed(seed, 0)), merged.X)


def train_inclusion(spec: FusionSpec, a: Dataset, b: Dataset, seed=None) -> FusedModel:
    if spec.strategy is not Strategy.MODEL_INCLUSION:
        raise ConfigInvalid("spec is not a model-inclusion spec")
    check_matched(a, b)
    data = {"A": a, "B": b}
    src, dst = spec.base_source, spec.target_source
    base, scores = level_one_scores(spec.base[src], data[src], spec.score_mode, spec.folds, _seed(seed, 10))
    augmented = data[dst].add_column(scores, f"score_{src}_{spec.base[src]['kind']}", SourceTag.SCORE)
    top = train_model(spec.target, augmented, seed=_seed(seed, 20))
    return FusedModel(spec, {src: base}, top, augmented.X)


def train_composition(spec: FusionSpec, a: Dataset, b: Dataset, seed=None) -> FusedModel:
    if spec.strategy is not Strategy.MODEL_COMPOSITION:
        raise ConfigInvalid("spec is not a model-composition spec")
    check_matched(a, b)
    data = {"A": a, "B": b}
    bases, columns = {}, []
    for i, src in enumerate(SOURCES):
        bases[src], scores = level_one_scores(spec.base[src], data[src], spec.score_mode, spec.folds,
                                              _seed(seed, 10 + i))
        columns.append(scores)
    level2 = Dataset(
        np.column_stack(columns), a.y, [SourceTag.SCORE, SourceTag.SCORE],
        [f"score_{s}_{spec.base[s]['kind']}" for s in SOURCES], a.sample_ids,
    )
    top = train_model(spec.second_level, level2, seed=_seed(seed, 20))
    return FusedModel(spec, bases, top, level2.X)


def train_fusion(spec: FusionSpec, a: Dataset, b: Dataset, seed=None) -> FusedModel:
    if spec.strategy is Strategy.DATA_MERGE:
        return train_merge(spec, a, b, seed)
    if spec.strategy is Strategy.MODEL_INCLUSION:
        return train_inclusion(spec, a, b, seed)
    return train_composition(spec, a, b, seed)
