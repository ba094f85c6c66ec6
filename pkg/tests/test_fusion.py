import json
import math

import numpy as np
import pytest

from biofuse.dataset import Dataset, SourceTag, empty_like_rows
from biofuse.errors import ConfigInvalid, KTooLarge, SampleMismatch
from biofuse.fusion import (
    FusedModel, FusionSpec, ScoreMode, data_merge, fold_assignment, level_one_scores, t_test_rank,
    t_test_select, train_fusion, welch_t,
)
from biofuse.models import train_model
from biofuse.pipeline import Pipeline, PipelineSpec, SourceBundle

MERGE = {"strategy": "merge", "model": {"kind": "rf", "n_trees": 15}}
INCLUSION = {"strategy": "inclusion", "base": {"A": {"kind": "svm"}}, "target": {"kind": "rf", "n_trees": 15}}
COMPOSITION = {"strategy": "composition", "base": {"A": {"kind": "svm"}, "B": {"kind": "rf", "n_trees": 15}},
               "second_level": {"kind": "nb"}}


def pair(n=40, pa=12, pb=5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1, -1)
    ids = [f"s{i}" for i in range(n)]
    a = Dataset(rng.normal(size=(n, pa)) + 0.6 * (y > 0)[:, None], y, [SourceTag.SPECTRAL] * pa,
                [f"a{j}" for j in range(pa)], ids)
    b = Dataset(rng.normal(size=(n, pb)) + 0.6 * (y > 0)[:, None], y, [SourceTag.PANEL] * pb,
                [f"b{j}" for j in range(pb)], ids)
    return a, b


# data merge

def test_merge_with_empty_is_identity():
    a, _ = pair()
    m = data_merge(a, empty_like_rows(a))
    assert np.array_equal(m.X, a.X) and m.column_names == a.column_names
    m = data_merge(empty_like_rows(a), a)
    assert np.array_equal(m.X, a.X) and m.column_tags == a.column_tags


def test_merge_full_size_copies_columns_exactly():
    a, b = pair(106, 1554, 30)
    m = data_merge(a, b)
    assert m.X.shape == (106, 1584)
    assert np.array_equal(m.X[:, :1554], a.X) and np.array_equal(m.X[:, 1554:], b.X)
    assert m.column_tags == (SourceTag.SPECTRAL,) * 1554 + (SourceTag.PANEL,) * 30


def test_merge_associative():
    a, b = pair()
    c = b.columns([0, 2])
    left, right = data_merge(data_merge(a, b), c), data_merge(a, data_merge(b, c))
    assert np.array_equal(left.X, right.X) and left.column_names == right.column_names


def test_merge_rejects_mismatched_samples():
    a, b = pair()
    with pytest.raises(SampleMismatch):
        data_merge(a, b.rows(np.arange(39, -1, -1)))
    with pytest.raises(SampleMismatch):
        data_merge(a, b.with_labels(-b.y))


# t-test ranking

def test_welch_hand_values():
    X = np.array([[1.0], [2.0], [3.0], [4.0], [6.0], [8.0]])
    t = welch_t(Dataset(X, [1, 1, 1, -1, -1, -1]))
    # means 2 and 6, sample variances 1 and 4
    assert abs(t[0] - (-4.0 / math.sqrt(1 / 3 + 4 / 3))) <= 1e-9


def test_welch_degenerate_columns():
    X = np.array([[1.0, 5.0], [1.0, 5.0], [2.0, 5.0], [2.0, 5.0]])
    t = welch_t(Dataset(X, [1, 1, -1, -1]))
    assert t[0] == -np.inf and t[1] == 0.0


def test_rank_orders_by_absolute_t():
    rng = np.random.default_rng(1)
    y = np.repeat([1, -1], 20)
    X = rng.normal(size=(40, 4))
    X[:, 2] += 3.0 * (y > 0)
    X[:, 0] -= 1.5 * (y > 0)
    X[:, 3] = np.tile([0.0, 1.0], 20)  # equal class means, t = 0
    d = Dataset(X, y)
    assert t_test_rank(d, 1).tolist() == [2]
    assert t_test_rank(d, 2).tolist() == [0, 2]
    assert 3 not in t_test_rank(d, 3).tolist()
    assert np.array_equal(t_test_select(d, 4).X, X)
    with pytest.raises(KTooLarge):
        t_test_rank(d, 5)


# level-one scores

def test_fold_assignment_is_stratified():
    y = np.array([1] * 13 + [-1] * 22)
    f = fold_assignment(y, 5, 3)
    for k in range(5):
        assert abs((f[y > 0] == k).sum() - 13 / 5) < 1 and abs((f[y < 0] == k).sum() - 22 / 5) < 1
    assert np.array_equal(f, fold_assignment(y, 5, 3))


def test_out_of_fold_scores_come_from_refits():
    a, _ = pair(30, 4, 2, 2)
    full, oof = level_one_scores({"kind": "nb"}, a, ScoreMode.OUT_OF_FOLD, 3, seed=[5])
    _, ins = level_one_scores({"kind": "nb"}, a, ScoreMode.IN_SAMPLE, 3, seed=[5])
    assert np.array_equal(ins, full.decision(a.X))
    fold = fold_assignment(a.y, 3, [5, 1])
    for f in range(3):
        m = train_model({"kind": "nb"}, a.rows(np.flatnonzero(fold != f)))
        assert np.allclose(oof[fold == f], m.decision(a.X[fold == f]), rtol=0, atol=1e-12)


# inclusion and composition

def test_inclusion_appends_one_score_column():
    a, b = pair()
    fm = train_fusion(FusionSpec.from_dict(INCLUSION), a, b, seed=1)
    assert fm.train_inputs.shape == (40, b.n_features + 1)
    assert np.array_equal(fm.train_inputs[:, :-1], b.X)
    assert np.array_equal(fm.train_inputs[:, -1], fm.bases["A"].decision(a.X))
    reverse = dict(INCLUSION, base={"B": {"kind": "rf", "n_trees": 5}}, target={"kind": "svm"})
    fm = train_fusion(FusionSpec.from_dict(reverse), a, b, seed=1)
    assert fm.train_inputs.shape == (40, a.n_features + 1)


@pytest.mark.parametrize("kind", ["svm", "logreg", "cart", "nb"])
def test_constant_score_column_is_inert(kind):
    _, b = pair()
    X = np.random.default_rng(3).normal(size=(50, b.n_features))
    plain = train_model({"kind": kind}, b)
    padded = train_model({"kind": kind}, b.add_column(np.full(40, 0.25), "score"))
    X_pad = np.hstack([X, np.full((50, 1), 0.25)])
    assert np.array_equal(plain.labels(X), padded.labels(X_pad))
    assert np.allclose(plain.decision(X), padded.decision(X_pad), rtol=0, atol=1e-9)


def test_composition_level_two_inputs():
    a, b = pair()
    fm = train_fusion(FusionSpec.from_dict(COMPOSITION), a, b, seed=2)
    assert fm.train_inputs.shape == (40, 2)
    assert np.array_equal(fm.train_inputs[:, 0], fm.bases["A"].decision(a.X))
    assert np.array_equal(fm.train_inputs[:, 1], fm.bases["B"].decision(b.X))
    assert fm.top.n_features == 2


def test_composition_separable_scores_give_zero_training_error():
    y = np.repeat([1, -1], 15)
    ids = [str(i) for i in range(30)]
    a = Dataset(np.where(y > 0, 2.0, -2.0)[:, None] + np.linspace(0, 0.5, 30)[:, None], y, sample_ids=ids)
    b = Dataset(np.where(y > 0, 1.0, -1.0)[:, None] * np.linspace(1, 2, 30)[:, None], y, sample_ids=ids)
    spec = FusionSpec.from_dict({"strategy": "composition", "base": {"A": {"kind": "svm"}, "B": {"kind": "svm"}},
                                 "second_level": {"kind": "nb"}})
    fm = train_fusion(spec, a, b)
    assert np.array_equal(fm.labels(a, b), y)


def test_in_sample_composition_is_reproducible():
    a, b = pair(seed=4)
    spec = FusionSpec.from_dict(COMPOSITION)
    assert spec.score_mode is ScoreMode.IN_SAMPLE
    one = train_fusion(spec, a, b, seed=[7, 0])
    two = train_fusion(spec, a, b, seed=[7, 0])
    assert np.array_equal(one.train_inputs, two.train_inputs)


@pytest.mark.parametrize("raw", [MERGE, INCLUSION, COMPOSITION], ids=["merge", "inclusion", "composition"])
def test_fused_model_roundtrip(raw):
    a, b = pair(seed=5)
    fm = train_fusion(FusionSpec.from_dict(raw), a, b, seed=3)
    back = FusedModel.from_dict(json.loads(json.dumps(fm.to_dict())))
    ta, tb = pair(seed=6)
    assert np.array_equal(back.decision(ta, tb), fm.decision(ta, tb))


@pytest.mark.parametrize("raw", [
    {"strategy": "composition", "base": {"A": {"kind": "svm"}}, "second_level": {"kind": "nb"}},
    {"strategy": "inclusion", "base": {"A": {"kind": "svm"}, "B": {"kind": "nb"}}, "target": {"kind": "rf"}},
    {"strategy": "inclusion", "base": {"A": {"kind": "svm"}}},
    {"strategy": "merge"},
    {"strategy": "merge", "model": {"kind": "nb"}, "folds": 1},
    {"strategy": "merge", "model": {"kind": "nb"}, "extra": 1},
    {"strategy": "stacking", "model": {"kind": "nb"}},
    {"strategy": "composition", "base": {"A": {"kind": "svm"}, "C": {"kind": "nb"}}, "second_level": {"kind": "nb"}},
])
def test_spec_validation(raw):
    with pytest.raises(ConfigInvalid):
        FusionSpec.from_dict(raw)


# leakage guard: scrambling test labels must not move any test prediction

@pytest.mark.parametrize("raw", [MERGE, INCLUSION, COMPOSITION,
                                 dict(COMPOSITION, score_mode="out_of_fold")],
                         ids=["merge", "inclusion", "composition", "composition_oof"])
def test_test_labels_never_reach_training(raw):
    a, b = pair(50, 10, 4, 8)
    bundle = SourceBundle(a.y, b, spectral=a)
    pipe = Pipeline(PipelineSpec.from_dict({"id": "p", "fusion": raw, "ttest_k": 6}))
    train_idx, test_idx = np.arange(0, 35), np.arange(35, 50)
    rng = np.random.default_rng(9)
    baseline = None
    for trial in range(4):
        y = a.y.copy()
        if trial:
            y[test_idx] = rng.choice([1, -1], test_idx.size)
        tr, te = bundle.with_labels(y).materialize(train_idx, test_idx)
        scores = pipe.fit(tr, seed=[0, 1]).decision(te)
        if baseline is None:
            baseline = scores
        assert np.array_equal(scores, baseline)
