"""Repeated random sub-sampling evaluation and resampled model comparison."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from biofuse.errors import LengthMismatch, PlanMismatch, SingleClass, TooFewRepeats, TooFewSamples

logger = logging.getLogger(__name__)

METRICS = ("error", "sensitivity", "specificity", "auc")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SplitPlan:
    n: int
    train_fraction: float
    n_repeats: int
    seed: int
    stratified: bool
    train: tuple
    test: tuple

    @property
    def n_train(self) -> int:
        return len(self.train[0])

    @property
    def n_test(self) -> int:
        return len(self.test[0])

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([self.n, self.train_fraction, self.n_repeats, self.seed, self.stratified]).encode())
        for tr, te in zip(self.train, self.test):
            h.update(np.asarray(tr, dtype=np.int64).tobytes())
            h.update(b"|")
            h.update(np.asarray(te, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]

    def params(self) -> dict:
        return {"train_fraction": self.train_fraction, "n_repeats": self.n_repeats,
                "seed": self.seed, "stratified": self.stratified}

    def to_dict(self) -> dict:
        return {"n": self.n, **self.params(), "fingerprint": self.fingerprint,
                "train": [list(map(int, t)) for t in self.train],
                "test": [list(map(int, t)) for t in self.test]}


def _class_train_counts(counts: list[int], n_train: int) -> list[int]:
    """Largest-remainder allocation of ``n_train`` across classes."""
    n = sum(counts)
    exact = [c * n_train / n for c in counts]
    alloc = [int(math.floor(e)) for e in exact]
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[: n_train - sum(alloc)]:
        alloc[i] += 1
    # keep at least one member of each class on both sides
    for i, c in enumerate(counts):
        alloc[i] = min(max(alloc[i], 1), c - 1)
    return alloc


def make_splits(labels, train_fraction: float = 0.7, n_repeats: int = 40, seed: int = 0,
                stratified: bool = True) -> SplitPlan:
    """Random train/test partitions; ``labels`` may be an int ``n`` when
    splitting unstratified."""
    if isinstance(labels, (int, np.integer)):
        if stratified:
            raise ValueError("stratified splits need the label vector")
        n, y = int(labels), None
    else:
        y = np.asarray(labels)
        n = y.size
    if n < 4:
        raise TooFewSamples(f"need at least 4 samples, got {n}")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    n_train = _round_half_up(train_fraction * n)
    n_train = min(max(n_train, 1), n - 1)
    if stratified:
        classes = np.unique(y)
        members = [np.flatnonzero(y == c) for c in classes]
        if len(classes) < 2 or min(m.size for m in members) < 2:
            raise TooFewSamples("stratified splitting needs at least two samples of each class")
        per_class = _class_train_counts([m.size for m in members], n_train)
    trains, tests = [], []
    for stream in np.random.SeedSequence(seed).spawn(n_repeats):
        rng = np.random.default_rng(stream)
        if stratified:
            tr = np.concatenate([rng.permutation(m)[:k] for m, k in zip(members, per_class)])
        else:
            tr = rng.permutation(n)[:n_train]
        tr = np.sort(tr)
        te = np.setdiff1d(np.arange(n), tr)
        trains.append(tuple(int(i) for i in tr))
        tests.append(tuple(int(i) for i in te))
    return SplitPlan(n, float(train_fraction), int(n_repeats), int(seed), bool(stratified),
                     tuple(trains), tuple(tests))


def confusion_metrics(labels, predictions) -> tuple[float, float, float]:
    """(error, sensitivity, specificity) under 0-1 loss; +1 is a case.

    Sensitivity (specificity) is NaN when no cases (controls) are present.
    """
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise LengthMismatch(f"{y.size} labels vs {p.size} predictions")
    if y.size == 0:
        raise LengthMismatch("no predictions to score")
    pos, neg = y > 0, y <= 0
    tp = np.sum(pos & (p > 0))
    tn = np.sum(neg & (p <= 0))
    error = float(np.mean((y > 0) != (p > 0)))
    sn = float(tp / pos.sum()) if pos.any() else float("nan")
    sp = float(tn / neg.sum()) if neg.any() else float("nan")
    return error, sn, sp


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points (FPR, TPR) from (0, 0) to (1, 1), and the Mann-Whitney AUC.

    Thresholds sweep the distinct scores from high to low; a sample is
    called positive when its score is at or above the threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) > 0
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both cases and controls")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(~y_sorted)
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    points = [(0.0, 0.0)] + [(float(fps[i] / n_neg), float(tps[i] / n_pos)) for i in last]
    ranks = stats.rankdata(s)  # ties share the average rank
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return points, float(auc)


@dataclass
class EvalReport:
    pipeline_id: str
    plan_fingerprint: str
    n_train: int
    n_test: int
    per_repeat: dict = field(default_factory=dict)  # metric -> list of floats
    roc: list = field(default_factory=list)  # per repeat: list of (fpr, tpr) or [] if undefined
    flags: list = field(default_factory=list)

    @property
    def n_repeats(self) -> int:
        return len(self.per_repeat.get("error", []))

    def values(self, metric: str) -> np.ndarray:
        return np.asarray(self.per_repeat[metric], dtype=np.float64)

    def mean(self, metric: str) -> float:
        v = self.values(metric)
        return float(np.nanmean(v)) if np.isfinite(v).any() else float("nan")

    def std(self, metric: str) -> float:
        v = self.values(metric)
        v = v[np.isfinite(v)]
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def aggregate(self) -> dict:
        return {m: {"mean": self.mean(m), "std": self.std(m)} for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "pipeline_id": self.pipeline_id,
            "plan_fingerprint": self.plan_fingerprint,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "per_repeat": {m: [_json_float(x) for x in v] for m, v in self.per_repeat.items()},
            "aggregate": {m: {k: _json_float(x) for k, x in a.items()} for m, a in self.aggregate().items()},
            "roc": [[list(pt) for pt in r] for r in self.roc],
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            data["pipeline_id"], data["plan_fingerprint"], data["n_train"], data["n_test"],
            {m: [float("nan") if x is None else x for x in v] for m, v in data["per_repeat"].items()},
            [[tuple(pt) for pt in r] for r in data.get("roc", [])],
            list(data.get("flags", [])),
        )


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _run_repeat(args):
    pipeline, bundle, train_idx, test_idx, repeat, seed = args
    train_idx = np.asarray(train_idx)
    test_idx = np.asarray(test_idx)
    if np.intersect1d(train_idx, test_idx).size:
        raise AssertionError(f"repeat {repeat}: train and test overlap")
    train, test = bundle.materialize(train_idx, test_idx)
    fitted = pipeline.fit(train, seed=[seed, repeat])
    scores = fitted.decision(test)
    predicted = fitted.labels(test)
    y = bundle.labels[test_idx]
    error, sn, sp = confusion_metrics(y, predicted)
    try:
        points, auc = roc_auc(scores, y)
        flag = None
    except SingleClass:
        points, auc, flag = [], float("nan"), f"repeat {repeat}: test set has a single class"
    return error, sn, sp, auc, points, flag, getattr(fitted, "converged", True)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("BIOFUSE_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(pipeline, bundle, plan: SplitPlan, n_jobs: int | None = None) -> EvalReport:
    """Fit and score ``pipeline`` on every split of ``plan``.

    ``bundle.materialize(train_idx, test_idx)`` turns index sets into the
    per-source train/test datasets, learning any data-driven
    transformation (such as the peak model) from the training rows only.
    """
    if bundle.n_samples != plan.n:
        raise PlanMismatch(f"plan covers {plan.n} samples, data has {bundle.n_samples}")
    jobs = [(pipeline, bundle, tr, te, r, plan.seed) for r, (tr, te) in enumerate(zip(plan.train, plan.test))]
    n_jobs = worker_count() if n_jobs is None else n_jobs
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_repeat, jobs))
    else:
        results = [_run_repeat(j) for j in jobs]
    report = EvalReport(pipeline.pipeline_id, plan.fingerprint, plan.n_train, plan.n_test,
                        {m: [] for m in METRICS})
    for error, sn, sp, auc, points, flag, converged in results:
        for m, v in zip(METRICS, (error, sn, sp, auc)):
            report.per_repeat[m].append(v)
        report.roc.append(points)
        if flag:
            report.flags.append(flag)
        if not converged:
            report.flags.append("did_not_converge")
    return report


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    mean_diff: float
    k: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"t": _json_float(self.t) if math.isfinite(self.t) else str(self.t), "p": self.p,
                "significant": self.significant, "mean_diff": self.mean_diff, "k": self.k,
                "degenerate": self.degenerate}


def corrected_t_from_diffs(d, n_train: int, n_test: int, alpha: float = 0.05) -> TTestResult:
    """Resampled paired t-test with the variance inflated by
    ``1/k + n_test/n_train`` to account for overlapping training sets."""
    d = np.asarray(d, dtype=np.float64)
    k = d.size
    if k < 2:
        raise TooFewRepeats("the corrected t-test needs at least two repeats")
    mean = float(d.mean())
    var = float(d.var(ddof=1))
    if np.all(d == d[0]):  # constant differences: the variance is zero up to rounding
        if d[0] == 0:
            return TTestResult(0.0, 1.0, False, mean, k, degenerate=True)
        return TTestResult(math.copysign(math.inf, d[0]), 0.0, True, mean, k, degenerate=True)
    t = mean / math.sqrt((1.0 / k + n_test / n_train) * var)
    p = float(2.0 * stats.t.sf(abs(t), k - 1))
    return TTestResult(float(t), p, p < alpha, mean, k)


def corrected_t_test(report_a: EvalReport, report_b: EvalReport, metric: str = "auc",
                     n_train: int | None = None, n_test: int | None = None,
                     alpha: float = 0.05) -> TTestResult:
    if report_a.plan_fingerprint != report_b.plan_fingerprint:
        raise PlanMismatch("reports were produced on different split plans")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    n_train = report_a.n_train if n_train is None else n_train
    n_test = report_a.n_test if n_test is None else n_test
    d = report_a.values(metric) - report_b.values(metric)
    d = d[np.isfinite(d)]
    return corrected_t_from_diffs(d, n_train, n_test, alpha)
