"""Gini CART trees and random forests built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from biofuse.dataset import Dataset
from biofuse.models.base import FORMAT_VERSION, TrainedModel, check_two_classes

LEAF = -1


@dataclass
class Tree:
    """Flat array encoding; ``feature[k] == LEAF`` marks a leaf.

    A sample goes left when ``x[feature] <= threshold``.  ``n_case`` and
    ``n_total`` count training samples that reached each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_case: np.ndarray
    n_total: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] != LEAF:
                depth[self.left[k]] = depth[k] + 1
                depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            r = rows[inner]
            nk = node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[nk]
            node[inner] = np.where(go_left, self.left[nk], self.right[nk])

    def case_fraction(self, X: np.ndarray) -> np.ndarray:
        leaf = self.leaf_of(X)
        return self.n_case[leaf] / self.n_total[leaf]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_case": self.n_case.tolist(),
            "n_total": self.n_total.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            np.asarray(data["feature"], dtype=np.int64),
            np.asarray(data["threshold"], dtype=np.float64),
            np.asarray(data["left"], dtype=np.int64),
            np.asarray(data["right"], dtype=np.int64),
            np.asarray(data["n_case"], dtype=np.int64),
            np.asarray(data["n_total"], dtype=np.int64),
        )


@njit(cache=True)
def _next_u64(state):
    # xorshift64* step; state is a length-1 uint64 array
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True)
def _randbelow(state, k):
    return np.int64((_next_u64(state) >> np.uint64(11)) % np.uint64(k))


@njit(cache=True)
def _grow(X, y01, rows, mtry, min_leaf, seed):
    """Depth-first Gini tree growth over ``X[rows]`` (rows may repeat).

    Node ids follow creation order (left child before right).  With
    ``mtry < p`` each node examines ``mtry`` features drawn uniformly from
    those that vary inside it.
    """
    p = X.shape[1]
    n = rows.size
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    n_case = np.zeros(cap, dtype=np.int64)
    n_total = np.zeros(cap, dtype=np.int64)

    samples = rows.copy()
    feats = np.arange(p)
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed if seed != 0 else np.uint64(0x9E3779B97F4A7C15)
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    vals = np.empty(n)
    ys = np.empty(n, dtype=np.int64)

    n_case[0] = y01[rows].sum()
    n_total[0] = n
    n_nodes = 1
    top = 0
    stack_node[0], stack_start[0], stack_end[0] = 0, 0, n
    top = 1
    while top > 0:
        top -= 1
        node, start, end = stack_node[top], stack_start[top], stack_end[top]
        m = end - start
        c = n_case[node]
        if c == 0 or c == m or m < 2 * min_leaf:
            continue
        best_purity = -np.inf
        best_f = -1
        best_thr = 0.0
        # partial Fisher-Yates over features, skipping ones constant here;
        # the pool stays permuted between nodes, which keeps draws uniform
        n_drawn = 0
        n_used = 0
        limit = p if mtry <= 0 else mtry
        while n_drawn < p and n_used < limit:
            if mtry > 0 and mtry < p:
                r = n_drawn + _randbelow(state, p - n_drawn)
                feats[n_drawn], feats[r] = feats[r], feats[n_drawn]
            f = feats[n_drawn]
            n_drawn += 1
            for t in range(m):
                vals[t] = X[samples[start + t], f]
            vmin = vals[:m].min()
            vmax = vals[:m].max()
            if not vmax > vmin:
                continue
            n_used += 1
            order = np.argsort(vals[:m], kind="mergesort")
            for t in range(m):
                ys[t] = y01[samples[start + order[t]]]
            cl = 0
            for k in range(1, m):
                cl += ys[k - 1]
                lo = vals[order[k - 1]]
                hi = vals[order[k]]
                if not hi > lo:
                    continue
                if k < min_leaf or m - k < min_leaf:
                    continue
                nl = float(k)
                nr = float(m - k)
                cr = float(c - cl)
                fcl = float(cl)
                purity = (fcl * fcl + (nl - fcl) ** 2) / nl + (cr * cr + (nr - cr) ** 2) / nr
                if purity > best_purity or (purity == best_purity and f < best_f):
                    best_purity = purity
                    best_f = f
                    thr = 0.5 * (lo + hi)
                    if not (lo <= thr and thr < hi):
                        thr = lo
                    best_thr = thr
        if best_f < 0:
            continue
        # partition samples[start:end] into <= thr then > thr, keeping order
        buf_l = np.empty(m, dtype=np.int64)
        buf_r = np.empty(m, dtype=np.int64)
        nl_i = 0
        nr_i = 0
        cl_i = 0
        for t in range(start, end):
            s = samples[t]
            if X[s, best_f] <= best_thr:
                buf_l[nl_i] = s
                nl_i += 1
                cl_i += y01[s]
            else:
                buf_r[nr_i] = s
                nr_i += 1
        for t in range(nl_i):
            samples[start + t] = buf_l[t]
        for t in range(nr_i):
            samples[start + nl_i + t] = buf_r[t]
        feature[node] = best_f
        threshold[node] = best_thr
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        n_case[li] = cl_i
        n_total[li] = nl_i
        n_case[ri] = n_case[node] - cl_i
        n_total[ri] = nr_i
        stack_node[top], stack_start[top], stack_end[top] = ri, start + nl_i, end
        top += 1
        stack_node[top], stack_start[top], stack_end[top] = li, start, start + nl_i
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            n_case[:n_nodes], n_total[:n_nodes])


@njit(cache=True)
def _forest_votes(X, offsets, feature, threshold, left, right, leaf_vote):
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        total = 0.0
        for t in range(offsets.size - 1):
            k = offsets[t]
            while feature[k] != LEAF:
                if X[i, feature[k]] <= threshold[k]:
                    k = offsets[t] + left[k]
                else:
                    k = offsets[t] + right[k]
            total += leaf_vote[k]
        out[i] = total
    return out


def grow_tree(X: np.ndarray, y01: np.ndarray, mtry: int | None = None, seed: int = 0,
              min_leaf: int = 1, rows: np.ndarray | None = None) -> Tree:
    """Grow a Gini tree until nodes are pure or cannot be split.

    ``y01`` is 1 for case, 0 for control.  Splits with zero impurity
    decrease are still taken while the node is impure, which is what lets
    a tree carve XOR-like patterns whose first split gains nothing.
    """
    X = np.asarray(X, dtype=np.float64)
    if not (X.flags.c_contiguous or X.flags.f_contiguous):
        X = np.asfortranarray(X)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    arrays = _grow(X, np.ascontiguousarray(y01, dtype=np.int64), rows, 0 if mtry is None else int(mtry),
                   int(min_leaf), np.uint64(seed))
    return Tree(*(a.copy() for a in arrays))


class CART(TrainedModel):
    kind = "cart"
    threshold = 0.5

    def __init__(self, tree: Tree, n_features: int):
        self.tree = tree
        self.n_features = n_features

    def _scores(self, X):
        return self.tree.case_fraction(X)

    def to_dict(self):
        return {"version": FORMAT_VERSION, "kind": self.kind, "n_features": self.n_features,
                "tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(Tree.from_dict(data["tree"]), data["n_features"])


class Forest(TrainedModel):
    """Soft score is the fraction of trees whose leaf majority is case."""

    kind = "rf"
    threshold = 0.5

    def __init__(self, trees: list[Tree], n_features: int, mtry: int, seed, bootstrap: bool = True):
        self.trees = trees
        self.n_features = n_features
        self.mtry = mtry
        self.seed = seed
        self.bootstrap = bootstrap
        sizes = [t.n_nodes for t in trees]
        self._offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        self._packed = tuple(
            np.concatenate([getattr(t, name) for t in trees])
            for name in ("feature", "threshold", "left", "right")
        )
        # a leaf votes case only on a strict majority
        self._leaf_vote = np.concatenate([(2 * t.n_case > t.n_total).astype(np.float64) for t in trees])

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _scores(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        votes = _forest_votes(X, self._offsets, *self._packed, self._leaf_vote)
        return votes / len(self.trees)

    def to_dict(self):
        return {
            "version": FORMAT_VERSION, "kind": self.kind, "n_features": self.n_features,
            "mtry": self.mtry, "seed": self.seed, "bootstrap": self.bootstrap,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data):
        return cls([Tree.from_dict(t) for t in data["trees"]], data["n_features"], data["mtry"],
                   data["seed"], data.get("bootstrap", True))


def train_cart(d: Dataset) -> CART:
    check_two_classes(d)
    return CART(grow_tree(d.X, (d.y > 0).astype(np.int64)), d.n_features)


def default_mtry(p: int) -> int:
    return max(1, math.ceil(math.sqrt(p)))


def train_random_forest(d: Dataset, n_trees: int = 500, mtry: int | None = None, seed=0,
                        bootstrap: bool = True, min_leaf: int = 1) -> Forest:
    """Breiman forest: bootstrap rows per tree, ``mtry`` random features per node.

    Every tree gets its own RNG stream spawned from ``seed``, so the forest
    does not depend on the order trees are grown in.
    """
    check_two_classes(d)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = default_mtry(d.n_features) if mtry is None else int(mtry)
    if not 1 <= mtry <= max(d.n_features, 1):
        raise ValueError(f"mtry must lie in [1, {d.n_features}]")
    X = np.asfortranarray(d.X, dtype=np.float64)
    y01 = (d.y > 0).astype(np.int64)
    n = d.n_samples
    trees = []
    for stream in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(stream)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree_seed = int(stream.generate_state(1, np.uint64)[0])
        trees.append(grow_tree(X, y01, mtry, tree_seed, min_leaf, rows))
    return Forest(trees, d.n_features, mtry, seed, bootstrap)
