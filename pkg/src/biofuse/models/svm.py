"""Linear soft-margin SVM trained in the dual.

Pairwise coordinate ascent on

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j <x_i, x_j>
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0

using the maximal-violating-pair rule with second-order selection of the
partner.  The equality constraint couples the coordinates, so every step
moves two multipliers at once.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from biofuse.dataset import Dataset
from biofuse.errors import ConvergenceWarning
from biofuse.models.base import FORMAT_VERSION, Standardizer, TrainedModel, check_two_classes

TAU = 1e-12


class LinearSVM(TrainedModel):
    kind = "svm"
    threshold = 0.0

    def __init__(self, w, w0, standardizer, alpha=None, C=1.0, converged=True, kkt_gap=0.0, n_iter=0):
        self.w = np.asarray(w, dtype=np.float64)
        self.w0 = float(w0)
        self.standardizer = standardizer
        self.alpha = None if alpha is None else np.asarray(alpha, dtype=np.float64)
        self.C = float(C)
        self.converged = bool(converged)
        self.kkt_gap = float(kkt_gap)
        self.n_iter = int(n_iter)
        self.n_features = self.w.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0) if self.alpha is not None else np.array([], dtype=np.int64)

    def _scores(self, X):
        return self.standardizer.transform(X) @ self.w + self.w0

    def original_space(self) -> tuple[np.ndarray, float]:
        """(w, w0) acting on unstandardized features."""
        w = self.w / self.standardizer.scale
        return w, self.w0 - float(w @ self.standardizer.mean)

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "w": self.w.tolist(),
            "w0": self.w0,
            "C": self.C,
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "standardizer": self.standardizer.to_dict(),
            "converged": self.converged,
            "kkt_gap": self.kkt_gap,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["w"], data["w0"], Standardizer.from_dict(data["standardizer"]),
            data.get("alpha"), data.get("C", 1.0), data.get("converged", True),
            data.get("kkt_gap", 0.0), data.get("n_iter", 0),
        )


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


@njit(cache=True)
def _smo(K, y, C, tol, max_iter, tau):
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the minimization form: Q a - 1
    gap = np.inf
    it = 0
    while it < max_iter:
        # maximal violating pair, first member: largest -y g over the up set
        i = -1
        m_up = -np.inf
        m_low = np.inf
        for t in range(n):
            yg = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if yg > m_up:
                    m_up = yg
                    i = t
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                if yg < m_low:
                    m_low = yg
        if i < 0 or m_low == np.inf:
            gap = 0.0
            break
        gap = m_up - m_low
        if gap <= tol:
            break
        # second member by second-order gain
        j = -1
        best = np.inf
        bj = 0.0
        aj = 1.0
        for t in range(n):
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                b = m_up - (-y[t] * grad[t])
                if b > 0:
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = tau
                    g = -(b * b) / a
                    if g < best:
                        best = g
                        j = t
                        bj = b
                        aj = a
        step = bj / aj
        # alpha_i += y_i t, alpha_j -= y_j t keeps sum(alpha * y) fixed
        step = min(step, C - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] = min(max(alpha[i] + y[i] * step, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * step, 0.0), C)
        for t in range(n):
            grad[t] += step * y[t] * (K[t, i] - K[t, j])
        it += 1
    return alpha, grad, gap, it


def solve_dual(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-6, max_iter: int | None = None):
    """Return (alpha, bias, kkt_gap, n_iter) for the linear-kernel dual.

    ``max_iter`` counts pair updates; the default allows 10**4 passes.
    """
    y = y.astype(np.float64)
    max_iter = 10_000 * y.size if max_iter is None else max_iter
    alpha, grad, gap, it = _smo(np.ascontiguousarray(K, dtype=np.float64), y, float(C), float(tol),
                                int(max_iter), TAU)
    return alpha, _bias(alpha, y, grad, C), float(gap), int(it)


def _bias(alpha, y, grad, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return float(-rho)


def train_linear_svm(d: Dataset, C: float = 1.0, tol: float = 1e-6, standardize: bool = True,
                     max_iter: int | None = None) -> LinearSVM:
    check_two_classes(d)
    if not C > 0:
        raise ValueError("C must be positive")
    st = Standardizer.fit(d.X) if standardize else Standardizer.identity(d.n_features)
    Z = st.transform(d.X)
    y = d.y.astype(np.float64)
    alpha, w0, gap, it = solve_dual(Z @ Z.T, y, C, tol, max_iter)
    converged = gap <= tol
    if not converged:
        warnings.warn(f"SVM dual stopped after {it} updates with KKT gap {gap:.3g}", ConvergenceWarning, stacklevel=2)
    w = Z.T @ (alpha * y)
    return LinearSVM(w, w0, st, alpha, C, converged, gap, it)
