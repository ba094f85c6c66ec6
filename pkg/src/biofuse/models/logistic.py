"""L2-regularized logistic regression fitted by gradient ascent."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import expit, log_expit

from biofuse.dataset import Dataset
from biofuse.errors import ConvergenceWarning
from biofuse.models.base import FORMAT_VERSION, Standardizer, TrainedModel, check_two_classes


class LogisticModel(TrainedModel):
    kind = "logreg"
    threshold = 0.0

    def __init__(self, weights, bias, standardizer, l2=1.0, converged=True, n_iter=0, grad_norm=0.0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.standardizer = standardizer
        self.l2 = float(l2)
        self.converged = bool(converged)
        self.n_iter = int(n_iter)
        self.grad_norm = float(grad_norm)
        self.n_features = self.weights.size

    def _scores(self, X):
        return self.standardizer.transform(X) @ self.weights + self.bias

    def to_dict(self):
        return {
            "version": FORMAT_VERSION, "kind": self.kind, "weights": self.weights.tolist(),
            "bias": self.bias, "l2": self.l2, "standardizer": self.standardizer.to_dict(),
            "converged": self.converged, "n_iter": self.n_iter, "grad_norm": self.grad_norm,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["weights"], data["bias"], Standardizer.from_dict(data["standardizer"]),
                   data.get("l2", 1.0), data.get("converged", True), data.get("n_iter", 0),
                   data.get("grad_norm", 0.0))


def penalized_loglik(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Log-likelihood minus ``l2/2 * |w|^2``; ``theta`` is (w..., b), bias unpenalized."""
    w, b = theta[:-1], theta[-1]
    return float(log_expit(y * (Z @ w + b)).sum() - 0.5 * l2 * w @ w)


def penalized_gradient(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    w, b = theta[:-1], theta[-1]
    r = y * expit(-y * (Z @ w + b))
    return np.concatenate((Z.T @ r - l2 * w, [r.sum()]))


def train_logistic(d: Dataset, l2: float = 1.0, tol: float = 1e-6, max_iter: int = 50_000) -> LogisticModel:
    """Ascend the penalized log-likelihood until the gradient's max-norm is
    at most ``tol``.

    Step lengths start from the Barzilai-Borwein estimate and are halved
    until the Armijo sufficient-increase condition holds.
    """
    check_two_classes(d)
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    st = Standardizer.fit(d.X)
    Z = st.transform(d.X)
    y = d.y.astype(np.float64)
    p = Z.shape[1]
    theta = np.zeros(p + 1)
    prior = y.mean()
    theta[-1] = np.log((1 + prior) / (1 - prior))  # prior log-odds
    f = penalized_loglik(theta, Z, y, l2)
    g = penalized_gradient(theta, Z, y, l2)
    # 1 / Lipschitz bound of the negative Hessian
    step = 1.0 / (0.25 * (np.linalg.norm(Z, 2) ** 2 + Z.shape[0]) + l2)
    it = 0
    while np.abs(g).max() > tol and it < max_iter:
        while True:
            cand = theta + step * g
            fc = penalized_loglik(cand, Z, y, l2)
            if fc >= f + 1e-4 * step * (g @ g) or step < 1e-20:
                break
            step *= 0.5
        gc = penalized_gradient(cand, Z, y, l2)
        s, dg = cand - theta, gc - g
        curv = -(s @ dg)
        theta, f, g = cand, fc, gc
        step = (s @ s) / curv if curv > 0 else step * 2.0
        it += 1
    gnorm = float(np.abs(g).max())
    converged = gnorm <= tol
    if not converged:
        warnings.warn(f"logistic regression stopped after {it} steps, gradient {gnorm:.3g}",
                      ConvergenceWarning, stacklevel=2)
    return LogisticModel(theta[:-1], theta[-1], st, l2, converged, it, gnorm)
