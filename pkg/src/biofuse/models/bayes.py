"""Gaussian naive Bayes scored by log posterior odds."""

from __future__ import annotations

import numpy as np

from biofuse.dataset import Dataset
from biofuse.models.base import FORMAT_VERSION, TrainedModel, check_two_classes

VAR_FLOOR = 1e-9
# used when every feature is constant and the relative floor would be zero
ABS_FLOOR = 1e-12


def _log_density(X, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (X - mean) ** 2 / var).sum(axis=1)


class GaussianNB(TrainedModel):
    kind = "nb"
    threshold = 0.0

    def __init__(self, mean_case, var_case, mean_control, var_control, prior_case):
        self.mean_case = np.asarray(mean_case, dtype=np.float64)
        self.var_case = np.asarray(var_case, dtype=np.float64)
        self.mean_control = np.asarray(mean_control, dtype=np.float64)
        self.var_control = np.asarray(var_control, dtype=np.float64)
        self.prior_case = float(prior_case)
        self.n_features = self.mean_case.size

    def _scores(self, X):
        prior = np.log(self.prior_case) - np.log1p(-self.prior_case)
        return (prior + _log_density(X, self.mean_case, self.var_case)
                - _log_density(X, self.mean_control, self.var_control))

    def to_dict(self):
        return {
            "version": FORMAT_VERSION, "kind": self.kind,
            "mean_case": self.mean_case.tolist(), "var_case": self.var_case.tolist(),
            "mean_control": self.mean_control.tolist(), "var_control": self.var_control.tolist(),
            "prior_case": self.prior_case,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["mean_case"], data["var_case"], data["mean_control"], data["var_control"],
                   data["prior_case"])


def train_gaussian_nb(d: Dataset) -> GaussianNB:
    """Per-class maximum-likelihood Gaussians, variances floored at
    ``1e-9`` times the mean per-feature variance."""
    check_two_classes(d)
    case = d.y > 0
    floor = max(VAR_FLOOR * float(d.X.var(axis=0).mean()) if d.n_features else 0.0, ABS_FLOOR)
    Xc, Xn = d.X[case], d.X[~case]
    return GaussianNB(
        Xc.mean(axis=0), np.maximum(Xc.var(axis=0), floor),
        Xn.mean(axis=0), np.maximum(Xn.var(axis=0), floor),
        case.mean(),
    )
