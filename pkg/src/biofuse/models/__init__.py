"""Base classifiers and the JSON model-spec registry.

A model spec is a dict such as ``{"kind": "svm", "C": 1.0}`` or
``{"kind": "rf", "n_trees": 500, "mtry": None, "seed": 3}``.
"""

from __future__ import annotations

import numpy as np

from biofuse.dataset import Dataset
from biofuse.errors import ConfigInvalid
from biofuse.models.base import TrainedModel, predict_label, predict_score
from biofuse.models.bayes import GaussianNB, train_gaussian_nb
from biofuse.models.logistic import LogisticModel, train_logistic
from biofuse.models.svm import LinearSVM, train_linear_svm
from biofuse.models.tree import CART, Forest, train_cart, train_random_forest

__all__ = [
    "CART", "Forest", "GaussianNB", "LinearSVM", "LogisticModel", "TrainedModel",
    "model_from_dict", "predict_label", "predict_score", "train_cart", "train_gaussian_nb",
    "train_linear_svm", "train_logistic", "train_model", "train_random_forest", "validate_spec",
]

_PARAMS = {
    "svm": {"C", "tol", "standardize"},
    "rf": {"n_trees", "mtry", "seed", "bootstrap", "min_leaf"},
    "cart": set(),
    "nb": set(),
    "logreg": {"l2", "tol", "max_iter"},
}

_CLASSES = {"svm": LinearSVM, "rf": Forest, "cart": CART, "nb": GaussianNB, "logreg": LogisticModel}


def validate_spec(spec: dict) -> dict:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigInvalid(f"model spec needs a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind not in _PARAMS:
        raise ConfigInvalid(f"unknown model kind {kind!r}; expected one of {sorted(_PARAMS)}")
    extra = set(spec) - _PARAMS[kind] - {"kind"}
    if extra:
        raise ConfigInvalid(f"unexpected parameters for {kind}: {sorted(extra)}")
    return spec


def train_model(spec: dict, d: Dataset, seed=None) -> TrainedModel:
    """Fit the model a spec describes.

    ``seed`` feeds forests whose spec leaves ``seed`` unset or null; it is
    combined with an explicit spec seed otherwise so that repeated fits in
    an evaluation loop get distinct but reproducible streams.
    """
    validate_spec(spec)
    params = {k: v for k, v in spec.items() if k != "kind"}
    kind = spec["kind"]
    if kind == "svm":
        return train_linear_svm(d, **params)
    if kind == "rf":
        base = params.pop("seed", None)
        parts = [s for s in (base, seed) if s is not None]
        flat = []
        for s in parts:
            flat.extend(np.atleast_1d(s).astype(np.int64).tolist())
        params["seed"] = flat if len(flat) > 1 else (flat[0] if flat else 0)
        return train_random_forest(d, **params)
    if kind == "cart":
        return train_cart(d)
    if kind == "nb":
        return train_gaussian_nb(d)
    return train_logistic(d, **params)


def model_from_dict(data: dict) -> TrainedModel:
    try:
        cls = _CLASSES[data["kind"]]
    except KeyError as exc:
        raise ConfigInvalid(f"not a serialized model: {data.get('kind')!r}") from exc
    return cls.from_dict(data)
