"""Native learners: RBF SVM (SMO), gradient boosting and AdaBoost."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dataset import Dataset, Encoding
from .boosting import AdaModel, GbmModel, fit_adaboost, fit_gbm
from .svm import ConvergenceWarning, SvmModel, fit_svc, fit_svr, rbf_kernel
from .tree import Tree, fit_tree

FAMILIES = ("svm", "gbm", "ada")
MODEL_FORMAT = "autotune-model"
MODEL_FORMAT_VERSION = 1

_MODEL_TYPES = {"svm": SvmModel, "gbm": GbmModel, "ada": AdaModel}

__all__ = [
    "AdaModel", "ConvergenceWarning", "FAMILIES", "GbmModel", "SvmModel", "Tree",
    "fit_adaboost", "fit_gbm", "fit_model", "fit_svc", "fit_svr", "fit_tree",
    "load_model", "model_from_document", "model_to_document", "predict",
    "rbf_kernel", "save_model",
]


def fit_model(family: str, ds: Dataset, params: dict):
    """Fit ``family`` on an encoded dataset with a named parameter map."""
    if not ds.encoded:
        raise ValueError("fit_model needs an encoded dataset")
    if family == "svm":
        if ds.is_classification:
            return fit_svc(ds, params["cost"], params["gamma"])
        return fit_svr(ds, params["cost"], params["gamma"], params["epsilon"])
    if family == "gbm":
        return fit_gbm(ds, params["n_trees"], params["interaction_depth"],
                       params["shrinkage"], params["min_obs_node"])
    if family == "ada":
        return fit_adaboost(ds, params["n_trees"], params["depth"], params["shrinkage"])
    raise ValueError(f"unknown model family {family!r}; choose from {FAMILIES}")


def _width(model) -> int:
    if isinstance(model, SvmModel):
        return len(model.scaling.mean)
    if isinstance(model, (GbmModel, AdaModel)):
        return model.n_features
    return -1


def predict(model, rows) -> np.ndarray:
    """Predict with any fitted learner; labels are 0/1 for classifiers."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    width = _width(model)
    if isinstance(model, Tree):
        inner = model.feature[model.feature >= 0]
        if len(inner) and x.shape[1] <= inner.max():
            raise ValueError(f"rows have {x.shape[1]} columns; tree splits on column {inner.max()}")
    elif width >= 0 and x.shape[1] != width:
        raise ValueError(f"rows have {x.shape[1]} columns, model expects {width}")
    return model.predict(x)


def family_of(model) -> str:
    for name, cls in _MODEL_TYPES.items():
        if isinstance(model, cls):
            return name
    raise TypeError(f"not a fitted learner: {type(model).__name__}")


def model_to_document(model, task: str, params: dict, encoding: Encoding | None = None,
                      class_labels=()) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "family": family_of(model),
        "task": task,
        "params": params,
        "class_labels": list(class_labels),
        "encoding": encoding.to_dict() if encoding is not None else None,
        "model": model.to_dict(),
    }


def model_from_document(doc: dict):
    """Inverse of :func:`model_to_document`; returns ``(model, doc)``."""
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not an autotune model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')}")
    cls = _MODEL_TYPES[doc["family"]]
    return cls.from_dict(doc["model"]), doc


def save_model(path, model, task: str, params: dict, encoding=None, class_labels=()) -> None:
    doc = model_to_document(model, task, params, encoding, class_labels)
    Path(path).write_text(json.dumps(doc))


def load_model(path):
    return model_from_document(json.loads(Path(path).read_text()))
