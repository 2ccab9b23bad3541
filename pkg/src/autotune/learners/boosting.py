"""Gradient boosting (squared / logistic loss) and discrete AdaBoost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from ..dataset import Dataset
from .tree import Tree, _grow_ws, grow_tree, node_capacity, presort, sorted_values

SQUARED = "squared"
LOGISTIC = "logistic"

# capped stage vote used when a weak learner is perfect on the training rows
PERFECT_LEARNER_ODDS = 1e10
NEWTON_FLOOR = 1e-12


@dataclass(frozen=True)
class GbmModel:
    init_value: float
    trees: tuple[Tree, ...]
    shrinkage: float
    n_trees: int
    interaction_depth: int
    min_obs_node: int
    loss: str
    train_loss: tuple[float, ...] = ()
    n_features: int = -1

    @property
    def params(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "interaction_depth": self.interaction_depth,
            "shrinkage": self.shrinkage,
            "min_obs_node": self.min_obs_node,
        }

    def raw_score(self, rows) -> np.ndarray:
        x = np.ascontiguousarray(rows, dtype=np.float64)
        f = np.full(x.shape[0], self.init_value)
        for tree in self.trees:
            f += self.shrinkage * tree.predict(x)
        return f

    def predict(self, rows) -> np.ndarray:
        f = self.raw_score(rows)
        if self.loss == LOGISTIC:
            return (f > 0).astype(float)
        return f

    def predict_proba(self, rows) -> np.ndarray:
        if self.loss != LOGISTIC:
            raise ValueError("probabilities are only defined for logistic loss")
        return expit(self.raw_score(rows))

    def to_dict(self) -> dict:
        return {
            "init_value": self.init_value,
            "trees": [t.to_dict() for t in self.trees],
            "loss": self.loss,
            "n_features": self.n_features,
            **self.params,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbmModel":
        return cls(
            float(doc["init_value"]),
            tuple(Tree.from_dict(t) for t in doc["trees"]),
            float(doc["shrinkage"]),
            int(doc["n_trees"]),
            int(doc["interaction_depth"]),
            int(doc["min_obs_node"]),
            doc["loss"],
            n_features=int(doc.get("n_features", -1)),
        )


@njit(cache=True, nogil=True)
def _boost(x, order, y, logistic, n_stages, max_depth, min_obs, shrinkage, cap,
           f, x_eval, y_eval, f_eval, keep):
    """Run ``n_stages`` boosting stages, updating ``f`` and ``f_eval`` in place.

    Returns per-stage training loss (MSE or binomial deviance), per-stage
    holdout loss (MSE or misclassification rate) and, when ``keep`` is set,
    the trees packed into flat node arrays of stride ``cap``.
    """
    p, n = order.shape
    n_eval = x_eval.shape[0]
    xs0 = sorted_values(x, order)
    idx = np.empty((p, n), dtype=np.int64)
    xs = np.empty((p, n))
    buf = np.empty(n, dtype=np.int64)
    vbuf = np.empty(n)
    go_left = np.zeros(n, dtype=np.bool_)
    stack = np.empty((cap + 1, 4), dtype=np.int64)
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    n_node = np.empty(cap, dtype=np.int64)
    leaf_of = np.empty(n, dtype=np.int64)
    resid = np.empty(n)
    prob = np.empty(n)
    w = np.ones(n)
    num = np.empty(cap)
    den = np.empty(cap)

    stored = n_stages * cap if keep else 0
    all_feature = np.empty(stored, dtype=np.int64)
    all_threshold = np.empty(stored)
    all_left = np.empty(stored, dtype=np.int64)
    all_right = np.empty(stored, dtype=np.int64)
    all_value = np.empty(stored)
    all_n_node = np.empty(stored, dtype=np.int64)
    sizes = np.zeros(n_stages, dtype=np.int64)
    train_curve = np.empty(n_stages)
    eval_curve = np.empty(n_stages)

    for m in range(n_stages):
        if logistic:
            for i in range(n):
                prob[i] = 1.0 / (1.0 + np.exp(-f[i]))
                resid[i] = y[i] - prob[i]
        else:
            for i in range(n):
                resid[i] = y[i] - f[i]
        nn = _grow_ws(order, xs0, resid, w, max_depth, min_obs, idx, xs, buf, vbuf, go_left,
                      stack, feature, threshold, left, right, value, n_node, leaf_of)
        if logistic:
            for k in range(nn):
                num[k] = 0.0
                den[k] = 0.0
            for i in range(n):
                num[leaf_of[i]] += resid[i]
                den[leaf_of[i]] += prob[i] * (1.0 - prob[i])
            for k in range(nn):
                if feature[k] < 0:
                    value[k] = num[k] / max(den[k], 1e-12)

        loss = 0.0
        for i in range(n):
            f[i] += shrinkage * value[leaf_of[i]]
            if logistic:
                fi = f[i]
                loss += max(fi, 0.0) + np.log1p(np.exp(-abs(fi))) - y[i] * fi
            else:
                loss += (y[i] - f[i]) ** 2
        train_curve[m] = loss / n

        loss = 0.0
        for i in range(n_eval):
            node = 0
            while feature[node] >= 0:
                if x_eval[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            f_eval[i] += shrinkage * value[node]
            if logistic:
                if (f_eval[i] > 0.0) != (y_eval[i] == 1.0):
                    loss += 1.0
            else:
                loss += (y_eval[i] - f_eval[i]) ** 2
        eval_curve[m] = loss / n_eval if n_eval > 0 else 0.0

        if keep:
            base = m * cap
            sizes[m] = nn
            for k in range(nn):
                all_feature[base + k] = feature[k]
                all_threshold[base + k] = threshold[k]
                all_left[base + k] = left[k]
                all_right[base + k] = right[k]
                all_value[base + k] = value[k]
                all_n_node[base + k] = n_node[k]
    return (train_curve, eval_curve, sizes, all_feature, all_threshold, all_left,
            all_right, all_value, all_n_node)


def _initial_score(y: np.ndarray, logistic: bool) -> float:
    if logistic:
        pbar = float(y.mean())
        if pbar in (0.0, 1.0):
            raise ValueError("classification data has a single class")
        return float(np.log(pbar / (1 - pbar)))
    return float(y.mean())


def _check_gbm(n_trees, interaction_depth, shrinkage, min_obs_node):
    if n_trees < 0:
        raise ValueError("n_trees must be non-negative")
    if interaction_depth < 1 or min_obs_node < 1:
        raise ValueError("interaction_depth and min_obs_node must be positive")
    if not 0 < shrinkage <= 1:
        raise ValueError(f"shrinkage must lie in (0, 1], got {shrinkage}")


def _training_loss(logistic, y, f):
    if logistic:
        return float(np.mean(np.logaddexp(0.0, f) - y * f))
    return float(np.mean((y - f) ** 2))


def fit_gbm(ds: Dataset, n_trees: int, interaction_depth: int, shrinkage: float,
            min_obs_node: int) -> GbmModel:
    """Fit a gradient boosting machine.

    Regression uses squared loss with leaf means of the residuals.
    Classification uses logistic loss: trees are grown on ``y - p`` and each
    leaf is then reset by one Newton step, ``sum(r) / sum(p(1 - p))``.
    ``train_loss`` holds the training loss before and after every stage.
    """
    n_trees = int(n_trees)
    interaction_depth = int(interaction_depth)
    min_obs_node = int(min_obs_node)
    _check_gbm(n_trees, interaction_depth, shrinkage, min_obs_node)
    logistic = ds.is_classification
    x = np.ascontiguousarray(ds.features, dtype=np.float64)
    y = ds.response.astype(np.float64)
    f0 = _initial_score(y, logistic)
    f = np.full(len(y), f0)
    cap = node_capacity(len(y), interaction_depth, min_obs_node)
    out = _boost(x, presort(x), y, logistic, n_trees, interaction_depth, min_obs_node,
                 float(shrinkage), cap, f, np.zeros((0, x.shape[1])), np.zeros(0),
                 np.zeros(0), True)
    train_curve, _, sizes, feat, thr, lft, rgt, val, cnt = out
    trees = []
    for m in range(n_trees):
        sl = slice(m * cap, m * cap + sizes[m])
        trees.append(Tree(feat[sl].copy(), thr[sl].copy(), lft[sl].copy(), rgt[sl].copy(),
                          val[sl].copy(), cnt[sl].copy()))
    trace = (_training_loss(logistic, y, np.full(len(y), f0)),) + tuple(train_curve.tolist())
    return GbmModel(f0, tuple(trees), float(shrinkage), n_trees, interaction_depth,
                    min_obs_node, LOGISTIC if logistic else SQUARED, trace, x.shape[1])


class StagedGbm:
    """A boosting run on one train/holdout split, readable at any tree count.

    Stage ``m`` of a run is identical whatever the final tree count, so the
    holdout loss for ``n_trees = m`` is read off a single run that is
    extended on demand. Trees are not retained.
    """

    def __init__(self, train: Dataset, holdout_x, holdout_y, interaction_depth: int,
                 shrinkage: float, min_obs_node: int):
        _check_gbm(0, int(interaction_depth), shrinkage, int(min_obs_node))
        self.logistic = train.is_classification
        self._x = np.ascontiguousarray(train.features, dtype=np.float64)
        self._y = train.response.astype(np.float64)
        self._order = presort(self._x)
        self._xe = np.ascontiguousarray(holdout_x, dtype=np.float64)
        self._ye = np.asarray(holdout_y, dtype=np.float64)
        self.depth = int(interaction_depth)
        self.min_obs = int(min_obs_node)
        self.shrinkage = float(shrinkage)
        self._cap = node_capacity(len(self._y), self.depth, self.min_obs)
        f0 = _initial_score(self._y, self.logistic)
        self._f = np.full(len(self._y), f0)
        self._fe = np.full(len(self._ye), f0)
        if self.logistic:
            loss0 = float(np.mean((self._fe > 0) != (self._ye == 1.0)))
        else:
            loss0 = float(np.mean((self._ye - self._fe) ** 2))
        self._curve = [loss0]

    @property
    def stages(self) -> int:
        return len(self._curve) - 1

    def holdout_loss(self, n_trees: int) -> float:
        n_trees = int(n_trees)
        if n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        more = n_trees - self.stages
        if more > 0:
            out = _boost(self._x, self._order, self._y, self.logistic, more, self.depth,
                         self.min_obs, self.shrinkage, self._cap, self._f, self._xe,
                         self._ye, self._fe, False)
            self._curve.extend(out[1].tolist())
        return self._curve[n_trees]


@dataclass(frozen=True)
class AdaModel:
    trees: tuple[Tree, ...]
    stage_weights: tuple[float, ...]
    shrinkage: float
    n_trees: int
    depth: int
    default_label: float = 1.0
    stage_errors: tuple[float, ...] = ()
    n_features: int = -1

    @property
    def params(self) -> dict:
        return {"n_trees": self.n_trees, "depth": self.depth, "shrinkage": self.shrinkage}

    def score(self, rows) -> np.ndarray:
        x = np.ascontiguousarray(rows, dtype=np.float64)
        s = np.zeros(x.shape[0])
        for tree, alpha in zip(self.trees, self.stage_weights):
            s += alpha * np.where(tree.predict(x) > 0.5, 1.0, -1.0)
        return s

    def predict(self, rows) -> np.ndarray:
        s = self.score(rows)
        out = (s > 0).astype(float)
        out[s == 0] = self.default_label
        return out

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "stage_weights": list(self.stage_weights),
            "default_label": self.default_label,
            "n_features": self.n_features,
            **self.params,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AdaModel":
        return cls(
            tuple(Tree.from_dict(t) for t in doc["trees"]),
            tuple(float(a) for a in doc["stage_weights"]),
            float(doc["shrinkage"]),
            int(doc["n_trees"]),
            int(doc["depth"]),
            float(doc.get("default_label", 1.0)),
            n_features=int(doc.get("n_features", -1)),
        )


def fit_adaboost(ds: Dataset, n_trees: int, depth: int, shrinkage: float,
                 on_stage=None) -> AdaModel:
    """Discrete AdaBoost with learning rate ``shrinkage`` on the stage votes.

    Stops early when a weak learner's weighted error reaches 0.5 (the stage
    is discarded) or hits 0 (the stage is kept with a capped vote).
    ``on_stage(m, weights, error)`` is called after each accepted stage
    with the renormalised row weights.
    """
    if not ds.is_classification:
        raise ValueError("adaboost supports classification only")
    n_trees = int(n_trees)
    depth = int(depth)
    if n_trees < 1 or depth < 1:
        raise ValueError("n_trees and depth must be positive")
    if not 0 < shrinkage <= 1:
        raise ValueError(f"shrinkage must lie in (0, 1], got {shrinkage}")
    y = ds.response.astype(np.float64)
    if y.min() == y.max():
        raise ValueError("classification data has a single class")

    x = np.ascontiguousarray(ds.features, dtype=np.float64)
    order = presort(x)
    n = len(y)
    w = np.full(n, 1.0 / n)
    trees, alphas, errors = [], [], []
    for m in range(n_trees):
        tree, leaf_of = grow_tree(x, order, y, w, depth, 1)
        miss = (tree.value[leaf_of] > 0.5) != (y == 1.0)
        err = float(w[miss].sum())
        if err >= 0.5:
            break
        if err <= 0.0:
            trees.append(tree)
            alphas.append(shrinkage * float(np.log(PERFECT_LEARNER_ODDS)))
            errors.append(0.0)
            if on_stage is not None:
                on_stage(m, w.copy(), 0.0)
            break
        alpha = shrinkage * float(np.log((1 - err) / err))
        w[miss] *= np.exp(alpha)
        w /= w.sum()
        trees.append(tree)
        alphas.append(alpha)
        errors.append(err)
        if on_stage is not None:
            on_stage(m, w.copy(), err)
    default = 1.0 if y.mean() >= 0.5 else 0.0
    return AdaModel(tuple(trees), tuple(alphas), float(shrinkage), n_trees, depth,
                    default, tuple(errors), x.shape[1])
