"""Scoring a parameter vector: the objective every optimizer minimises.

An :class:`Objective` fixes the data partition once (per scheme and seed),
so every parameter vector scored during one search sees the same folds.
"""

from __future__ import annotations

import math
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .dataset import Dataset, DataError, holdout_indices, kfold
from .learners import FAMILIES, fit_model
from .learners.boosting import StagedGbm

RESUB = "resub"
CV = "cv"
FAST_FRACTION = "fast_fraction"
FAST_N = "fast_n"


class EvaluationError(RuntimeError):
    """A learner failed to fit; ``params`` holds the offending vector."""

    def __init__(self, message: str, params: dict):
        super().__init__(f"{message} (params={params})")
        self.params = dict(params)


class IncompatibleRequest(ValueError):
    pass


class InfeasibleScheme(IncompatibleRequest, DataError):
    """The scheme cannot partition this dataset (e.g. k above the row count)."""


@dataclass(frozen=True)
class EvalScheme:
    """How a candidate is scored: resubstitution, k-fold CV or one holdout.

    ``Fast = TRUE`` is a 50 % holdout, ``Fast = p`` trains on fraction ``p``
    and ``Fast = n`` trains on ``n`` rows; the remainder validates.
    """

    kind: str
    k: int | None = None
    fraction: float | None = None
    n: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == CV:
            if self.k is None or self.k < 2:
                raise ValueError(f"CV needs k >= 2, got {self.k}")
        elif self.kind == FAST_FRACTION:
            if self.fraction is None or not 0 < self.fraction < 1:
                raise ValueError(f"fast fraction must lie in (0, 1), got {self.fraction}")
        elif self.kind == FAST_N:
            if self.n is None or self.n < 10:
                raise ValueError(f"fast training size must be at least 10, got {self.n}")
        elif self.kind != RESUB:
            raise ValueError(f"unknown scheme kind {self.kind!r}")

    @classmethod
    def resub(cls, seed: int = 0) -> "EvalScheme":
        return cls(RESUB, seed=seed)

    @classmethod
    def cv(cls, k: int = 10, seed: int = 0) -> "EvalScheme":
        return cls(CV, k=int(k), seed=seed)

    @classmethod
    def fast(cls, value=True, seed: int = 0) -> "EvalScheme":
        if value is True:
            return cls(FAST_FRACTION, fraction=0.5, seed=seed)
        if isinstance(value, float) and 0 < value < 1:
            return cls(FAST_FRACTION, fraction=value, seed=seed)
        if float(value) == int(value) and int(value) > 1:
            return cls(FAST_N, n=int(value), seed=seed)
        raise ValueError(f"fast value must be True, a fraction in (0, 1) or a row count > 1: {value!r}")

    def with_seed(self, seed: int) -> "EvalScheme":
        return EvalScheme(self.kind, self.k, self.fraction, self.n, seed)

    @property
    def label(self) -> str:
        if self.kind == RESUB:
            return "Resub"
        if self.kind == CV:
            return f"CV = {self.k}"
        if self.kind == FAST_FRACTION:
            return "Fast = TRUE" if self.fraction == 0.5 else f"Fast = {self.fraction:g}"
        return f"Fast = {self.n}"

    def check(self, ds: Dataset) -> None:
        """Raise :class:`InfeasibleScheme` if the scheme cannot run on ``ds``."""
        if self.kind == CV and self.k > ds.n_rows:
            raise InfeasibleScheme(f"CV k={self.k} exceeds {ds.n_rows} rows")
        if self.kind == FAST_N and self.n >= ds.n_rows:
            raise InfeasibleScheme(f"fast training size {self.n} is not below {ds.n_rows} rows")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalScheme":
        return cls(doc["kind"], doc.get("k"), doc.get("fraction"), doc.get("n"), doc.get("seed", 0))


@dataclass(frozen=True)
class CvResult:
    mean_loss: float
    per_fold_losses: tuple[float, ...]
    ucl95: float
    elapsed_seconds: float
    n_model_fits: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_fold_losses"] = list(self.per_fold_losses)
        return out


def misclassification_rate(predicted, actual) -> float:
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    return float(np.mean(p != a))


def mse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    return float(np.mean((p - a) ** 2))


def upper_confidence_limit(losses) -> float:
    """mean + t(0.975, k-1) * sd / sqrt(k); a single loss is its own limit."""
    losses = np.asarray(losses, dtype=float)
    k = len(losses)
    mean = float(losses.mean())
    if k < 2:
        return mean
    sd = float(losses.std(ddof=1))
    return mean + float(stats.t.ppf(0.975, k - 1)) * sd / math.sqrt(k)


def check_family(family: str, task: str) -> None:
    if family not in FAMILIES:
        raise IncompatibleRequest(f"unknown model family {family!r}; choose from {FAMILIES}")
    if family == "ada" and task != "classification":
        raise IncompatibleRequest("adaboost regression is not supported (classification only)")


class Objective:
    """Callable ``params -> CvResult`` for one dataset, family and scheme.

    GBM holdout losses are read off boosting runs shared across tree
    counts (see :class:`~autotune.learners.boosting.StagedGbm`); the cache
    holds at most ``cache_size`` runs.
    """

    def __init__(self, ds: Dataset, family: str, scheme: EvalScheme, jobs: int = 1,
                 stage_cache: bool = True, cache_size: int = 256):
        if not ds.encoded:
            raise DataError("evaluation needs an encoded dataset")
        check_family(family, ds.task)
        scheme.check(ds)
        self.ds = ds
        self.family = family
        self.scheme = scheme
        self.jobs = max(1, int(jobs))
        self.stage_cache = stage_cache and family == "gbm"
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.splits = self._make_splits()
        self._train = [ds.subset(tr) for tr, _ in self.splits]

    def _make_splits(self):
        ds, s = self.ds, self.scheme
        everything = np.arange(ds.n_rows)
        if s.kind == RESUB:
            return [(everything, everything)]
        if s.kind == CV:
            folds = kfold(ds, s.k, s.seed)
            return [folds.train_test(f) for f in range(folds.k)]
        if s.kind == FAST_FRACTION:
            return [holdout_indices(ds, train_fraction=s.fraction, seed=s.seed)]
        return [holdout_indices(ds, train_n=s.n, seed=s.seed)]

    def _loss(self, predicted, actual) -> float:
        if self.ds.is_classification:
            return misclassification_rate(predicted, actual)
        return mse(predicted, actual)

    def _staged(self, i: int, params: dict) -> float:
        key = (i, int(params["interaction_depth"]), float(params["shrinkage"]),
               int(params["min_obs_node"]))
        run = self._cache.get(key)
        if run is None:
            test = self.splits[i][1]
            run = StagedGbm(self._train[i], self.ds.features[test], self.ds.response[test],
                            key[1], key[2], key[3])
            self._cache[key] = run
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return run.holdout_loss(int(params["n_trees"]))

    def _split_loss(self, i: int, params: dict) -> float:
        if self.stage_cache:
            return self._staged(i, params)
        test = self.splits[i][1]
        model = fit_model(self.family, self._train[i], params)
        return self._loss(model.predict(self.ds.features[test]), self.ds.response[test])

    def __call__(self, params: dict) -> CvResult:
        params = dict(params)
        start = time.perf_counter()
        try:
            if self.jobs > 1 and len(self.splits) > 1:
                with ThreadPoolExecutor(self.jobs) as pool:
                    losses = list(pool.map(lambda i: self._split_loss(i, params),
                                           range(len(self.splits))))
            else:
                losses = [self._split_loss(i, params) for i in range(len(self.splits))]
        except (ValueError, ArithmeticError, FloatingPointError) as exc:
            raise EvaluationError(f"{self.family} fit failed: {exc}", params) from exc
        elapsed = time.perf_counter() - start
        mean = float(np.mean(losses))
        ucl = upper_confidence_limit(losses) if self.scheme.kind == CV else mean
        return CvResult(mean, tuple(float(v) for v in losses), ucl, elapsed,
                        len(self.splits), params)


def evaluate(ds: Dataset, family: str, params: dict, scheme: EvalScheme, jobs: int = 1) -> CvResult:
    """Score one parameter vector under ``scheme``."""
    return Objective(ds, family, scheme, jobs=jobs)(params)


@dataclass(frozen=True)
class StandardizedScore:
    label: str
    loss: float
    time: float
    failed: bool = False


def standardize_scores(raw, grid_best_loss: float, grid_worst_loss: float,
                       time_min: float | None = None, time_max: float | None = None):
    """Map (label, loss, seconds) triples onto [0, 1] relative to a grid.

    Loss is scaled by the grid's best and worst cells; time by
    ``time_min``/``time_max`` (defaulting to the range over ``raw``).
    Entries whose loss is ``None`` are failures and score (1, 1).
    """
    span = grid_worst_loss - grid_best_loss
    if not span > 0:
        raise ValueError(f"degenerate grid range: best={grid_best_loss}, worst={grid_worst_loss}")
    raw = list(raw)
    times = [t for _, loss, t in raw if loss is not None and t is not None]
    if time_min is None:
        time_min = min(times) if times else 0.0
    if time_max is None:
        time_max = max(times) if times else 0.0
    tspan = time_max - time_min
    out = []
    for label, loss, seconds in raw:
        if loss is None:
            out.append(StandardizedScore(label, 1.0, 1.0, True))
            continue
        scaled = min(max((loss - grid_best_loss) / span, 0.0), 1.0)
        if seconds is None or not tspan > 0:
            scaled_t = 0.0
        else:
            scaled_t = min(max((seconds - time_min) / tspan, 0.0), 1.0)
        out.append(StandardizedScore(label, scaled, scaled_t, False))
    return out
