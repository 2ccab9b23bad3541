"""Tune a model family end to end, verify the winner, and benchmark optimizers."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import CLASSIFICATION, REGRESSION, Dataset, DataError
from .evaluation import (
    CvResult,
    EvalScheme,
    EvaluationError,
    IncompatibleRequest,
    Objective,
    check_family,
    standardize_scores,
)
from .learners import fit_model
from .optimizers import (
    LINEAR,
    LOG2,
    Dim,
    GridResult,
    OptConfig,
    SearchSpace,
    genetic_algorithm,
    grid_search,
    hooke_jeeves,
)

LARGE_DATASET_ROWS = 2000

SPACES: dict[tuple[str, str], SearchSpace] = {
    ("svm", CLASSIFICATION): SearchSpace((
        Dim("cost", 1.0, 1024.0, LOG2, start=10.0),
        Dim("gamma", 2.0 ** -10, 2.0 ** 10, LOG2, start=2.0 ** -5),
    )),
    ("svm", REGRESSION): SearchSpace((
        Dim("cost", 1.0, 1024.0, LOG2, start=2.0),
        Dim("gamma", 2.0 ** -10, 2.0 ** 0, LOG2, start=2.0 ** -5),
        Dim("epsilon", 0.0, 0.5, LINEAR, start=0.4),
    )),
    ("gbm", CLASSIFICATION): SearchSpace((
        Dim("n_trees", 50, 3000, integer=True, start=500),
        Dim("interaction_depth", 1, 15, integer=True, start=5),
        Dim("shrinkage", 0.001, 0.1, start=0.1),
        Dim("min_obs_node", 5, 12, integer=True, start=8),
    )),
    ("gbm", REGRESSION): SearchSpace((
        Dim("n_trees", 50, 5000, integer=True, start=2000),
        Dim("interaction_depth", 1, 15, integer=True, start=8),
        Dim("shrinkage", 0.001, 0.1, start=0.1),
        Dim("min_obs_node", 5, 10, integer=True, start=5),
    )),
    ("ada", CLASSIFICATION): SearchSpace((
        Dim("n_trees", 50, 500, integer=True, start=300),
        Dim("depth", 1, 10, integer=True, start=10),
        Dim("shrinkage", 0.01, 0.5, start=0.05),
    )),
}

_OPTIMIZER_ALIASES = {"hjn": "hjn", "hooke_jeeves": "hjn", "ga": "ga", "genetic": "ga"}
_OPTIMIZERS = {"hjn": hooke_jeeves, "ga": genetic_algorithm}


def space_for(family: str, task: str) -> SearchSpace:
    check_family(family, task)
    return SPACES[(family, task)]


def canonical_optimizer(name: str) -> str:
    try:
        return _OPTIMIZER_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose hjn or ga") from None


def default_scheme(ds: Dataset, seed: int = 0) -> EvalScheme:
    return EvalScheme.cv(10 if ds.n_rows <= LARGE_DATASET_ROWS else 3, seed)


@dataclass(frozen=True)
class TuneRequest:
    """What to tune and how. ``seed`` overrides the scheme and optimizer seeds."""

    family: str
    optimizer: str = "hjn"
    scheme: EvalScheme | None = None
    opt_config: OptConfig = field(default_factory=OptConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", canonical_optimizer(self.optimizer))

    @property
    def label(self) -> str:
        scheme = self.scheme.label if self.scheme is not None else "default"
        return f"{self.family}/{self.optimizer}/{scheme}"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "optimizer": self.optimizer,
            "scheme": self.scheme.to_dict() if self.scheme is not None else None,
            "opt_config": self.opt_config.to_dict(),
            "seed": self.seed,
        }


@dataclass
class TuneResult:
    family: str
    task: str
    optimizer: str
    best_params: dict
    search_loss: float
    search_ucl95: float
    model: object
    evaluations_used: int
    elapsed_seconds: float
    scheme_used: EvalScheme
    seed: int
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "task": self.task,
            "optimizer": self.optimizer,
            "best_params": dict(self.best_params),
            "search_loss": self.search_loss,
            "search_ucl95": self.search_ucl95,
            "evaluations_used": self.evaluations_used,
            "elapsed_seconds": self.elapsed_seconds,
            "scheme": self.scheme_used.to_dict(),
            "scheme_label": self.scheme_used.label,
            "seed": self.seed,
            "trace": [[i, v] for i, v in self.trace],
        }


def _objective(ds: Dataset, family: str, space: SearchSpace, scheme: EvalScheme, jobs: int):
    score = Objective(ds, family, scheme, jobs=jobs)

    def f(point):
        return score(space.as_params(point))

    return f


def tune(ds: Dataset, req: TuneRequest, jobs: int = 1) -> TuneResult:
    """Search the registry space for ``req.family`` and refit the winner on all rows."""
    if not ds.encoded:
        raise DataError("tune needs an encoded dataset")
    space = space_for(req.family, ds.task)
    scheme = (req.scheme or default_scheme(ds)).with_seed(req.seed)
    scheme.check(ds)
    cfg = replace(req.opt_config, seed=req.seed)
    start = time.perf_counter()
    f = _objective(ds, req.family, space, scheme, jobs)
    opt = _OPTIMIZERS[req.optimizer](f, space, cfg)
    params = space.as_params(opt.best_point)
    model = fit_model(req.family, ds, params)
    elapsed = time.perf_counter() - start
    detail = opt.best_detail
    ucl = float(detail.ucl95) if isinstance(detail, CvResult) else opt.best_loss
    return TuneResult(req.family, ds.task, req.optimizer, params, opt.best_loss, ucl, model,
                      opt.evaluations_used, elapsed, scheme, req.seed, opt.trace)


def cv_verify(ds: Dataset, result: TuneResult | dict, k: int = 10, seed: int = 1,
              family: str | None = None, jobs: int = 1) -> CvResult:
    """Fresh k-fold CV of the winning parameters, refitting on every fold.

    ``result`` may be a :class:`TuneResult` or a plain parameter map (then
    ``family`` is required).
    """
    if isinstance(result, TuneResult):
        params, family = result.best_params, result.family
    else:
        if family is None:
            raise ValueError("family is required when verifying a bare parameter map")
        params = dict(result)
    if k < 2:
        raise DataError(f"verification needs k >= 2, got {k}")
    objective = Objective(ds, family, EvalScheme.cv(k, seed), jobs=jobs, stage_cache=False)
    return objective(params)


@dataclass(frozen=True)
class BenchRow:
    request: str
    family: str
    optimizer: str
    scheme: str
    rep: int
    seed: int
    verified_loss: float | None
    search_loss: float | None
    seconds: float | None
    evaluations_used: int
    std_loss: float
    std_time: float
    failed: bool
    error: str = ""
    best_params: dict = field(default_factory=dict)


@dataclass
class BenchReport:
    grid_family: str
    grid_points: tuple[int, ...]
    grid_best_loss: float
    grid_worst_loss: float
    grid_best_params: dict
    grid_seconds: float
    verify_k: int
    verify_seed: int
    rows: list[BenchRow]

    def summary(self) -> list[dict]:
        out = []
        for label in dict.fromkeys(r.request for r in self.rows):
            rows = [r for r in self.rows if r.request == label]
            ok = [r for r in rows if not r.failed]
            out.append({
                "request": label,
                "reps": len(rows),
                "failures": len(rows) - len(ok),
                "mean_verified_loss": float(np.mean([r.verified_loss for r in ok])) if ok else None,
                "mean_seconds": float(np.mean([r.seconds for r in ok])) if ok else None,
                "mean_std_loss": float(np.mean([r.std_loss for r in rows])),
                "mean_std_time": float(np.mean([r.std_time for r in rows])),
            })
        return out

    def to_dict(self) -> dict:
        return {
            "grid": {
                "family": self.grid_family,
                "points": list(self.grid_points),
                "best_loss": self.grid_best_loss,
                "worst_loss": self.grid_worst_loss,
                "best_params": self.grid_best_params,
                "seconds": self.grid_seconds,
            },
            "verify": {"k": self.verify_k, "seed": self.verify_seed},
            "rows": [_row_dict(r) for r in self.rows],
            "summary": self.summary(),
        }

    def to_csv(self, path) -> None:
        names = ["request", "family", "optimizer", "scheme", "rep", "seed", "verified_loss",
                 "search_loss", "seconds", "evaluations_used", "std_loss", "std_time",
                 "failed", "error"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in self.rows:
                d = _row_dict(r)
                w.writerow(["" if d[n] is None else d[n] for n in names])


def _row_dict(r: BenchRow) -> dict:
    return {
        "request": r.request, "family": r.family, "optimizer": r.optimizer, "scheme": r.scheme,
        "rep": r.rep, "seed": r.seed, "verified_loss": r.verified_loss,
        "search_loss": r.search_loss, "seconds": r.seconds,
        "evaluations_used": r.evaluations_used, "std_loss": r.std_loss,
        "std_time": r.std_time, "failed": r.failed, "error": r.error,
        "best_params": r.best_params,
    }


_REQUEST_ERRORS = (DataError, IncompatibleRequest, EvaluationError, ValueError)


def benchmark(ds: Dataset, requests: Sequence[TuneRequest], grid_points: Sequence[int],
              reps: int = 10, verify_k: int = 10, verify_seed: int = 1, jobs: int = 1,
              grid_family: str | None = None) -> BenchReport:
    """Compare tuned models with the grid oracle on the verification CV.

    The grid is scored under the same CV partition used to verify every
    winner, so standardized losses share one reference. Repetition ``r`` of
    a request runs with seed ``request.seed + r``. A failed repetition is
    recorded with standardized loss and time of 1.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not requests and grid_family is None:
        raise ValueError("need at least one request or a grid family")
    family = grid_family or requests[0].family
    space = space_for(family, ds.task)
    verify_scheme = EvalScheme.cv(verify_k, verify_seed)
    verify_scheme.check(ds)
    grid: GridResult = grid_search(_objective(ds, family, space, verify_scheme, jobs), space,
                                   grid_points, jobs=1)
    best, worst = grid.best.loss, grid.worst.loss

    raw = []
    for req in requests:
        for rep in range(reps):
            seed = req.seed + rep
            try:
                result = tune(ds, replace(req, seed=seed), jobs=jobs)
                verified = cv_verify(ds, result, verify_k, verify_seed, jobs=jobs)
                raw.append((req, rep, seed, result, verified.mean_loss, ""))
            except _REQUEST_ERRORS as exc:
                raw.append((req, rep, seed, None, None, str(exc)))

    triples = [(i, loss, res.elapsed_seconds if res else None)
               for i, (_, _, _, res, loss, _) in enumerate(raw)]
    if worst > best:
        scores = standardize_scores(triples, best, worst)
    else:
        # flat grid: anything at or below the grid value counts as optimal
        scores = [(1.0 if loss is None else (0.0 if loss <= best else 1.0)) for _, loss, _ in triples]
        timed = standardize_scores([(i, 0.0 if l is not None else None, t) for i, l, t in triples],
                                   0.0, 1.0)
        scores = [replace(s, loss=v) for s, v in zip(timed, scores)]

    rows = [BenchRow("grid", family, "grid", verify_scheme.label, 0, verify_seed, best, best,
                     grid.elapsed_seconds, len(grid.cells), 0.0, 0.0, False, "",
                     space.as_params(grid.best.point))]
    for (req, rep, seed, res, loss, err), score in zip(raw, scores):
        rows.append(BenchRow(
            req.label, req.family, req.optimizer,
            res.scheme_used.label if res else (req.scheme.label if req.scheme else "default"),
            rep, seed, loss, res.search_loss if res else None,
            res.elapsed_seconds if res else None, res.evaluations_used if res else 0,
            score.loss, score.time, score.failed, err, res.best_params if res else {},
        ))
    return BenchReport(family, tuple(int(p) for p in grid_points), best, worst,
                       space.as_params(grid.best.point), grid.elapsed_seconds,
                       verify_k, verify_seed, rows)
