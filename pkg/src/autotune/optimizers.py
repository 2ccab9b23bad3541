"""Box-constrained derivative-free search over tuning-parameter spaces.

Both optimizers work in unit coordinates: every dimension of a
:class:`SearchSpace` is mapped affinely (in log2 space for ``log2`` dims)
onto [0, 1]. Objectives are called in natural units, with integer
dimensions rounded, and repeated natural-unit points are served from a
memo so they do not consume budget.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

LINEAR = "linear"
LOG2 = "log2"

DEFAULT_CELL_CAP = 100_000


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Dim:
    name: str
    lower: float
    upper: float
    scale: str = LINEAR
    integer: bool = False
    start: float | None = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower bound must be below upper bound")
        if self.scale not in (LINEAR, LOG2):
            raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == LOG2 and self.lower <= 0:
            raise ValueError(f"{self.name}: log2 dims need a positive lower bound")
        start = self.lower if self.start is None else self.start
        if not self.lower <= start <= self.upper:
            raise ValueError(f"{self.name}: start {start} outside [{self.lower}, {self.upper}]")
        if self.integer and any(float(v) != int(v) for v in (self.lower, self.upper, start)):
            raise ValueError(f"{self.name}: integer dims need integer bounds and start")
        object.__setattr__(self, "start", start)

    def to_unit(self, value: float) -> float:
        if self.scale == LOG2:
            lo, hi = math.log2(self.lower), math.log2(self.upper)
            return (math.log2(value) - lo) / (hi - lo)
        return (value - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: float) -> float:
        u = min(max(float(u), 0.0), 1.0)
        if self.scale == LOG2:
            lo, hi = math.log2(self.lower), math.log2(self.upper)
            value = 2.0 ** (lo + u * (hi - lo))
        else:
            value = self.lower + u * (self.upper - self.lower)
        value = min(max(value, self.lower), self.upper)
        if self.integer:
            return float(round(value))
        # snap log2 round-off so start points and memo keys come back exact
        return min(max(float(f"{value:.12g}"), self.lower), self.upper)

    def lattice(self, points: int) -> np.ndarray:
        if points < 1:
            raise ValueError("need at least one lattice point per dimension")
        if points == 1:
            return np.array([self.start], dtype=float)
        values = np.array([self.from_unit(u) for u in np.linspace(0.0, 1.0, points)])
        values[0], values[-1] = self.lower, self.upper
        if self.integer:
            values = np.unique(np.round(values))
        return values

    def to_dict(self) -> dict:
        return {"name": self.name, "lower": self.lower, "upper": self.upper,
                "scale": self.scale, "integer": self.integer, "start": self.start}


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        if not self.dims:
            raise ValueError("a search space needs at least one dimension")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @property
    def start(self) -> np.ndarray:
        return np.array([d.start for d in self.dims], dtype=float)

    def __len__(self) -> int:
        return len(self.dims)

    def to_unit(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        for d, v in zip(self.dims, point):
            if not d.lower <= v <= d.upper:
                raise ValueError(f"{d.name}={v} outside [{d.lower}, {d.upper}]")
        return np.array([d.to_unit(v) for d, v in zip(self.dims, point)])

    def from_unit(self, u) -> np.ndarray:
        return np.array([d.from_unit(v) for d, v in zip(self.dims, u)])

    def as_params(self, point) -> dict:
        return {d.name: (int(v) if d.integer else float(v)) for d, v in zip(self.dims, point)}

    def contains(self, point) -> bool:
        return all(d.lower <= v <= d.upper for d, v in zip(self.dims, point))


@dataclass(frozen=True)
class HJConfig:
    initial_step: float = 0.25
    contraction: float = 0.5
    min_step: float = 1e-3

    def __post_init__(self):
        if not 0 < self.initial_step <= 1:
            raise ValueError("initial_step must lie in (0, 1]")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if not self.min_step > 0:
            raise ValueError("min_step must be positive")


@dataclass(frozen=True)
class GAConfig:
    population: int = 20
    generations: int = 50
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    mutation_sd: float = 0.1
    elitism: int = 2
    tournament: int = 3

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be below the population size")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_sd < 0 or self.tournament < 1 or self.generations < 0:
            raise ValueError("mutation_sd, tournament and generations must be non-negative")


@dataclass(frozen=True)
class OptConfig:
    max_evaluations: int = 1000
    seed: int = 0
    hj: HJConfig = field(default_factory=HJConfig)
    ga: GAConfig = field(default_factory=GAConfig)

    def to_dict(self) -> dict:
        return {
            "max_evaluations": self.max_evaluations,
            "seed": self.seed,
            "hj": vars(self.hj).copy(),
            "ga": vars(self.ga).copy(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OptConfig":
        return cls(doc.get("max_evaluations", 1000), doc.get("seed", 0),
                   HJConfig(**doc.get("hj", {})), GAConfig(**doc.get("ga", {})))


@dataclass
class OptResult:
    best_point: np.ndarray
    best_loss: float
    evaluations_used: int
    trace: list[tuple[int, float]]
    elapsed_seconds: float
    history: list[float] = field(default_factory=list)
    best_detail: object = None

    def to_dict(self, space: SearchSpace | None = None) -> dict:
        point = (space.as_params(self.best_point) if space is not None
                 else [float(v) for v in self.best_point])
        return {
            "best_point": point,
            "best_loss": self.best_loss,
            "evaluations_used": self.evaluations_used,
            "trace": [[i, v] for i, v in self.trace],
            "elapsed_seconds": self.elapsed_seconds,
        }


class _BudgetExhausted(Exception):
    pass


def _as_loss(result) -> float:
    return float(getattr(result, "mean_loss", result))


class _Tracker:
    """Wraps the objective: rounding, memo, budget, best-so-far trace."""

    def __init__(self, objective: Callable, space: SearchSpace, budget: int):
        if budget < 1:
            raise ValueError("the evaluation budget must allow at least one evaluation")
        self.objective = objective
        self.space = space
        self.budget = budget
        self.memo: dict[tuple, float] = {}
        self.details: dict[tuple, object] = {}
        self.evaluations = 0
        self.best_key: tuple | None = None
        self.best_loss = math.inf
        self.trace: list[tuple[int, float]] = []

    def key(self, u) -> tuple:
        return tuple(float(v) for v in self.space.from_unit(np.clip(u, 0.0, 1.0)))

    def __call__(self, u) -> float:
        key = self.key(u)
        if key in self.memo:
            return self.memo[key]
        if self.evaluations >= self.budget:
            raise _BudgetExhausted
        result = self.objective(np.array(key))
        loss = _as_loss(result)
        if math.isnan(loss):
            loss = math.inf
        self.evaluations += 1
        self.memo[key] = loss
        self.details[key] = result
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_key = key
        self.trace.append((self.evaluations, self.best_loss))
        return loss

    def result(self, start: float, history) -> OptResult:
        return OptResult(
            np.array(self.best_key), self.best_loss, self.evaluations, self.trace,
            time.perf_counter() - start, list(history), self.details.get(self.best_key),
        )


def hooke_jeeves(objective: Callable, space: SearchSpace, cfg: OptConfig = OptConfig()) -> OptResult:
    """Bounded Hooke-Jeeves pattern search started at ``space.start``.

    Exploratory moves try +step then -step on each coordinate and keep any
    improvement. After a successful exploration the search jumps along the
    base-to-new direction and explores again, repeating while that keeps
    improving. A failed exploration shrinks the step; the final exploration
    always happens at exactly ``min_step`` before the search stops.
    """
    hj = cfg.hj
    start = time.perf_counter()
    f = _Tracker(objective, space, cfg.max_evaluations)
    d = len(space)
    history: list[float] = []

    def explore(base, f_base, step):
        x = base.copy()
        fx = f_base
        for i in range(d):
            for direction in (1.0, -1.0):
                trial = x.copy()
                trial[i] = min(max(trial[i] + direction * step, 0.0), 1.0)
                if trial[i] == x[i]:
                    continue
                ft = f(trial)
                if ft < fx:
                    x, fx = trial, ft
                    break
        return x, fx

    try:
        x = space.to_unit(space.start)
        fx = f(x)
        history.append(fx)
        step = hj.initial_step
        while True:
            y, fy = explore(x, fx, step)
            if fy < fx:
                while True:
                    pattern = np.clip(y + (y - x), 0.0, 1.0)
                    x, fx = y, fy
                    history.append(fx)
                    fp = f(pattern)
                    y, fy = explore(pattern, fp, step)
                    if not fy < fx:
                        break
                continue
            if step <= hj.min_step:
                break
            step = max(step * hj.contraction, hj.min_step)
    except _BudgetExhausted:
        pass
    return f.result(start, history)


def genetic_algorithm(objective: Callable, space: SearchSpace, cfg: OptConfig = OptConfig()) -> OptResult:
    """Real-coded GA in unit coordinates.

    Generation 0 is the start point plus uniform random members. Each of
    ``generations`` rounds keeps the ``elitism`` best unchanged and breeds
    the rest by tournament selection, blend crossover (interval widened by
    a quarter on each side) and per-gene Gaussian mutation, all clamped to
    the unit box. Selection ties go to the lower population index.
    """
    ga = cfg.ga
    if ga.population > cfg.max_evaluations:
        raise ValueError(
            f"population {ga.population} exceeds the evaluation budget {cfg.max_evaluations}"
        )
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    f = _Tracker(objective, space, cfg.max_evaluations)
    d = len(space)
    history: list[float] = []

    pop = np.vstack([space.to_unit(space.start), rng.uniform(0.0, 1.0, (ga.population - 1, d))])
    fit = np.full(ga.population, math.inf)

    def tournament():
        entrants = rng.choice(ga.population, size=min(ga.tournament, ga.population), replace=False)
        entrants.sort()
        return entrants[np.argmin(fit[entrants])]

    try:
        for i in range(ga.population):
            fit[i] = f(pop[i])
        history.append(float(fit.min()))
        for _ in range(ga.generations):
            order = np.argsort(fit, kind="stable")
            children = [pop[order[e]].copy() for e in range(ga.elitism)]
            child_fit = [fit[order[e]] for e in range(ga.elitism)]
            while len(children) < ga.population:
                a = pop[tournament()]
                b = pop[tournament()]
                if rng.random() < ga.crossover_rate:
                    lo = np.minimum(a, b)
                    hi = np.maximum(a, b)
                    spread = 0.25 * (hi - lo)
                    child = rng.uniform(lo - spread, hi + spread)
                else:
                    child = a.copy()
                mutate = rng.random(d) < ga.mutation_rate
                child = child + mutate * rng.normal(0.0, ga.mutation_sd, d)
                child = np.clip(child, 0.0, 1.0)
                children.append(child)
                child_fit.append(math.nan)
            pop = np.array(children)
            fit = np.array(child_fit, dtype=float)
            for i in range(ga.elitism, ga.population):
                fit[i] = f(pop[i])
            history.append(float(fit.min()))
    except _BudgetExhausted:
        pass
    return f.result(start, history)


OPTIMIZERS = {"hjn": hooke_jeeves, "ga": genetic_algorithm}


@dataclass(frozen=True)
class GridCell:
    point: tuple[float, ...]
    loss: float
    elapsed: float
    ucl95: float


@dataclass
class GridResult:
    names: tuple[str, ...]
    cells: list[GridCell]
    elapsed_seconds: float = 0.0

    @property
    def best_index(self) -> int:
        # first-evaluated cell wins ties
        return int(np.argmin([c.loss for c in self.cells]))

    @property
    def best(self) -> GridCell:
        return self.cells[self.best_index]

    @property
    def worst(self) -> GridCell:
        return self.cells[int(np.argmax([c.loss for c in self.cells]))]

    def best_fraction(self, fraction: float = 0.2) -> list[int]:
        """Indices of cells whose loss is within the best ``fraction`` of cells."""
        count = max(1, int(math.ceil(fraction * len(self.cells))))
        return self.best_n(count)

    def best_n(self, count: int = 20) -> list[int]:
        order = np.argsort([c.loss for c in self.cells], kind="stable")
        return [int(i) for i in order[:min(count, len(self.cells))]]

    def fastest_n(self, count: int = 20) -> list[int]:
        order = np.argsort([c.elapsed for c in self.cells], kind="stable")
        return [int(i) for i in order[:min(count, len(self.cells))]]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.names) + ["loss", "ucl95", "seconds"])
            for c in self.cells:
                w.writerow([repr(v) for v in c.point] + [repr(c.loss), repr(c.ucl95),
                                                         f"{c.elapsed:.6f}"])

    def summary(self, space: SearchSpace | None = None) -> dict:
        best = self.best
        point = space.as_params(best.point) if space else dict(zip(self.names, best.point))
        return {
            "cells": len(self.cells),
            "best_index": self.best_index,
            "best_point": point,
            "best_loss": best.loss,
            "worst_loss": self.worst.loss,
            "best_20_percent": self.best_fraction(0.2),
            "best_20": self.best_n(20),
            "fastest_20": self.fastest_n(20),
            "elapsed_seconds": self.elapsed_seconds,
        }


def grid_search(objective: Callable, space: SearchSpace, points_per_dim: Sequence[int],
                cell_cap: int = DEFAULT_CELL_CAP, jobs: int = 1) -> GridResult:
    """Evaluate the full Cartesian lattice (last dimension varies fastest)."""
    if len(points_per_dim) != len(space):
        raise ValueError(f"need {len(space)} lattice sizes, got {len(points_per_dim)}")
    total = math.prod(int(p) for p in points_per_dim)
    if total > cell_cap:
        raise GridTooLarge(f"grid of {total} cells exceeds the cap of {cell_cap}")
    axes = [d.lattice(int(p)) for d, p in zip(space.dims, points_per_dim)]
    points = [tuple(float(v) for v in combo) for combo in itertools.product(*axes)]
    start = time.perf_counter()

    def run(point):
        t0 = time.perf_counter()
        result = objective(np.array(point))
        elapsed = time.perf_counter() - t0
        loss = _as_loss(result)
        return GridCell(point, loss, elapsed, float(getattr(result, "ucl95", loss)))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            cells = list(pool.map(run, points))
    else:
        cells = [run(p) for p in points]
    return GridResult(space.names, cells, time.perf_counter() - start)
