"""Bank of GCV filters over a hyperparameter grid.

One independent filter runs per grid point; after every measurement the point
with the smallest GCV score is selected (ties go to the lowest index).
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .gcv import GcvState, gcv_init, gcv_step
from .statespace import StateSpaceModel

Assignment = Mapping[str, float]


def log_grid(lo: float, hi: float, count: int) -> np.ndarray:
    """``count`` logarithmically spaced points from ``lo`` to ``hi`` inclusive."""
    if not 0.0 < lo < hi:
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if count < 2:
        raise ValueError(f"need at least two grid points, got {count}")
    return np.geomspace(lo, hi, int(count))


@dataclass(frozen=True)
class ParamGrid:
    """Ordered hyperparameter assignments plus a factory building their models."""

    points: tuple[dict[str, float], ...]
    model_factory: Callable[[Assignment], StateSpaceModel] = field(compare=False)

    def __post_init__(self) -> None:
        pts = tuple(dict(p) for p in self.points)
        if not pts:
            raise ValueError("parameter grid is empty")
        object.__setattr__(self, "points", pts)

    @classmethod
    def product(
        cls,
        model_factory: Callable[[Assignment], StateSpaceModel],
        gamma: Sequence[float],
        **others: Sequence[float],
    ) -> ParamGrid:
        """Cartesian grid ordered by ascending gamma, then the other axes in order."""
        axes = [("gamma", sorted(float(g) for g in gamma))]
        axes += [(name, sorted(float(v) for v in vals)) for name, vals in others.items()]
        points: list[dict[str, float]] = [{}]
        for name, vals in axes:
            points = [{**p, name: v} for p in points for v in vals]
        return cls(tuple(points), model_factory)

    def __len__(self) -> int:
        return len(self.points)

    def models(self) -> tuple[StateSpaceModel, ...]:
        return tuple(self.model_factory(p) for p in self.points)


@dataclass(frozen=True)
class BankState:
    points: tuple[dict[str, float], ...]
    states: tuple[GcvState, ...]
    k: int
    best_index: int

    @property
    def scores(self) -> np.ndarray:
        return np.array([s.gcv for s in self.states])


def argmin_index(scores: Sequence[float]) -> int:
    # np.argmin returns the first minimum; NaN scores are never selected
    arr = np.asarray(scores, dtype=float)
    arr = np.where(np.isnan(arr), np.inf, arr)
    return int(np.argmin(arr))


def _map(executor: Executor | None, fn, *iterables):
    if executor is None:
        return list(map(fn, *iterables))
    return list(executor.map(fn, *iterables))


class FilterBank:
    """Runs a :class:`ParamGrid` forward one measurement at a time.

    Models are built once from the grid; the bank's per-step output is a
    :class:`BankState` holding only assignments and filter states.
    """

    def __init__(self, grid: ParamGrid, executor: Executor | None = None):
        self.grid = grid
        self.models = grid.models()
        self.executor = executor
        dims = {m.state_dim for m in self.models}
        self._dim = dims.pop() if len(dims) == 1 else None

    def _check_regressor(self, regressor):
        if regressor is None:
            return None
        c = np.asarray(regressor, dtype=float)
        if self._dim is None or c.shape != (self._dim,):
            raise ValueError(f"regressor of shape {c.shape} does not match the state dimension")
        return c

    def init(self, y1: float, regressor=None) -> BankState:
        c = self._check_regressor(regressor)
        states = _map(self.executor, lambda m: gcv_init(m, y1, c), self.models)
        return BankState(self.grid.points, tuple(states), 1, argmin_index([s.gcv for s in states]))

    def step(self, state: BankState, y_next: float, regressor=None) -> BankState:
        c = self._check_regressor(regressor)
        states = _map(
            self.executor, lambda s, m: gcv_step(s, m, y_next, c), state.states, self.models
        )
        return BankState(state.points, tuple(states), state.k + 1, argmin_index([s.gcv for s in states]))

    def run(self, measurements: Sequence[float], regressors=None) -> list[BankState]:
        out = []
        state = None
        for i, y in enumerate(measurements):
            c = None if regressors is None else regressors[i]
            state = self.init(y, c) if state is None else self.step(state, y, c)
            out.append(state)
        return out


def bank_init(grid: ParamGrid, y1: float, regressor=None, executor: Executor | None = None) -> BankState:
    return FilterBank(grid, executor).init(y1, regressor)


def bank_step(
    state: BankState,
    y_next: float,
    grid: ParamGrid,
    regressor=None,
    executor: Executor | None = None,
) -> BankState:
    """Advance every filter by one measurement (``regressor`` is the new C row, if any)."""
    if grid.points != state.points:
        raise ValueError("grid does not match the bank state")
    return FilterBank(grid, executor).step(state, y_next, regressor)


def bank_best(state: BankState) -> tuple[dict[str, float], GcvState]:
    i = state.best_index
    return dict(state.points[i]), state.states[i]
