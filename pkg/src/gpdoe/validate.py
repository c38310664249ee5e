"""Predictivity estimation: Q2 on test samples, cross-validation, and the
sequential validation design built from a Hammersley candidate pool."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from gpdoe import criteria
from gpdoe.design import Design, generate_hammersley, to_physical
from gpdoe.errors import ArgumentError, DataError
from gpdoe.gp import FitOptions, GpModel, fit


def q2(true_values, predictions) -> float:
    """1 - sum (y - yhat)^2 / sum (ybar - y)^2, with ybar the mean of the true values."""
    y = np.asarray(true_values, dtype=float).ravel()
    yhat = np.asarray(predictions, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ArgumentError(f"{y.size} true values but {yhat.size} predictions")
    if y.size < 2:
        raise ArgumentError("Q2 needs at least two test points")
    denom = float(np.sum((y.mean() - y) ** 2))
    if denom == 0.0:
        raise DataError("Q2 undefined: the true test values are all identical")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / denom


def running_q2(true_values, predictions) -> np.ndarray:
    """Q2 of every prefix; entries are NaN while the prefix variance is zero (always for length 1)."""
    y = np.asarray(true_values, dtype=float).ravel()
    yhat = np.asarray(predictions, dtype=float).ravel()
    out = np.full(y.size, np.nan)
    mean = 0.0
    sst = 0.0
    sse = 0.0
    for i in range(y.size):
        delta = y[i] - mean
        mean += delta / (i + 1)
        sst += delta * (y[i] - mean)
        sse += (y[i] - yhat[i]) ** 2
        if i >= 1 and sst > 0.0:
            out[i] = 1.0 - sse / sst
    return out


@dataclass
class ValidationReport:
    q2: float
    method: str
    n_test: int
    true_values: np.ndarray
    predictions: np.ndarray
    trace: list[tuple[int, float]] = field(default_factory=list)
    test_points: np.ndarray | None = None

    @classmethod
    def from_residuals(cls, method: str, y, yhat, test_points=None, with_trace: bool = True) -> "ValidationReport":
        y = np.asarray(y, dtype=float)
        yhat = np.asarray(yhat, dtype=float)
        value = q2(y, yhat)
        trace = []
        if with_trace:
            run = running_q2(y, yhat)
            trace = [(i + 1, float(v)) for i, v in enumerate(run) if i >= 1]
        return cls(value, method, int(y.size), y, yhat, trace, test_points)

    def to_dict(self) -> dict:
        out = {
            "q2": self.q2,
            "method": self.method,
            "n_test": self.n_test,
            "residuals": [{"true": float(a), "predicted": float(b)} for a, b in zip(self.true_values, self.predictions)],
            "trace": [{"n_test": k, "q2": None if np.isnan(v) else v} for k, v in self.trace],
        }
        if self.test_points is not None:
            out["test_points"] = np.asarray(self.test_points).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def trace_csv(self) -> str:
        lines = ["n_test,q2"]
        lines += [f"{k},{'' if np.isnan(v) else repr(v)}" for k, v in self.trace]
        return "\n".join(lines) + "\n"


def evaluate_unit(fn, u: np.ndarray) -> np.ndarray:
    """Evaluate ``fn`` at unit-cube points; functions carrying ``bounds`` get physical coordinates."""
    u = np.atleast_2d(u)
    if hasattr(fn, "bounds"):
        return np.asarray(fn(to_physical(u, np.asarray(fn.bounds, dtype=float))), dtype=float)
    return np.asarray(fn(u), dtype=float)


def q2_test_sample(model: GpModel, fn: Callable, test_design, method: str | None = None) -> ValidationReport:
    """Q2 of the model's mean predictor on an external test sample."""
    u = test_design.points if isinstance(test_design, Design) else np.atleast_2d(np.asarray(test_design, dtype=float))
    if u.shape[1] != model.d:
        raise ArgumentError(f"test design has dimension {u.shape[1]}, model {model.d}")
    if method is None:
        method = f"test_sample:{test_design.kind}" if isinstance(test_design, Design) else "test_sample"
    y = evaluate_unit(fn, u)
    yhat = model.predict(u)[0]
    return ValidationReport.from_residuals(method, y, yhat, u)


def kfold_assignment(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    if k < 2 or k > n:
        raise ArgumentError(f"need 2 <= k <= n for {n} points, got k={k}")
    perm = rng.permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def q2_cross_validation(design, outputs, fit_options: FitOptions | None = None, k: int = 5,
                        rng: np.random.Generator | None = None,
                        folds: Sequence[Sequence[int]] | None = None) -> ValidationReport:
    """k-fold cross-validation with a full refit on every fold complement.

    Held-out predictions are pooled into one Q2, ordered by original row.
    Explicit ``folds`` override ``k`` and ``rng``.
    """
    x = design.points if isinstance(design, Design) else np.atleast_2d(np.asarray(design, dtype=float))
    bounds = design.bounds if isinstance(design, Design) else None
    y = np.asarray(outputs, dtype=float).ravel()
    n = x.shape[0]
    if y.size != n:
        raise DataError(f"{n} design points but {y.size} outputs")
    if folds is None:
        if rng is None:
            raise ArgumentError("cross-validation needs an rng or explicit folds")
        folds = kfold_assignment(n, k, rng)
    folds = [np.asarray(f, dtype=int) for f in folds]
    if any(f.size < 1 for f in folds):
        raise ArgumentError("every fold needs at least one point")
    flat = np.concatenate(folds)
    if np.unique(flat).size != flat.size or flat.size != n or flat.min() < 0 or flat.max() >= n:
        raise ArgumentError("folds must partition the rows")
    yhat = np.empty(n)
    for held in folds:
        keep = np.setdiff1d(np.arange(n), held)
        sub = Design(x[keep], bounds=bounds)
        model = fit(sub, y[keep], fit_options)
        yhat[held] = model.predict(x[held])[0]
    method = "loo" if all(f.size == 1 for f in folds) and len(folds) == n else f"cv:{len(folds)}"
    return ValidationReport.from_residuals(method, y, yhat, x, with_trace=False)


def q2_loo(design, outputs, fit_options: FitOptions | None = None) -> ValidationReport:
    """Leave-one-out: n refits, each omitting one point."""
    n = design.n if isinstance(design, Design) else len(design)
    if n < 3:
        raise ArgumentError("leave-one-out needs at least three points")
    return q2_cross_validation(design, outputs, fit_options, folds=[[i] for i in range(n)])


# ------------------------------------------------------- sequential design


class SequentialDesignState:
    """Greedy test-point selection from a fixed candidate pool.

    Each step appends the pool point whose addition yields the smallest
    squared discrepancy of (learning points + already selected points),
    which is the same as minimizing the discrepancy increase. Ties go to
    the lowest original pool index.
    """

    def __init__(self, learning, pool, kind: str = criteria.CENTERED_L2, pool_indices=None):
        learn = learning.points if isinstance(learning, Design) else np.atleast_2d(np.asarray(learning, dtype=float))
        pts = pool.points if isinstance(pool, Design) else np.atleast_2d(np.asarray(pool, dtype=float))
        if pts.shape[1] != learn.shape[1]:
            raise ArgumentError(f"pool dimension {pts.shape[1]} != learning dimension {learn.shape[1]}")
        self.discrepancy_kind = criteria.criterion_kind(kind)
        self.pool = pts
        self.pool_indices = np.arange(pts.shape[0]) if pool_indices is None else np.asarray(pool_indices, dtype=int)
        self.n_learning = learn.shape[0]
        self._inc = criteria.IncrementalDiscrepancy(learn, self.discrepancy_kind)
        self._inc.attach_pool(pts)
        self._taken = np.zeros(pts.shape[0], dtype=bool)
        self.selected: list[int] = []

    @property
    def remaining(self) -> int:
        return int((~self._taken).sum())

    @property
    def current_design(self) -> np.ndarray:
        return self._inc.points

    @property
    def current_value(self) -> float:
        return self._inc.value

    def differences(self) -> np.ndarray:
        """D2(current + candidate) - D2(current) for every pool row (inf once taken)."""
        dif = self._inc.pool_values() - self._inc.value
        dif[self._taken] = np.inf
        return dif

    def step(self) -> int:
        if self.remaining == 0:
            raise ArgumentError("candidate pool exhausted")
        values = self._inc.pool_values()
        values[self._taken] = np.inf
        ties = np.flatnonzero(values == values.min())
        row = int(ties[np.argmin(self.pool_indices[ties])])
        self._taken[row] = True
        self._inc.add(self.pool[row])
        self.selected.append(row)
        return row

    @property
    def selected_points(self) -> np.ndarray:
        return self.pool[self.selected].reshape(len(self.selected), self.pool.shape[1])


def sequential_validation_design(learning, pool, n_test: int, kind: str = criteria.CENTERED_L2,
                                 return_indices: bool = False):
    """Select ``n_test`` pool points in order; see :class:`SequentialDesignState`."""
    n_pool = pool.n if isinstance(pool, Design) else len(pool)
    if n_test < 0 or n_test > n_pool:
        raise ArgumentError(f"cannot select {n_test} points from a pool of {n_pool}")
    state = SequentialDesignState(learning, pool, kind)
    for _ in range(n_test):
        state.step()
    if return_indices:
        return state.selected_points, np.array(state.selected, dtype=int)
    return state.selected_points


def q2_sequential(model: GpModel, fn: Callable, n_test: int, pool_size: int = 10000,
                  kind: str = criteria.CENTERED_L2) -> ValidationReport:
    """Q2 on the sequential validation design grown from the model's learning points."""
    pool = generate_hammersley(pool_size, model.d)
    pts = sequential_validation_design(model.learning_design, pool, n_test, kind)
    report = q2_test_sample(model, fn, pts, method="sequential")
    return report
