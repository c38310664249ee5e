"""Analytic benchmark functions, addressable by name."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from gpdoe.design import to_physical
from gpdoe.errors import ArgumentError

_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class TestFunction:
    """A deterministic function on a box, vectorized over rows.

    Calling it with physical coordinates of shape ``(d,)`` returns a float,
    with shape ``(m, d)`` an array of ``m`` values.
    """

    __test__ = False  # not a pytest class

    name: str
    dimension: int
    bounds: tuple[tuple[float, float], ...]
    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.dimension:
            raise ArgumentError(f"{self.name} takes {self.dimension} inputs, got {x2.shape[1]}")
        b = np.asarray(self.bounds)
        if np.any(x2 < b[:, 0] - _BOUND_TOL) or np.any(x2 > b[:, 1] + _BOUND_TOL) or not np.all(np.isfinite(x2)):
            raise ArgumentError(f"{self.name}: input outside its domain {self.bounds}")
        y = self.evaluator(x2)
        return float(y[0]) if single else y

    def on_unit(self, u):
        """Evaluate at unit-cube coordinates mapped onto the function's box."""
        return self(to_physical(u, np.asarray(self.bounds)))


def _irregular(x: np.ndarray) -> np.ndarray:
    x1, x2 = x[:, 0], x[:, 1]
    return (
        np.exp(x1) / 5.0
        - x2 / 5.0
        + x2**6 / 3.0
        + 4.0 * x2**4
        - 4.0 * x2**2
        + 7.0 * x1**2 / 10.0
        + x1**4
        + 3.0 / (4.0 * x1**2 + 4.0 * x2**2 + 1.0)
    )


def _additive_g(a) -> Callable[[np.ndarray], np.ndarray]:
    # Sum form, not the usual product form of Sobol's g-function.
    a = np.asarray(a, dtype=float)

    def g(x: np.ndarray) -> np.ndarray:
        return np.sum((np.abs(4.0 * x - 2.0) + a) / (1.0 + a), axis=1)

    return g


def _cosin2(x: np.ndarray) -> np.ndarray:
    return np.cos(10.0 * x[:, 0]) + np.sin(10.0 * x[:, 1]) + x[:, 0] * x[:, 1]


irregular = TestFunction("irregular", 2, ((-1.0, 1.0),) * 2, _irregular)
gsobol5 = TestFunction("gsobol5", 5, ((0.0, 1.0),) * 5, _additive_g([1, 2, 3, 4, 5]))
gsobol8 = TestFunction("gsobol8", 8, ((0.0, 1.0),) * 8, _additive_g([3, 3, 0, 0, 0, 0, 0, 0]))
cosin2 = TestFunction("cosin2", 2, ((0.0, 1.0),) * 2, _cosin2)

REGISTRY: dict[str, TestFunction] = {f.name: f for f in (irregular, gsobol5, gsobol8, cosin2)}


def get(name: str) -> TestFunction:
    try:
        return REGISTRY[name.lower().replace("-", "").replace("_", "")]
    except KeyError:
        raise ArgumentError(f"unknown function {name!r}; available: {sorted(REGISTRY)}") from None
