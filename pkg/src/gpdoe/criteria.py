"""Space-filling criteria: maximin distance, centered and wrap-around L2 discrepancy.

Discrepancies are returned squared, with the ``(13/12)^d`` and ``(4/3)^d``
leading terms exactly as in the closed forms below; all criteria work on
unit-cube coordinates.

    D2 = (13/12)^d - 2/n sum_i prod_k (1 + a_ik/2 - a_ik^2/2)
         + 1/n^2 sum_ij prod_k (1 + a_ik/2 + a_jk/2 - |u_ik - u_jk|/2),   a = |u - 1/2|
    W2 = (4/3)^d + 1/n^2 sum_ij prod_k (3/2 - |u_ik - u_jk| (1 - |u_ik - u_jk|))
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from gpdoe.design import Design
from gpdoe.errors import ArgumentError

MAXIMIN = "maximin"
CENTERED_L2 = "centered_l2"
WRAPAROUND_L2 = "wraparound_l2"
KINDS = (MAXIMIN, CENTERED_L2, WRAPAROUND_L2)

_ALIASES = {
    "maximin": MAXIMIN,
    "mm": MAXIMIN,
    "centered": CENTERED_L2,
    "centered_l2": CENTERED_L2,
    "centeredl2": CENTERED_L2,
    "cl2": CENTERED_L2,
    "cd": CENTERED_L2,
    "wraparound": WRAPAROUND_L2,
    "wraparound_l2": WRAPAROUND_L2,
    "wrap-around": WRAPAROUND_L2,
    "wraparoundl2": WRAPAROUND_L2,
    "wd": WRAPAROUND_L2,
    "wl2": WRAPAROUND_L2,
}


def criterion_kind(name: str) -> str:
    """Normalize a user-facing criterion name."""
    try:
        return _ALIASES[name.strip().lower().replace(" ", "_")]
    except KeyError:
        raise ArgumentError(f"unknown criterion {name!r}; choose from {sorted(set(_ALIASES))}") from None


def maximize(kind: str) -> bool:
    return criterion_kind(kind) == MAXIMIN


@dataclass(frozen=True)
class CriterionValue:
    kind: str
    value: float
    n: int
    d: int

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "n": self.n, "d": self.d}


def _unit(design) -> np.ndarray:
    u = design.points if isinstance(design, Design) else np.asarray(design, dtype=float)
    if u.ndim == 1:
        u = u.reshape(1, -1)
    if u.ndim != 2 or u.shape[0] < 1:
        raise ArgumentError(f"expected an (n, d) design, got shape {u.shape}")
    if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise ArgumentError("discrepancy needs coordinates in [0, 1]")
    return u


# ------------------------------------------------------------------ kernels
# Pairwise kernels such that D2 = const + single-term + mean over pairs.


def _centered_single(u: np.ndarray) -> np.ndarray:
    a = np.abs(u - 0.5)
    return np.prod(1.0 + 0.5 * a - 0.5 * a * a, axis=-1)


def _centered_cross(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Kernel matrix between rows of x (m, d) and y (p, d)."""
    ax = np.abs(x - 0.5)
    ay = np.abs(y - 0.5)
    out = np.ones((x.shape[0], y.shape[0]))
    for k in range(x.shape[1]):
        out *= 1.0 + 0.5 * ax[:, k, None] + 0.5 * ay[None, :, k] - 0.5 * np.abs(x[:, k, None] - y[None, :, k])
    return out


def _wrap_cross(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.ones((x.shape[0], y.shape[0]))
    for k in range(x.shape[1]):
        delta = np.abs(x[:, k, None] - y[None, :, k])
        out *= 1.5 - delta * (1.0 - delta)
    return out


def _cross(kind: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _centered_cross(x, y) if kind == CENTERED_L2 else _wrap_cross(x, y)


def _self_kernel(kind: str, x: np.ndarray) -> np.ndarray:
    """Diagonal K(x_i, x_i) of the pair kernel."""
    if kind == CENTERED_L2:
        return np.prod(1.0 + np.abs(x - 0.5), axis=-1)
    return np.full(x.shape[0], 1.5 ** x.shape[1])


def _constant(kind: str, d: int) -> float:
    return (13.0 / 12.0) ** d if kind == CENTERED_L2 else (4.0 / 3.0) ** d


def _assemble(kind: str, d: int, n: int, single_sum: float, pair_sum: float) -> float:
    value = _constant(kind, d) + pair_sum / n**2
    if kind == CENTERED_L2:
        value -= 2.0 / n * single_sum
    return float(value)


# -------------------------------------------------------------- criteria


def maximin_value(u: np.ndarray) -> float:
    if u.shape[0] < 2:
        raise ArgumentError("maximin needs at least two points")
    return float(pdist(u).min())


def maximin(design) -> CriterionValue:
    """Smallest Euclidean distance between two design points."""
    u = _unit(design)
    return CriterionValue(MAXIMIN, maximin_value(u), u.shape[0], u.shape[1])


def centered_l2(design) -> CriterionValue:
    u = _unit(design)
    n, d = u.shape
    # Same value as _assemble, regrouped as a mean over pairs of
    # K(x_i, x_j) - g(x_i) - g(x_j) + (13/12)^d: the three O(1) terms cancel
    # pair by pair, so rounding does not swamp small discrepancies.
    g = _centered_single(u)
    h = _centered_cross(u, u) - g[:, None] - g[None, :] + _constant(CENTERED_L2, d)
    value = math.fsum(h.ravel()) / n**2
    return CriterionValue(CENTERED_L2, value, n, d)


def wraparound_l2(design) -> CriterionValue:
    u = _unit(design)
    n, d = u.shape
    value = _assemble(WRAPAROUND_L2, d, n, 0.0, _wrap_cross(u, u).sum())
    return CriterionValue(WRAPAROUND_L2, value, n, d)


_FUNCS = {MAXIMIN: maximin, CENTERED_L2: centered_l2, WRAPAROUND_L2: wraparound_l2}


def evaluate(design, kind: str) -> CriterionValue:
    return _FUNCS[criterion_kind(kind)](design)


# ---------------------------------------------------------- incremental


class IncrementalDiscrepancy:
    """Running sums of a squared discrepancy under one-point additions.

    Holds the single-point sum and the pair double sum of the current point
    set, so scoring a candidate costs O(n d) and adding a point O(n d).
    When a fixed candidate pool is attached, the cross sums between the pool
    and the current points are cached too and scoring the whole pool costs
    O(m d) per step.
    """

    def __init__(self, points, kind: str = CENTERED_L2):
        kind = criterion_kind(kind)
        if kind == MAXIMIN:
            raise ArgumentError("incremental evaluation is defined for discrepancies only")
        u = _unit(points)
        self.kind = kind
        self.d = u.shape[1]
        self._points = [row for row in u]
        self.single_sum = float(_centered_single(u).sum()) if kind == CENTERED_L2 else 0.0
        self.pair_sum = float(_cross(kind, u, u).sum())
        self._pool: np.ndarray | None = None
        self._pool_cross: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        return np.array(self._points)

    @property
    def value(self) -> float:
        return _assemble(self.kind, self.d, self.n, self.single_sum, self.pair_sum)

    def _check_candidates(self, candidates) -> np.ndarray:
        c = np.atleast_2d(np.asarray(candidates, dtype=float))
        if c.shape[1] != self.d:
            raise ArgumentError(f"candidate dimension {c.shape[1]} != design dimension {self.d}")
        return _unit(c)

    def _values_with(self, c: np.ndarray, cross_sums: np.ndarray) -> np.ndarray:
        n1 = self.n + 1
        pair = self.pair_sum + 2.0 * cross_sums + _self_kernel(self.kind, c)
        value = _constant(self.kind, self.d) + pair / n1**2
        if self.kind == CENTERED_L2:
            value = value - 2.0 / n1 * (self.single_sum + _centered_single(c))
        return value

    def values_with(self, candidates) -> np.ndarray:
        """Squared discrepancy of the current set plus each candidate on its own."""
        c = self._check_candidates(candidates)
        cross = _cross(self.kind, c, self.points).sum(axis=1)
        return self._values_with(c, cross)

    def add(self, point) -> None:
        c = self._check_candidates(point)
        if c.shape[0] != 1:
            raise ArgumentError("add() takes a single point")
        cross = float(_cross(self.kind, c, self.points).sum())
        if self.kind == CENTERED_L2:
            self.single_sum += float(_centered_single(c)[0])
        self.pair_sum += 2.0 * cross + float(_self_kernel(self.kind, c)[0])
        if self._pool is not None:
            self._pool_cross += _cross(self.kind, self._pool, c)[:, 0]
        self._points.append(c[0])

    # pool caching -------------------------------------------------------

    def attach_pool(self, pool) -> None:
        p = self._check_candidates(pool)
        self._pool = p
        self._pool_cross = _cross(self.kind, p, self.points).sum(axis=1)

    def pool_values(self) -> np.ndarray:
        """Squared discrepancy after adding each pool point, from cached cross sums."""
        if self._pool is None:
            raise ArgumentError("no candidate pool attached")
        return self._values_with(self._pool, self._pool_cross)

    def rebuild(self) -> None:
        """Recompute all running sums from the stored points."""
        pool = self._pool
        self.__init__(self.points, self.kind)
        if pool is not None:
            self.attach_pool(pool)


def discrepancy_with_added_point(design, candidate, kind: str = CENTERED_L2) -> float:
    """Squared discrepancy of ``design`` with ``candidate`` appended."""
    inc = IncrementalDiscrepancy(design, kind)
    c = np.asarray(candidate, dtype=float)
    if c.ndim != 1:
        raise ArgumentError("candidate must be a single point")
    return float(inc.values_with(c)[0])
