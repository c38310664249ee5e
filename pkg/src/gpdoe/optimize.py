"""Simulated-annealing optimization of Latin hypercubes, and greedy augmentation.

Moves swap the values of one column between two rows. The within-stratum
offsets travel with their stratum, so every move is an involution and the
Latin hypercube structure can never be broken.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np

from gpdoe import criteria
from gpdoe.design import Design, is_lhs, make_rng
from gpdoe.errors import ArgumentError


def _load_defaults() -> dict:
    text = resources.files("gpdoe").joinpath("data/anneal_default.json").read_text()
    return json.loads(text)


_DEFAULTS = _load_defaults()


@dataclass(frozen=True)
class AnnealConfig:
    """Annealing schedule.

    ``initial_temperature=None`` calibrates the start temperature so that
    roughly ``target_acceptance`` of worsening probe moves would be accepted.
    ``initial_jitter=None`` means ``2 * n`` random moves before annealing.
    """

    criterion: str = _DEFAULTS["criterion"]
    initial_temperature: float | None = _DEFAULTS["initial_temperature"]
    cooling_factor: float = _DEFAULTS["cooling_factor"]
    iterations_per_temperature: int = _DEFAULTS["iterations_per_temperature"]
    total_temperature_steps: int = _DEFAULTS["total_temperature_steps"]
    initial_jitter: int | None = _DEFAULTS["initial_jitter"]
    calibration_moves: int = _DEFAULTS["calibration_moves"]
    target_acceptance: float = _DEFAULTS["target_acceptance"]
    seed: int = _DEFAULTS["seed"]

    def __post_init__(self):
        object.__setattr__(self, "criterion", criteria.criterion_kind(self.criterion))
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ArgumentError("initial_temperature must be > 0")
        if not 0.0 < self.cooling_factor < 1.0:
            raise ArgumentError("cooling_factor must lie strictly inside (0, 1)")
        if self.iterations_per_temperature < 1:
            raise ArgumentError("iterations_per_temperature must be >= 1")
        if self.total_temperature_steps < 0:
            raise ArgumentError("total_temperature_steps must be >= 0")
        if self.initial_jitter is not None and self.initial_jitter < 0:
            raise ArgumentError("initial_jitter must be >= 0")
        if self.calibration_moves < 1:
            raise ArgumentError("calibration_moves must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ArgumentError("target_acceptance must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "AnnealConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown annealing options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnnealTrace:
    step: list[int] = field(default_factory=list)
    temperature: list[float] = field(default_factory=list)
    current: list[float] = field(default_factory=list)
    best: list[float] = field(default_factory=list)
    accepted: list[bool] = field(default_factory=list)
    initial_temperature: float | None = None
    initial_value: float | None = None

    def __len__(self) -> int:
        return len(self.step)

    def record(self, step, temperature, current, best, accepted) -> None:
        self.step.append(step)
        self.temperature.append(temperature)
        self.current.append(current)
        self.best.append(best)
        self.accepted.append(accepted)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "temperature", "current", "best", "accepted"])
        for row in zip(self.step, self.temperature, self.current, self.best, self.accepted):
            s, t, c, b, a = row
            w.writerow([s, repr(t), repr(c), repr(b), int(a)])
        return buf.getvalue()


# ------------------------------------------------------------------ moves


def pick_move(rng: np.random.Generator, n: int, d: int) -> tuple[int, int, int]:
    """Uniform column and uniform pair of distinct rows."""
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    k = int(rng.integers(d))
    return i, j, k


def apply_exchange(points: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
    out = np.array(points, dtype=float, copy=True)
    out[i, k], out[j, k] = out[j, k], out[i, k]
    return out


def exchange_move(design: Design, rng: np.random.Generator) -> Design:
    """Swap one column's values between two distinct rows."""
    if design.n < 2:
        raise ArgumentError("an exchange move needs at least two points")
    i, j, k = pick_move(rng, design.n, design.d)
    return design.with_points(apply_exchange(design.points, i, j, k))


class _State:
    """Criterion bookkeeping for O(n d) evaluation of a single exchange.

    ``value`` is always expressed in the minimizing direction (maximin is
    negated).
    """

    def __init__(self, u: np.ndarray, kind: str):
        self.kind = kind
        self.u = np.array(u, dtype=float, copy=True)
        n = self.u.shape[0]
        if kind == criteria.MAXIMIN:
            diff = self.u[:, None, :] - self.u[None, :, :]
            self.m = np.einsum("ijk,ijk->ij", diff, diff)
            np.fill_diagonal(self.m, np.inf)
        else:
            self.m = criteria._cross(kind, self.u, self.u)
            self.single = criteria._centered_single(self.u) if kind == criteria.CENTERED_L2 else np.zeros(n)
        self.value = self._value_of(self.m, self.single if kind != criteria.MAXIMIN else None)

    def _value_of(self, m, single) -> float:
        n, d = self.u.shape
        if self.kind == criteria.MAXIMIN:
            return -math.sqrt(float(m.min()))
        return criteria._assemble(self.kind, d, n, float(single.sum()), float(m.sum()))

    def _rows(self, u: np.ndarray, i: int, j: int) -> np.ndarray:
        sub = u[[i, j]]
        if self.kind == criteria.MAXIMIN:
            diff = sub[:, None, :] - u[None, :, :]
            r = np.einsum("ijk,ijk->ij", diff, diff)
            r[0, i] = np.inf
            r[1, j] = np.inf
            return r
        return criteria._cross(self.kind, sub, u)

    def propose(self, i: int, j: int, k: int):
        u = self.u.copy()
        u[i, k], u[j, k] = u[j, k], u[i, k]
        rows = self._rows(u, i, j)
        m = self.m.copy()
        m[[i, j], :] = rows
        m[:, [i, j]] = rows.T
        single = None
        if self.kind != criteria.MAXIMIN:
            single = self.single.copy()
            if self.kind == criteria.CENTERED_L2:
                single[[i, j]] = criteria._centered_single(u[[i, j]])
        return self._value_of(m, single), (u, m, single)

    def commit(self, value: float, payload) -> None:
        self.u, self.m, single = payload
        if single is not None:
            self.single = single
        self.value = value


def _signed(kind: str, value: float) -> float:
    """Convert between internal minimizing value and reported criterion value."""
    return -value if kind == criteria.MAXIMIN else value


def calibrate_temperature(state: _State, rng: np.random.Generator, moves: int, target: float) -> float:
    """Temperature at which the mean worsening probe move is accepted with probability ``target``."""
    n, d = state.u.shape
    worse = []
    for _ in range(moves):
        value, _ = state.propose(*pick_move(rng, n, d))
        delta = value - state.value
        if delta > 0:
            worse.append(delta)
    if not worse:
        return max(abs(state.value), 1.0) * 1e-6
    return float(np.mean(worse)) / -math.log(target)


def anneal_lhs(initial: Design, config: AnnealConfig | None = None) -> tuple[Design, AnnealTrace]:
    """Metropolis simulated annealing with geometric cooling.

    Returns the best design met during the run (not necessarily the last
    accepted state) and a per-move trace.
    """
    config = config or AnnealConfig()
    if not is_lhs(initial):
        raise ArgumentError("annealing starts from a Latin hypercube design")
    if initial.n < 2:
        raise ArgumentError("annealing needs at least two points")
    kind = config.criterion
    rng = make_rng(config.seed)
    n, d = initial.n, initial.d

    state = _State(initial.points, kind)
    best_u, best_value = state.u.copy(), state.value
    trace = AnnealTrace(initial_value=_signed(kind, state.value))

    jitter = 2 * n if config.initial_jitter is None else config.initial_jitter
    for _ in range(jitter):
        value, payload = state.propose(*pick_move(rng, n, d))
        state.commit(value, payload)
    if state.value < best_value:
        best_u, best_value = state.u.copy(), state.value

    if config.total_temperature_steps > 0:
        if config.initial_temperature is None:
            temperature = calibrate_temperature(state, rng, config.calibration_moves, config.target_acceptance)
        else:
            temperature = float(config.initial_temperature)
        trace.initial_temperature = temperature

        step = 0
        for _ in range(config.total_temperature_steps):
            for _ in range(config.iterations_per_temperature):
                value, payload = state.propose(*pick_move(rng, n, d))
                delta = value - state.value
                accept = delta <= 0.0 or rng.random() < math.exp(-delta / temperature)
                if accept:
                    state.commit(value, payload)
                    if state.value < best_value:
                        best_u, best_value = state.u.copy(), state.value
                trace.record(step, temperature, _signed(kind, state.value), _signed(kind, best_value), accept)
                step += 1
            temperature *= config.cooling_factor

    result = replace(initial, points=best_u, kind="LHS", seed=config.seed)
    return result, trace


def optimized_lhs(n: int, d: int, config: AnnealConfig | None = None) -> tuple[Design, AnnealTrace]:
    """Random LHS drawn from ``config.seed`` and annealed under the same seed stream."""
    from gpdoe.design import generate_lhs

    config = config or AnnealConfig()
    start_seed, anneal_seed = np.random.SeedSequence(config.seed).spawn(2)
    initial = generate_lhs(n, d, make_rng(start_seed))
    anneal_cfg = replace(config, seed=int(anneal_seed.generate_state(1, np.uint64)[0]))
    design, trace = anneal_lhs(initial, anneal_cfg)
    return replace(design, seed=config.seed), trace


# ------------------------------------------------------------ augmentation


def augment_by_mean_distance(design: Design, candidates: Design | np.ndarray, count: int) -> Design:
    """Greedily append ``count`` candidates, each maximizing its mean distance to the current points."""
    pool = candidates.points if isinstance(candidates, Design) else np.atleast_2d(np.asarray(candidates, dtype=float))
    if pool.shape[0] < 1:
        raise ArgumentError("candidate pool is empty")
    if pool.shape[1] != design.d:
        raise ArgumentError(f"candidate dimension {pool.shape[1]} != design dimension {design.d}")
    if count < 0 or count > pool.shape[0]:
        raise ArgumentError(f"cannot pick {count} points from a pool of {pool.shape[0]}")

    pts = [row for row in design.points]
    dist_sum = np.sqrt(((pool[:, None, :] - design.points[None, :, :]) ** 2).sum(axis=2)).sum(axis=1)
    available = np.ones(pool.shape[0], dtype=bool)
    for _ in range(count):
        score = np.where(available, dist_sum / len(pts), -np.inf)
        best = int(np.argmax(score))
        available[best] = False
        chosen = pool[best]
        pts.append(chosen)
        dist_sum += np.sqrt(((pool - chosen) ** 2).sum(axis=1))
    return Design(np.array(pts), kind="Augmented", bounds=design.bounds)
