"""Gaussian-process metamodel with a linear trend and generalized exponential correlation.

    Y(x) = b0 + sum_j b_j x_j + Z(x),   Cov(Z(x), Z(u)) = s2 * prod_l exp(-theta_l |x_l - u_l|^p_l)

The trend coefficients and the process variance are profiled out of the
likelihood in closed form (generalized least squares), leaving the
correlation parameters to a bounded multi-start Nelder-Mead search.
All inputs are unit-cube coordinates.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from gpdoe import _kernels
from gpdoe._io import atomic_write_text
from gpdoe.design import Design, lhs_points, make_rng
from gpdoe.errors import ArgumentError, DataError, NumericalError

_LOG_2PI = math.log(2.0 * math.pi)
_FAIL = 1e20


@dataclass(frozen=True)
class CorrelationParams:
    theta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if p.shape == (1,) and theta.shape[0] > 1:
            p = np.full_like(theta, p[0])
        if theta.shape != p.shape or theta.ndim != 1:
            raise ArgumentError("theta and p must be vectors of equal length")
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise ArgumentError("theta must be finite and >= 0")
        if np.any(p <= 0) or np.any(p > 2):
            raise ArgumentError("p must lie in (0, 2]")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.theta.shape[0]


def correlation(x, u, corr: CorrelationParams) -> float:
    """prod_l exp(-theta_l |x_l - u_l|^p_l)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape or x.shape != (corr.d,):
        raise ArgumentError(f"points of dimension {corr.d} expected, got {x.shape} and {u.shape}")
    return float(np.exp(-np.sum(corr.theta * np.abs(x - u) ** corr.p)))


def correlation_matrix(a: np.ndarray, b: np.ndarray, corr: CorrelationParams) -> np.ndarray:
    """Correlations between rows of ``a`` (m, d) and ``b`` (k, d)."""
    expo = np.zeros((a.shape[0], b.shape[0]))
    for l in range(corr.d):
        if corr.theta[l] == 0.0:
            continue
        expo += corr.theta[l] * np.abs(a[:, l, None] - b[None, :, l]) ** corr.p[l]
    return np.exp(-expo)


def trend_basis(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x])


@dataclass(frozen=True)
class FitOptions:
    """Controls for maximum-likelihood fitting.

    ``p_mode`` is ``"estimate"`` (default), ``"gaussian"`` (p = 2) or
    ``"exponential"`` (p = 1). ``active_dims`` restricts the correlation to
    a subset of inputs; theta is frozen at 0 on the others. ``n_starts``
    defaults to 10 per correlated input. ``isotropic_starts`` extra starts
    put the same theta on every input, spread log-uniformly over the theta
    box, with p at the middle of its start range. The ``polish`` best local
    optima are then searched again from where they stopped, up to
    ``restarts`` times each, while the objective still improves by more than
    ``restart_tolerance``.
    """

    p_mode: str = "estimate"
    n_starts: int | None = None
    log10_theta_bounds: tuple[float, float] = (-3.0, 3.0)
    p_bounds: tuple[float, float] = (0.1, 2.0)
    p_start_bounds: tuple[float, float] = (0.5, 2.0)
    nugget: float = 1e-8
    max_nugget: float = 1e-2
    max_evaluations: int | None = None
    isotropic_starts: int = 7
    polish: int = 3
    restarts: int = 3
    restart_tolerance: float = 1e-4
    active_dims: tuple[int, ...] | None = None
    penalty: float = 0.01
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.p_mode not in ("estimate", "gaussian", "exponential"):
            raise ArgumentError(f"unknown p_mode {self.p_mode!r}")
        if self.n_starts is not None and self.n_starts < 1:
            raise ArgumentError("n_starts must be >= 1")
        if min(self.isotropic_starts, self.polish, self.restarts) < 0:
            raise ArgumentError("isotropic_starts, polish and restarts must be >= 0")
        if not 0 < self.p_bounds[0] <= self.p_bounds[1] <= 2:
            raise ArgumentError("p bounds must satisfy 0 < low <= high <= 2")
        if self.penalty < 0:
            raise ArgumentError("penalty must be >= 0")
        if self.nugget < 0 or self.max_nugget < self.nugget:
            raise ArgumentError("need 0 <= nugget <= max_nugget")
        if self.active_dims is not None:
            object.__setattr__(self, "active_dims", tuple(int(k) for k in self.active_dims))

    @classmethod
    def from_dict(cls, data: dict) -> "FitOptions":
        data = dict(data)
        for key in ("log10_theta_bounds", "p_bounds", "p_start_bounds", "active_dims"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


class _Likelihood:
    """Profiled log-likelihood for a fixed learning set."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = x
        self.y = y
        self.n, self.d = x.shape
        self.f = trend_basis(x)
        iu = np.triu_indices(self.n, 1)
        self.iu = iu
        absdiff = np.abs(x[iu[0]] - x[iu[1]])  # (pairs, d)
        with np.errstate(divide="ignore"):
            self.log_absdiff = np.ascontiguousarray(np.log(absdiff))
        self._pi = np.ascontiguousarray(iu[0], dtype=np.int64)
        self._pj = np.ascontiguousarray(iu[1], dtype=np.int64)

    def fast(self, theta: np.ndarray, p: np.ndarray, nugget: float) -> float:
        """Compiled log-likelihood; -inf when the factorization fails."""
        return _kernels.loglik(self.log_absdiff, self._pi, self._pj, self.n, theta, p, nugget, self.f, self.y)[0]

    def corr_matrix(self, theta: np.ndarray, p: np.ndarray, nugget: float) -> np.ndarray:
        active = theta > 0
        if np.any(active):
            expo = np.exp(self.log_absdiff[:, active] * p[active]) @ theta[active]
        else:
            expo = np.zeros(self.log_absdiff.shape[0])
        r = np.empty((self.n, self.n))
        vals = np.exp(-expo)
        r[self.iu] = vals
        r[self.iu[1], self.iu[0]] = vals
        np.fill_diagonal(r, 1.0 + nugget)
        return r

    def solve(self, theta, p, nugget):
        """Cholesky factor, GLS trend, profiled variance and log-likelihood.

        Raises ``LinAlgError`` when the matrix is not numerically positive definite.
        """
        r = self.corr_matrix(theta, p, nugget)
        chol = cholesky(r, lower=True, check_finite=False)
        ft = solve_triangular(chol, self.f, lower=True, check_finite=False)
        yt = solve_triangular(chol, self.y, lower=True, check_finite=False)
        q, rr = np.linalg.qr(ft)
        beta = solve_triangular(rr, q.T @ yt, check_finite=False)
        resid = yt - ft @ beta
        sigma2 = float(resid @ resid) / self.n
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        ll = -0.5 * self.n * math.log(max(sigma2, 1e-300)) - 0.5 * logdet - 0.5 * self.n * (1.0 + _LOG_2PI)
        return chol, beta, sigma2, ll


def _validate_learning(x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(x, Design):
        bounds = x.bounds
        x = x.points
    else:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        bounds = np.tile([0.0, 1.0], (x.shape[1], 1))
    y = np.asarray(y, dtype=float).ravel()
    n, d = x.shape
    if y.shape[0] != n:
        raise DataError(f"{n} design points but {y.shape[0]} outputs")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise DataError("non-finite learning data")
    if n <= d + 1:
        raise DataError(f"need n > d + 1 to identify the linear trend (n={n}, d={d})")
    if np.unique(x, axis=0).shape[0] != n:
        raise DataError("duplicate design points")
    return x, y, bounds


def log_likelihood(design, outputs, corr: CorrelationParams, nugget: float = 0.0) -> float:
    """Profiled log-likelihood (trend and variance at their GLS estimates).

    Raises ``NumericalError`` if the correlation matrix cannot be factorized.
    """
    x, y, _ = _validate_learning(design, outputs)
    if corr.d != x.shape[1]:
        raise ArgumentError("correlation parameters do not match the design dimension")
    try:
        return _Likelihood(x, y).solve(corr.theta, corr.p, nugget)[3]
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"correlation matrix not positive definite: {exc}") from None


@dataclass(frozen=True, eq=False)
class GpModel:
    learning_design: Design
    learning_outputs: np.ndarray
    beta: np.ndarray
    sigma2: float
    corr: CorrelationParams
    nugget: float
    log_likelihood: float
    factor: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.learning_design.d

    @classmethod
    def build(cls, design: Design, outputs, corr: CorrelationParams, nugget: float, log_likelihood=None) -> "GpModel":
        """Assemble a model at fixed correlation parameters (trend and variance by GLS)."""
        x, y = design.points, np.asarray(outputs, dtype=float)
        lik = _Likelihood(x, y)
        chol, beta, sigma2, ll = lik.solve(corr.theta, corr.p, nugget)
        weights = cho_solve((chol, True), y - lik.f @ beta, check_finite=False)
        return cls(design, y, beta, sigma2, corr, nugget, ll if log_likelihood is None else log_likelihood, chol, weights)

    def _points(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.d:
            raise ArgumentError(f"model has {self.d} inputs, got points of dimension {x2.shape[1]}")
        return x2, single

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Kriging mean and variance at unit-cube points."""
        x2, single = self._points(x)
        r = correlation_matrix(x2, self.learning_design.points, self.corr)
        mean = trend_basis(x2) @ self.beta + r @ self.weights
        v = solve_triangular(self.factor, r.T, lower=True, check_finite=False)
        var = np.maximum(self.sigma2 * (1.0 - np.sum(v * v, axis=0)), 0.0)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var

    # ------------------------------------------------------------ persistence

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "sigma2": self.sigma2,
            "theta": self.corr.theta.tolist(),
            "p": self.corr.p.tolist(),
            "nugget": self.nugget,
            "log_likelihood": self.log_likelihood,
            "bounds": self.learning_design.bounds.tolist(),
            "design_kind": self.learning_design.kind,
            "learning_points": self.learning_design.points.tolist(),
            "learning_outputs": self.learning_outputs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GpModel":
        design = Design(np.array(data["learning_points"]), kind=data.get("design_kind", "External"), bounds=data["bounds"])
        corr = CorrelationParams(data["theta"], data["p"])
        model = cls.build(design, data["learning_outputs"], corr, float(data["nugget"]), data.get("log_likelihood"))
        # keep the stored GLS estimates verbatim
        return cls(design, model.learning_outputs, np.array(data["beta"], dtype=float), float(data["sigma2"]), corr,
                   model.nugget, model.log_likelihood, model.factor,
                   cho_solve((model.factor, True), model.learning_outputs - trend_basis(design.points) @ np.array(data["beta"])))

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict_mean(model: GpModel, x):
    return model.predict(x)[0]


def predict_variance(model: GpModel, x):
    return model.predict(x)[1]


# -------------------------------------------------------------------- fit


def _unpack(z: np.ndarray, active: np.ndarray, d: int, fixed_p: float | None) -> tuple[np.ndarray, np.ndarray]:
    k = active.shape[0]
    theta = np.zeros(d)
    theta[active] = 10.0 ** z[:k]
    p = np.full(d, 2.0 if fixed_p is None else fixed_p)
    p[active] = z[k:] if fixed_p is None else fixed_p
    return theta, p


def fit(design, outputs, options: FitOptions | None = None) -> GpModel:
    """Maximum-likelihood fit over (theta, p) with multi-start Nelder-Mead.

    The nugget starts at ``options.nugget`` and grows tenfold whenever no
    start yields a positive definite correlation matrix, up to
    ``options.max_nugget``.
    """
    options = options or FitOptions()
    x, y, bounds = _validate_learning(design, outputs)
    if not isinstance(design, Design):
        design = Design(x, bounds=bounds)
    n, d = x.shape
    active = np.arange(d) if options.active_dims is None else np.array(sorted(set(options.active_dims)), dtype=int)
    if active.size and (active.min() < 0 or active.max() >= d):
        raise ArgumentError(f"active_dims out of range for d={d}")
    fixed_p = {"estimate": None, "gaussian": 2.0, "exponential": 1.0}[options.p_mode]
    k = active.size
    lik = _Likelihood(x, y)

    if k == 0:
        return _finish(design, y, lik, np.zeros(d), np.full(d, 2.0), options)

    lo = [options.log10_theta_bounds[0]] * k
    hi = [options.log10_theta_bounds[1]] * k
    start_lo, start_hi = list(lo), list(hi)
    if fixed_p is None:
        lo += [options.p_bounds[0]] * k
        hi += [options.p_bounds[1]] * k
        start_lo += [options.p_start_bounds[0]] * k
        start_hi += [options.p_start_bounds[1]] * k
    lo, hi = np.array(lo), np.array(hi)
    start_lo, start_hi = np.array(start_lo), np.array(start_hi)
    n_starts = options.n_starts or 10 * k
    starts = start_lo + lhs_points(n_starts, lo.size, make_rng(options.seed)) * (start_hi - start_lo)
    if options.isotropic_starts:
        iso = np.empty((options.isotropic_starts, lo.size))
        iso[:, :k] = np.linspace(lo[0], hi[0], options.isotropic_starts + 2)[1:-1, None]
        if fixed_p is None:
            iso[:, k:] = 0.5 * (start_lo[k] + start_hi[k])
        starts = np.vstack([starts, iso])
    max_eval = options.max_evaluations or 100 * lo.size

    nugget = options.nugget
    while True:
        def objective(z, nugget=nugget):
            theta, p = _unpack(np.clip(z, lo, hi), active, d, fixed_p)
            ll = lik.fast(theta, p, nugget)
            if not np.isfinite(ll):
                return _FAIL
            return -ll + options.penalty * n * float(theta.sum())

        def local(z0):
            res = minimize(objective, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                           options={"maxfev": max_eval, "xatol": 1e-3, "fatol": 1e-6})
            z = np.clip(res.x, lo, hi)
            return objective(z), z

        def refine(result):
            # Nelder-Mead stalls on a collapsed simplex in many dimensions;
            # restarting from the stopping point rebuilds the simplex.
            value, z = result
            for _ in range(options.restarts):
                v_new, z_new = local(z)
                if v_new < value:
                    gain = value - v_new
                    value, z = v_new, z_new
                    if gain > options.restart_tolerance:
                        continue
                break
            return value, z

        results = _map(local, starts, options.threads)
        order = sorted(range(len(results)), key=lambda i: (results[i][0], i))
        chosen = [i for i in order[:options.polish] if results[i][0] < _FAIL]
        for i, refined in zip(chosen, _map(refine, [results[i] for i in chosen], options.threads)):
            results[i] = refined
        values = np.array([r[0] for r in results])
        best = int(np.argmin(values))  # first index wins ties
        if values[best] < _FAIL:
            theta, p = _unpack(results[best][1], active, d, fixed_p)
            try:
                return _finish(design, y, lik, theta, p, options, nugget)
            except NumericalError:
                pass
        if nugget >= options.max_nugget:
            raise NumericalError("correlation matrix not positive definite at the maximum nugget")
        nugget = min(max(nugget, 1e-12) * 10.0, options.max_nugget)


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _finish(design, y, lik, theta, p, options, nugget=None) -> GpModel:
    nugget = options.nugget if nugget is None else nugget
    while True:
        try:
            return GpModel.build(design, y, CorrelationParams(theta, p), nugget)
        except (LinAlgError, ValueError):
            if nugget >= options.max_nugget:
                raise NumericalError("correlation matrix not positive definite at the maximum nugget") from None
            nugget = min(max(nugget, 1e-12) * 10.0, options.max_nugget)
