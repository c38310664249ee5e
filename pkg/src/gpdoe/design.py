"""Raw design generation: SRS, LHS and Hammersley point sets.

Points are always stored in unit-cube coordinates. The physical domain is
carried as metadata and only applied when a function is evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from gpdoe._io import atomic_write_text
from gpdoe.errors import ArgumentError, DataError

KINDS = ("SRS", "LHS", "Hammersley", "Augmented", "External")


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent per-replicate generators, stable regardless of execution order."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def unit_bounds(d: int) -> np.ndarray:
    return np.tile([0.0, 1.0], (d, 1))


def _check_bounds(bounds, d: int | None = None) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ArgumentError(f"bounds must have shape (d, 2), got {b.shape}")
    if d is not None and b.shape[0] != d:
        raise ArgumentError(f"bounds describe {b.shape[0]} dimensions, design has {d}")
    if not np.all(np.isfinite(b)):
        raise ArgumentError("bounds must be finite")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ArgumentError("each interval needs lower < upper")
    return b


def to_physical(u, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    return b[:, 0] + np.asarray(u, dtype=float) * (b[:, 1] - b[:, 0])


def to_unit(x, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    return (np.asarray(x, dtype=float) - b[:, 0]) / (b[:, 1] - b[:, 0])


@dataclass(frozen=True, eq=False)
class Design:
    """An n x d point set in unit-cube coordinates.

    ``bounds`` is the physical domain (one ``[lower, upper]`` row per
    dimension); ``physical`` gives the points mapped onto it.
    """

    points: np.ndarray
    kind: str = "External"
    bounds: np.ndarray = field(default=None)
    seed: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ArgumentError(f"design needs shape (n>=1, d>=1), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("design contains non-finite coordinates")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise DataError("unit-cube coordinates must lie in [0, 1]")
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown design kind {self.kind!r}")
        b = unit_bounds(pts.shape[1]) if self.bounds is None else _check_bounds(self.bounds, pts.shape[1])
        pts.flags.writeable = False
        b = np.array(b, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bounds", b)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def physical(self) -> np.ndarray:
        return to_physical(self.points, self.bounds)

    @classmethod
    def from_physical(cls, x, bounds, kind: str = "External", seed: int | None = None) -> "Design":
        b = _check_bounds(bounds)
        u = to_unit(np.atleast_2d(np.asarray(x, dtype=float)), b)
        # absorb rounding at the box faces
        u = np.clip(u, 0.0, 1.0)
        return cls(u, kind=kind, bounds=b, seed=seed)

    def with_points(self, points, kind: str | None = None) -> "Design":
        return replace(self, points=points, kind=kind or self.kind)


def _check_size(n, d) -> None:
    if int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n!r}")
    if int(d) != d or d < 1:
        raise ArgumentError(f"d must be a positive integer, got {d!r}")


def generate_srs(n: int, d: int, rng: np.random.Generator) -> Design:
    """Simple random sample: n i.i.d. uniform points."""
    _check_size(n, d)
    return Design(rng.random((n, d)), kind="SRS")


def lhs_points(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    u = (strata + rng.random((n, d))) / n
    # (j + U)/n can round up into the next stratum when U is within an ulp of 1
    bad = np.floor(u * n) != strata
    u[bad] = (strata[bad] + 0.5) / n
    return u


def generate_lhs(n: int, d: int, rng: np.random.Generator) -> Design:
    """Latin hypercube sample with uniform jitter inside each stratum."""
    _check_size(n, d)
    return Design(lhs_points(n, d, rng), kind="LHS")


def _primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def radical_inverse(i: np.ndarray, base: int) -> np.ndarray:
    """Digit reversal of the integers ``i`` in ``base`` about the radix point."""
    i = np.array(i, dtype=np.int64, copy=True)
    out = np.zeros(i.shape, dtype=float)
    scale = 1.0 / base
    while np.any(i > 0):
        i, digit = np.divmod(i, base)
        out += digit * scale
        scale /= base
    return out


def generate_hammersley(n: int, d: int) -> Design:
    """Hammersley set: point i (1-based) is (i/n, phi_2(i), phi_3(i), phi_5(i), ...)."""
    _check_size(n, d)
    idx = np.arange(1, n + 1)
    cols = [idx / n]
    for base in _primes(d - 1):
        cols.append(radical_inverse(idx, base))
    return Design(np.column_stack(cols), kind="Hammersley")


def is_lhs(points) -> bool:
    """True when every column has exactly one point in each stratum [j/n, (j+1)/n)."""
    u = points.points if isinstance(points, Design) else np.asarray(points, dtype=float)
    n = u.shape[0]
    strata = np.floor(u * n).astype(np.int64)
    expected = np.arange(n)
    return all(np.array_equal(np.sort(strata[:, k]), expected) for k in range(u.shape[1]))


def project(design: Design, dims: Sequence[int]) -> Design:
    """Keep only the coordinates listed in ``dims``, in that order."""
    dims = [int(k) for k in dims]
    if not dims:
        raise ArgumentError("projection needs at least one dimension")
    bad = [k for k in dims if k < 0 or k >= design.d]
    if bad:
        raise ArgumentError(f"dimension indices {bad} out of range for d={design.d}")
    return Design(design.points[:, dims], kind=design.kind, bounds=design.bounds[dims], seed=design.seed)


def scale_to_domain(design: Design, bounds) -> Design:
    """Attach a physical domain; ``result.physical`` holds the mapped points."""
    b = _check_bounds(bounds, design.d)
    return replace(design, bounds=b)


def unscale_to_unit(design: Design) -> Design:
    """Drop the physical domain, leaving the unit-cube design."""
    return replace(design, bounds=unit_bounds(design.d))


# ---------------------------------------------------------------- I/O


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def design_to_csv(design: Design) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k + 1}" for k in range(design.d)])
    for row in design.physical:
        writer.writerow([format(v, ".17g") for v in row])
    return buf.getvalue()


def save_design(design: Design, path: str | os.PathLike) -> None:
    """CSV of physical coordinates plus a ``<path>.json`` sidecar."""
    path = Path(path)
    atomic_write_text(path, design_to_csv(design))
    meta = {
        "kind": design.kind,
        "n": design.n,
        "d": design.d,
        "bounds": design.bounds.tolist(),
        "seed": design.seed,
    }
    atomic_write_text(_sidecar(path), json.dumps(meta, indent=2) + "\n")


def read_points_csv(path: str | os.PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    body = rows[1:] if any(not _is_number(c) for c in rows[0]) else rows
    try:
        data = np.array([[float(c) for c in r] for r in body if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.size == 0:
        raise DataError(f"{path}: no data rows")
    return data


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_design(path: str | os.PathLike, bounds=None) -> Design:
    """Read a design CSV; the sidecar (if present) supplies kind, bounds and seed."""
    path = Path(path)
    x = read_points_csv(path)
    meta = {}
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
    if bounds is None:
        bounds = meta.get("bounds", unit_bounds(x.shape[1]))
    design = Design.from_physical(x, bounds, kind=meta.get("kind", "External"), seed=meta.get("seed"))
    return design
