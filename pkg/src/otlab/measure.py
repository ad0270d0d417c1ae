"""Measures on finite spaces, densities, push-forwards and entropy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from otlab.space import MetricSpace, geodesic_point

PROB_TOL = 1e-9


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class Measure:
    """Nonnegative per-vertex masses."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float)
        if m.ndim != 1:
            raise MeasureError("masses must be a flat vector")
        if np.any(~np.isfinite(m)) or np.any(m < 0):
            raise MeasureError("masses must be finite and nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.masses > 0)

    def __len__(self) -> int:
        return len(self.masses)

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return abs(self.total - 1.0) <= tol

    def to_dict(self) -> dict:
        return {"masses": [float(x) for x in self.masses]}

    @classmethod
    def from_dict(cls, data: Mapping, n: int | None = None) -> "Measure":
        mu = cls(np.asarray(data["masses"], dtype=float))
        if n is not None and len(mu) != n:
            raise MeasureError(f"measure has {len(mu)} masses, space has {n} vertices")
        return mu


def dirac(n: int, v: int, mass: float = 1.0) -> Measure:
    m = np.zeros(n)
    m[v] = mass
    return Measure(m)


def uniform(n: int, support: Sequence[int] | None = None) -> Measure:
    """Uniform probability on ``support`` (all vertices by default)."""
    m = np.zeros(n)
    idx = np.arange(n) if support is None else np.asarray(support, dtype=int)
    m[idx] = 1.0 / len(idx)
    return Measure(m)


def counting(n: int) -> Measure:
    return Measure(np.ones(n))


@dataclass(frozen=True)
class Density:
    """Density of a measure ``mu`` relative to a reference measure ``m``.

    ``values[v]`` is ``mu(v) / m(v)`` where ``m(v) > 0`` and ``nan``
    elsewhere.  ``singular`` lists vertices with ``m(v) = 0`` carrying
    positive ``mu`` mass, i.e. where ``mu`` is not absolutely continuous.
    """

    values: np.ndarray
    reference: Measure
    singular: tuple[int, ...]
    singular_mass: float = 0.0

    @property
    def absolutely_continuous(self) -> bool:
        return not self.singular

    def measure(self) -> Measure:
        vals = np.nan_to_num(self.values, nan=0.0)
        return Measure(vals * self.reference.masses)


def density_of(mu: Measure, m: Measure) -> Density:
    if len(mu) != len(m):
        raise MeasureError("measure and reference live on different vertex sets")
    ref = m.masses
    vals = np.full(len(ref), np.nan)
    pos = ref > 0
    vals[pos] = mu.masses[pos] / ref[pos]
    sing = np.flatnonzero(~pos & (mu.masses > 0))
    return Density(vals, m, tuple(int(v) for v in sing), float(mu.masses[sing].sum()))


def push_forward(mu: Measure, mapping: Mapping[int, int] | Callable[[int], int] | Sequence[int],
                 n_target: int | None = None) -> Measure:
    """Image measure: each target collects the mass of its preimage."""
    n_target = len(mu) if n_target is None else n_target
    get = mapping if callable(mapping) else mapping.__getitem__
    out = np.zeros(n_target)
    for v in mu.support:
        try:
            t = get(int(v))
        except (KeyError, IndexError):
            raise MeasureError(f"map undefined at vertex {v} carrying mass {mu.masses[v]}") from None
        out[t] += mu.masses[v]
    return Measure(out)


def relative_entropy(rho: Density, m: Measure | None = None) -> float:
    """``sum rho log rho dm`` with ``0 log 0 = 0``; ``+inf`` if not absolutely continuous."""
    m = rho.reference if m is None else m
    total = rho.measure().total + rho.singular_mass
    if not abs(total - 1.0) <= PROB_TOL:
        raise MeasureError(f"density does not describe a probability measure (total {total})")
    if rho.singular:
        return float("inf")
    r = np.nan_to_num(rho.values, nan=0.0)
    pos = (r > 0) & (m.masses > 0)
    return float(np.sum(r[pos] * np.log(r[pos]) * m.masses[pos]))


def default_radii(space: MetricSpace, levels: int = 8) -> np.ndarray:
    diam = space.diameter
    if diam == 0:
        return np.array([1.0])
    return diam / 2.0 ** np.arange(1, levels + 1)


def doubling_constant(space: MetricSpace, m: Measure, radii: Sequence[float] | None = None) -> float:
    """Largest ratio ``m(B(x, 2r)) / m(B(x, r))`` over vertices and radii (closed balls)."""
    radii = default_radii(space) if radii is None else np.asarray(radii, dtype=float)
    if len(radii) == 0:
        raise MeasureError("empty radius ladder")
    if np.any(radii <= 0):
        raise MeasureError("radii must be positive")
    if m.total <= 0:
        raise MeasureError("reference measure has no mass")
    d = space.dist
    best = 1.0
    for r in radii:
        inner = (d <= r * (1 + 1e-12)) @ m.masses
        outer = (d <= 2 * r * (1 + 1e-12)) @ m.masses
        ok = inner > 0
        if np.any(ok):
            best = max(best, float(np.max(outer[ok] / inner[ok])))
    return best


@dataclass(frozen=True)
class InterpolantDensity:
    density: Density
    max_snap_error: float
    snapped_mass: float


def interpolant_density(plan, t: float, m: Measure) -> InterpolantDensity:
    """Density of ``(e_t)_# plan`` relative to ``m``.

    ``plan`` is any iterable of ``(DiscreteGeodesic, mass)`` entries.  Times
    falling between path vertices snap to the nearest vertex; the largest
    snap error and the mass that had to be snapped are reported.
    """
    out = np.zeros(len(m))
    max_err = 0.0
    snapped = 0.0
    for g, mass in plan:
        v, err = geodesic_point(g, t)
        out[v] += mass
        if err > 0:
            snapped += mass
            max_err = max(max_err, err)
    return InterpolantDensity(density_of(Measure(out), m), max_err, snapped)
