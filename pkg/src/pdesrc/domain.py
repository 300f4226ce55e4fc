"""Geometry and problem-description types shared by the whole pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned monitored region."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be 1-D arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("upper must exceed lower in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all(pts >= self.lower - margin, axis=1) & np.all(
            pts <= self.upper + margin, axis=1
        )
        return ok if np.asarray(points).ndim > 1 else ok[0]

    def shrunk(self, fraction: float) -> "Box":
        """Concentric sub-box keeping the given central fraction per axis."""
        c = (self.lower + self.upper) / 2.0
        half = self.widths * fraction / 2.0
        return Box(c - half, c + half)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dimension))


@dataclass(frozen=True)
class UniformGrid:
    """Lexicographically ordered lattice origin + n * spacing."""

    counts: tuple
    spacings: tuple
    origin: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        spacings = tuple(float(s) for s in self.spacings)
        origin = tuple(float(o) for o in self.origin)
        if not (len(counts) == len(spacings) == len(origin)):
            raise ValueError("counts, spacings and origin must share a length")
        if any(c < 1 for c in counts):
            raise ValueError("grid counts must be positive")
        if any(s <= 0 for s in spacings):
            raise ValueError("grid spacings must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "spacings", spacings)
        object.__setattr__(self, "origin", origin)

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def positions(self) -> np.ndarray:
        """All lattice points, last index varying fastest (lexicographic)."""
        axes = [
            self.origin[i] + self.spacings[i] * np.arange(self.counts[i])
            for i in range(self.dimension)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dimension)


@dataclass(frozen=True)
class SensorNetwork:
    """Sensor positions, common sampling instants and the monitored region."""

    positions: np.ndarray
    times: np.ndarray
    region: Box
    uniform_grid: Optional[UniformGrid] = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if pos.shape[1] != self.region.dimension:
            raise ValueError("sensor positions do not match the region dimension")
        if times[0] != 0.0:
            raise ValueError("sampling instants must start at t = 0")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("sampling instants must be strictly increasing")
        uniq = np.unique(pos, axis=0)
        if uniq.shape[0] != pos.shape[0]:
            raise ValueError("sensor positions must be distinct")
        if self.uniform_grid is not None:
            expect = self.uniform_grid.positions()
            if expect.shape != pos.shape or not np.allclose(expect, pos, atol=1e-12):
                raise ValueError("positions do not match the declared uniform grid")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "times", times)

    @property
    def n_sensors(self) -> int:
        return self.positions.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def window(self) -> float:
        """Observation window length T = t_L."""
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        if self.times.size < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    def restricted_to(self, n_times: int) -> "SensorNetwork":
        """Same sensors, first ``n_times`` sampling instants."""
        if not 1 <= n_times <= self.n_times:
            raise ValueError("n_times out of range")
        return SensorNetwork(self.positions, self.times[:n_times], self.region, self.uniform_grid)

    @staticmethod
    def uniform(grid: UniformGrid, times, region: Optional[Box] = None) -> "SensorNetwork":
        if region is None:
            lo = np.asarray(grid.origin)
            hi = lo + (np.asarray(grid.counts) - 1) * np.asarray(grid.spacings)
            hi = np.where(hi > lo, hi, lo + np.asarray(grid.spacings))
            region = Box(lo, hi)
        return SensorNetwork(grid.positions(), np.asarray(times, float), region, grid)

    @staticmethod
    def random(region: Box, n_sensors: int, times, seed: int) -> "SensorNetwork":
        rng = np.random.default_rng(seed)
        return SensorNetwork(region.sample(rng, n_sensors), np.asarray(times, float), region)


@dataclass(frozen=True)
class SourceSet:
    """Point sources: intensity, activation instant and location per source."""

    intensities: np.ndarray
    activations: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.intensities, dtype=float))
        tau = np.atleast_1d(np.asarray(self.activations, dtype=float))
        xi = np.asarray(self.locations, dtype=float)
        if xi.ndim == 1:
            xi = xi.reshape(c.size, -1) if c.size else xi.reshape(0, 1)
        if not (c.shape[0] == tau.shape[0] == xi.shape[0]):
            raise ValueError("intensities, activations and locations disagree in length")
        object.__setattr__(self, "intensities", c)
        object.__setattr__(self, "activations", tau)
        object.__setattr__(self, "locations", xi)

    @property
    def count(self) -> int:
        return self.intensities.size

    @property
    def dimension(self) -> int:
        return self.locations.shape[1]

    def single(self, m: int) -> "SourceSet":
        return SourceSet(
            self.intensities[m : m + 1],
            self.activations[m : m + 1],
            self.locations[m : m + 1],
        )

    def union(self, other: "SourceSet") -> "SourceSet":
        return SourceSet(
            np.concatenate([self.intensities, other.intensities]),
            np.concatenate([self.activations, other.activations]),
            np.concatenate([self.locations, other.locations]),
        )

    @staticmethod
    def empty(dimension: int) -> "SourceSet":
        return SourceSet(np.zeros(0), np.zeros(0), np.zeros((0, dimension)))


@dataclass(frozen=True)
class DomainScaling:
    """Per-dimension affine map keeping scaled coordinates in [0, 2*pi*headroom).

    Recovered locations come from principal-branch angles of unit-modulus
    frequencies, so the scaled coordinates must stay inside one period.  The
    map never stretches a region that already fits (alpha <= 1), which keeps
    the effective spatial frequencies as low as the geometry allows.
    """

    alpha: np.ndarray
    beta: np.ndarray
    T: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if a.shape != b.shape:
            raise ValueError("alpha and beta must share a shape")
        if np.any(a <= 0):
            raise ValueError("alpha must be strictly positive")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def dimension(self) -> int:
        return self.alpha.size

    @staticmethod
    def for_region(region: Box, T: float, headroom: float = 0.8) -> "DomainScaling":
        if not 0 < headroom <= 1:
            raise ValueError("headroom must lie in (0, 1]")
        limit = 2.0 * math.pi * headroom
        alpha = np.minimum(1.0, limit / region.widths)
        beta = -alpha * region.lower
        return DomainScaling(alpha, beta, float(T))

    @staticmethod
    def identity(dimension: int, T: float) -> "DomainScaling":
        return DomainScaling(np.ones(dimension), np.zeros(dimension), float(T))

    def to_scaled(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.alpha + self.beta

    def from_scaled(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.beta) / self.alpha
