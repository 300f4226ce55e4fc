"""Forward synthesis: field samples from known sources, noise, oracle measurements.

This module is the test oracle and experiment generator.  Fields are closed
form Green's-function superpositions, never mesh solutions.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .domain import Box, DomainScaling, SensorNetwork, SourceSet
from .errors import AllZeroSignal, ShapeError
from .greens import FieldModel, TemporalFilter, kernel_values


@dataclass(frozen=True)
class SampleMatrix:
    """Field samples phi_n(t_l): one row per sensor, one column per instant."""

    values: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def n_sensors(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def check_against(self, net: SensorNetwork):
        if self.values.shape != (net.n_sensors, net.n_times):
            raise ShapeError(
                f"sample matrix {self.values.shape} does not match network "
                f"({net.n_sensors}, {net.n_times})"
            )


@dataclass(frozen=True)
class MeasurementTensor:
    """Generalised measurements Q(k, r) on the grid k in k_min + {0..shape-1}."""

    values: np.ndarray
    r: int
    T: float
    k_min: tuple = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", v)
        k_min = self.k_min
        if k_min is None:
            k_min = (0,) * v.ndim
        k_min = tuple(int(k) for k in k_min)
        if len(k_min) != v.ndim:
            raise ShapeError("k_min length must match tensor rank")
        object.__setattr__(self, "k_min", k_min)

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def k_max(self) -> tuple:
        return tuple(o + s - 1 for o, s in zip(self.k_min, self.values.shape))


def synthesize_samples(
    model: FieldModel,
    sources: SourceSet,
    net: SensorNetwork,
    filt: Optional[TemporalFilter] = None,
) -> SampleMatrix:
    """Superpose single-source fields at every (sensor, instant) pair."""
    if sources.dimension != net.dimension:
        raise ShapeError("source and network dimensions disagree")
    out = np.zeros((net.n_sensors, net.n_times), dtype=float)
    for m in range(sources.count):
        offsets = net.positions - sources.locations[m]
        if model.is_static:
            col = kernel_values(model, None, offsets, np.zeros(net.n_sensors))
            out += sources.intensities[m] * col[:, None]
        else:
            lags = net.times - sources.activations[m]
            vals = kernel_values(model, filt, offsets[:, None, :], lags[None, :])
            out += sources.intensities[m] * vals
    return SampleMatrix(out)


def add_noise(samples: SampleMatrix, snr_db: float, seed: int) -> SampleMatrix:
    """Add white Gaussian noise calibrated to the requested average SNR."""
    power = float(np.sum(samples.values**2))
    if power == 0.0:
        raise AllZeroSignal("cannot calibrate noise against an all-zero signal")
    n_total = samples.values.size
    sigma = np.sqrt(power / (n_total * 10.0 ** (snr_db / 10.0)))
    rng = np.random.default_rng(seed)
    noisy = samples.values + rng.normal(0.0, sigma, size=samples.values.shape)
    return SampleMatrix(noisy, noise_sigma=float(sigma))


def empirical_snr_db(clean: SampleMatrix, noisy: SampleMatrix) -> float:
    """Realised SNR of a noisy matrix against its clean counterpart."""
    noise = noisy.values - clean.values
    return 10.0 * np.log10(np.sum(clean.values**2) / np.sum(noise**2))


def oracle_measurements(
    sources: SourceSet,
    K: Sequence[int],
    r: int,
    T: float,
    scaling: DomainScaling,
    k_min: Optional[Sequence[int]] = None,
) -> MeasurementTensor:
    """Ground-truth generalised measurements, by direct summation over sources.

    ``K`` holds the largest index per dimension; ``k_min`` (default zero)
    the smallest.  Locations enter through their scaled coordinates.
    """
    K = tuple(int(k) for k in np.atleast_1d(K))
    d = len(K)
    if sources.count and sources.dimension != d:
        raise ShapeError("K and source dimensions disagree")
    if k_min is None:
        k_min = (0,) * d
    k_min = tuple(int(k) for k in np.atleast_1d(k_min))
    shape = tuple(K[i] - k_min[i] + 1 for i in range(d))
    if any(s < 1 for s in shape):
        raise ValueError("K must be >= k_min in every dimension")
    out = np.zeros(shape, dtype=complex)
    if sources.count == 0:
        return MeasurementTensor(out, r=r, T=T, k_min=k_min)
    scaled = scaling.to_scaled(sources.locations)
    for m in range(sources.count):
        if r == 0:
            amp = sources.intensities[m] + 0.0j
        else:
            amp = sources.intensities[m] * np.exp(1j * r * sources.activations[m] / T)
        factors = [
            np.exp(1j * np.arange(k_min[i], K[i] + 1) * scaled[m, i]) for i in range(d)
        ]
        term = factors[0]
        for f in factors[1:]:
            term = np.multiply.outer(term, f)
        out += amp * term
    return MeasurementTensor(out, r=r, T=T, k_min=k_min)


def write_samples_csv(samples: SampleMatrix, net: SensorNetwork, path) -> None:
    """CSV layout: header ``n,x_1..x_d,t_l,value``; rows lexicographic in (n, l)."""
    samples.check_against(net)
    d = net.dimension
    header = "n," + ",".join(f"x_{i+1}" for i in range(d)) + ",t_l,value"
    lines = [header]
    for n in range(net.n_sensors):
        coords = ",".join(repr(float(v)) for v in net.positions[n])
        for l in range(net.n_times):
            lines.append(
                f"{n},{coords},{float(net.times[l])!r},{float(samples.values[n, l])!r}"
            )
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def read_samples_csv(path):
    """Inverse of :func:`write_samples_csv`; returns (positions, times, values)."""
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.strip().split("\n") if ln]
    header = lines[0].split(",")
    d = len(header) - 3
    rows = [ln.split(",") for ln in lines[1:]]
    ns = sorted({int(row[0]) for row in rows})
    times = sorted({float(row[d + 1]) for row in rows})
    t_index = {t: i for i, t in enumerate(times)}
    positions = np.zeros((len(ns), d))
    values = np.zeros((len(ns), len(times)))
    for row in rows:
        n = int(row[0])
        positions[n] = [float(v) for v in row[1 : d + 1]]
        values[n, t_index[float(row[d + 1])]] = float(row[d + 2])
    return positions, np.asarray(times), values
