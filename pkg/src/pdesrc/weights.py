"""Exponential-reproducing weights mapping sensor samples to measurements.

Three routes: closed form on uniform grids (phase factor over scaled sensor
coordinates divided by the kernel transform), least squares against a dense
reproduction grid for scattered sensors, and interpolate-then-resample which
returns to the uniform case.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import Box, DomainScaling, SensorNetwork, UniformGrid
from .errors import (
    DegenerateGeometry,
    NotUniform,
    PoleAtFrequency,
    ShapeError,
    Unsupported,
)
from .forward import SampleMatrix
from .greens import (
    FieldKind,
    FieldModel,
    TemporalFilter,
    bspline_laplace,
    kernel_values,
)

LS_CUTOFF_DEFAULT = 1e-12
COND_CEILING_DEFAULT = 1e8


class WeightMethod(enum.Enum):
    CLOSED_FORM = "closed_form"
    LEAST_SQUARES = "least_squares"
    INTERP_RESAMPLE = "interp_resample"


@dataclass
class WeightSet:
    """Weights w_{n,l}(k) for a fixed temporal index r.

    Closed-form sets are stored factored (spatial phases x temporal phases x
    per-k scale); ``dense()`` materialises the full (N, L+1, *kshape) tensor.
    ``excluded`` flags k indices whose transform value does not exist (the
    diffusion zero-frequency corner, wave poles); their weights are zero.
    """

    method: WeightMethod
    k_min: tuple
    k_max: tuple
    r: int
    T: float
    n_sensors: int
    n_times: int
    excluded: np.ndarray
    condition_number: Optional[float] = None
    rank_deficient: bool = False
    _dense: Optional[np.ndarray] = field(default=None, repr=False)
    _space_phase: Optional[np.ndarray] = field(default=None, repr=False)
    _time_phase: Optional[np.ndarray] = field(default=None, repr=False)
    _scale: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def k_shape(self) -> tuple:
        return tuple(hi - lo + 1 for lo, hi in zip(self.k_min, self.k_max))

    @property
    def dimension(self) -> int:
        return len(self.k_min)

    def dense(self) -> np.ndarray:
        if self._dense is None:
            w = np.einsum("nK,l->nlK", self._space_phase, self._time_phase)
            w = w * self._scale.reshape(-1)[None, None, :]
            self._dense = w.reshape((self.n_sensors, self.n_times) + self.k_shape)
        return self._dense

    @property
    def values(self) -> np.ndarray:
        return self.dense()

    def apply(self, samples: SampleMatrix) -> np.ndarray:
        """Q-hat(k) = sum_{n,l} w_{n,l}(k) phi_n(t_l) over the whole k grid."""
        phi = samples.values
        if phi.shape != (self.n_sensors, self.n_times):
            raise ShapeError(
                f"samples {phi.shape} do not match weights "
                f"({self.n_sensors}, {self.n_times})"
            )
        if self._dense is None and self._space_phase is not None:
            reduced = phi @ self._time_phase  # (N,)
            flat = self._space_phase.T @ reduced  # (prod k,)
            return (flat * self._scale.reshape(-1)).reshape(self.k_shape)
        w = self.dense().reshape(self.n_sensors, self.n_times, -1)
        return np.einsum("nlK,nl->K", w, phi.astype(complex)).reshape(self.k_shape)

    def node_measures(self, samples: SampleMatrix) -> np.ndarray:
        """Per-sensor contributions y_n(k) = N * sum_l w_{n,l}(k) phi_n(t_l)."""
        phi = samples.values
        if phi.shape != (self.n_sensors, self.n_times):
            raise ShapeError("samples do not match weights")
        N = self.n_sensors
        if self._dense is None and self._space_phase is not None:
            reduced = phi @ self._time_phase  # (N,)
            contrib = self._space_phase * reduced[:, None]  # (N, prod k)
            return N * contrib * self._scale.reshape(-1)[None, :]
        w = self.dense().reshape(self.n_sensors, self.n_times, -1)
        return N * np.einsum("nlK,nl->nK", w, phi.astype(complex))

    def entry_noise_std(self, sigma: float) -> np.ndarray:
        """Per-entry measurement noise std sigma * ||w(k)||_2 over (n, l)."""
        if self._dense is None and self._space_phase is not None:
            sp = np.sum(np.abs(self._space_phase) ** 2, axis=0)
            tp = np.sum(np.abs(self._time_phase) ** 2)
            norms = np.sqrt(sp * tp) * np.abs(self._scale.reshape(-1))
            return (sigma * norms).reshape(self.k_shape)
        w = self.dense().reshape(self.n_sensors, self.n_times, -1)
        return sigma * np.linalg.norm(w, axis=(0, 1)).reshape(self.k_shape)

    def to_json(self, path) -> None:
        """Reproducibility dump; complex entries as [re, im] pairs."""
        w = self.dense()
        payload = {
            "method": self.method.value,
            "r": self.r,
            "T": self.T,
            "k_min": list(self.k_min),
            "k_max": list(self.k_max),
            "shape": list(w.shape),
            "condition_number": self.condition_number,
            "rank_deficient": self.rank_deficient,
            "excluded": self.excluded.astype(int).ravel().tolist(),
            "values": np.stack([w.real, w.imag], axis=-1).ravel().tolist(),
        }
        text = json.dumps(payload)
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)

    @staticmethod
    def from_json(path) -> "WeightSet":
        if hasattr(path, "read"):
            payload = json.loads(path.read())
        else:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        shape = tuple(payload["shape"])
        flat = np.asarray(payload["values"], dtype=float).reshape(shape + (2,))
        dense = flat[..., 0] + 1j * flat[..., 1]
        k_shape = shape[2:]
        return WeightSet(
            method=WeightMethod(payload["method"]),
            k_min=tuple(payload["k_min"]),
            k_max=tuple(payload["k_max"]),
            r=payload["r"],
            T=payload["T"],
            n_sensors=shape[0],
            n_times=shape[1],
            excluded=np.asarray(payload["excluded"], dtype=bool).reshape(k_shape),
            condition_number=payload["condition_number"],
            rank_deficient=payload["rank_deficient"],
            _dense=dense,
        )


def _k_grid(k_min, k_max):
    axes = [np.arange(lo, hi + 1) for lo, hi in zip(k_min, k_max)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)  # (*kshape, d)


def transform_denominator(
    model: FieldModel,
    filt: Optional[TemporalFilter],
    scaling: DomainScaling,
    k: np.ndarray,
    r: int,
    T: float,
):
    """1 / (G * H) at the scaled frequencies, with an exclusion mask.

    Entries where the transform has no value (diffusion zero-frequency with
    r = 0 outside the region of convergence, wave poles) are flagged and the
    inverse set to zero, which zeroes the corresponding weights.
    """
    a = k * scaling.alpha  # scaled spatial frequencies, (..., d)
    sq = np.sum(a * a, axis=-1)
    omega = r / T if T > 0 else 0.0
    if model.kind is FieldKind.DIFFUSION:
        inv = model.diffusivity * sq - 1j * omega
    elif model.kind is FieldKind.WAVE:
        # Transform of the impulsive-shell kernel: 1/((s_t/c)^2 - |s_x|^2),
        # evaluated on the imaginary axis.
        inv = sq - (omega / model.wave_speed) ** 2 + 0.0j
    else:
        raise Unsupported("no closed-form transform for static potential fields")
    if filt is not None and filt.active:
        inv = inv / bspline_laplace(filt.order, -1j * omega)
    scale = np.max(np.abs(inv)) if inv.size else 1.0
    excluded = np.abs(inv) <= 1e-14 * max(scale, 1.0)
    inv = np.where(excluded, 0.0, inv)
    return inv, excluded


def uniform_coeffs(
    model: FieldModel,
    net: SensorNetwork,
    K: Sequence[int],
    r: int,
    filt: Optional[TemporalFilter] = None,
    scaling: Optional[DomainScaling] = None,
    k_min: Optional[Sequence[int]] = None,
) -> WeightSet:
    """Closed-form weights for a uniform sensor lattice.

    w_{n,l}(k) = dt * prod(dx) * e^{j k . x'_n} e^{j dt r l / T} / (G H), with
    x'_n the scaled sensor coordinates and G evaluated at the scaled spatial
    frequencies.
    """
    if net.uniform_grid is None:
        raise NotUniform("closed-form weights require a uniform sensor grid")
    if model.is_static:
        raise Unsupported("static fields have no closed-form transform; use ls_coeffs")
    T = net.window
    if T <= 0:
        raise ShapeError("dynamic fields need a positive observation window")
    if scaling is None:
        scaling = DomainScaling.for_region(net.region, T)
    K = tuple(int(v) for v in np.atleast_1d(K))
    d = net.dimension
    if len(K) != d:
        raise ShapeError("K must have one entry per spatial dimension")
    if k_min is None:
        k_min = (0,) * d
    k_min = tuple(int(v) for v in np.atleast_1d(k_min))
    kg = _k_grid(k_min, K)
    inv, excluded = transform_denominator(model, filt, scaling, kg, r, T)
    if np.all(excluded):
        raise PoleAtFrequency("every requested k index falls on an excluded frequency")

    volume = net.dt * float(np.prod(net.uniform_grid.spacings))
    scaled_pos = scaling.to_scaled(net.positions)  # (N, d)
    flat_k = kg.reshape(-1, d)
    space = np.exp(1j * (scaled_pos @ flat_k.T))  # (N, prod k)
    time = np.exp(1j * r * net.times / T)  # (L+1,)
    return WeightSet(
        method=WeightMethod.CLOSED_FORM,
        k_min=k_min,
        k_max=K,
        r=r,
        T=T,
        n_sensors=net.n_sensors,
        n_times=net.n_times,
        excluded=excluded,
        _space_phase=space,
        _time_phase=time,
        _scale=volume * inv,
    )


@dataclass(frozen=True)
class DenseGrid:
    """Reproduction-fit grid: spatial points and time snapshots."""

    points: np.ndarray  # (I, d)
    snapshots: np.ndarray  # (J,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        snaps = np.atleast_1d(np.asarray(self.snapshots, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "snapshots", snaps)

    @property
    def n_equations(self) -> int:
        return self.points.shape[0] * self.snapshots.size

    @staticmethod
    def default_for(
        net: SensorNetwork,
        region: Optional[Box] = None,
        oversample: float = 2.0,
        offset_frac: float = 1e-3,
        static: bool = False,
    ) -> "DenseGrid":
        """Regular lattice over the region with ~oversample * N(L+1) points.

        Grid nodes carry a small offset so they never coincide with sensors
        sitting on round coordinates (the kernel is singular there).
        """
        region = region or net.region
        d = region.dimension
        target = max(1, int(math.ceil(oversample * net.n_sensors * net.n_times)))
        if static:
            n_snaps = 1
            snaps = np.array([0.0])
        else:
            n_snaps = max(2, min(8, net.n_times))
            snaps = np.linspace(net.window / n_snaps, net.window, n_snaps)
        per_dim = max(2, int(math.ceil((target / n_snaps) ** (1.0 / d))))
        axes = []
        for i in range(d):
            step = region.widths[i] / per_dim
            axes.append(
                region.lower[i] + step * (np.arange(per_dim) + 0.5 + offset_frac)
            )
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack(mesh, axis=-1).reshape(-1, d)
        return DenseGrid(pts, snaps)


def ls_coeffs(
    model: FieldModel,
    net: SensorNetwork,
    grid: DenseGrid,
    K: Sequence[int],
    r: int,
    filt: Optional[TemporalFilter] = None,
    scaling: Optional[DomainScaling] = None,
    k_min: Optional[Sequence[int]] = None,
    cutoff: float = LS_CUTOFF_DEFAULT,
    cond_ceiling: float = COND_CEILING_DEFAULT,
) -> WeightSet:
    """Least-squares weights: fit the reproduction identity on the dense grid.

    One rank-revealing SVD of the stacked kernel matrix serves every k; the
    condition number is recorded and a breach of the ceiling flags (but does
    not fail) the weight set.
    """
    d = net.dimension
    K = tuple(int(v) for v in np.atleast_1d(K))
    if len(K) != d:
        raise ShapeError("K must have one entry per spatial dimension")
    if k_min is None:
        k_min = (0,) * d
    k_min = tuple(int(v) for v in np.atleast_1d(k_min))
    T = net.window
    static = model.is_static
    if not static and T <= 0:
        raise ShapeError("dynamic fields need a positive observation window")
    if scaling is None:
        scaling = DomainScaling.for_region(net.region, T if T > 0 else 1.0)
    if grid.n_equations < net.n_sensors * net.n_times:
        raise ShapeError(
            f"dense grid supplies {grid.n_equations} equations for "
            f"{net.n_sensors * net.n_times} unknowns; need at least as many"
        )

    I = grid.points.shape[0]
    J = grid.snapshots.size
    N, L1 = net.n_sensors, net.n_times
    offs = net.positions[None, :, :] - grid.points[:, None, :]  # (I, N, d)
    if static:
        # The kernel carries no time dependence: every snapshot row block and
        # every sample column within a sensor repeat the same entries.
        block = kernel_values(model, None, offs, np.zeros((I, N)))
        G = np.tile(np.repeat(block, L1, axis=1), (J, 1))
    else:
        G = np.empty((I * J, N * L1))
        for j, tj in enumerate(grid.snapshots):
            lag = net.times[None, None, :] - tj
            kv = kernel_values(model, filt, offs[:, :, None, :], lag)
            G[j * I : (j + 1) * I] = kv.reshape(I, N * L1)

    u, s, vh = np.linalg.svd(G, full_matrices=False)
    smax = s[0] if s.size else 0.0
    smin_pos = s[s > 0]
    cond = float(smax / smin_pos[-1]) if smin_pos.size else float("inf")
    keep = s > cutoff * smax
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)

    kg = _k_grid(k_min, K)
    flat_k = kg.reshape(-1, d)
    scaled_pts = scaling.to_scaled(grid.points)
    space_targets = np.exp(1j * (scaled_pts @ flat_k.T))  # (I, prod k)
    if static or r == 0:
        time_targets = np.ones(J)
    else:
        time_targets = np.exp(1j * r * grid.snapshots / T)
    P = (time_targets[:, None, None] * space_targets[None, :, :]).reshape(I * J, -1)
    W = vh.conj().T @ (sinv[:, None] * (u.conj().T @ P))  # (N*L1, prod k)
    k_shape = tuple(K[i] - k_min[i] + 1 for i in range(d))
    dense = W.reshape((N, L1) + k_shape)
    return WeightSet(
        method=WeightMethod.LEAST_SQUARES,
        k_min=k_min,
        k_max=K,
        r=r,
        T=T if T > 0 else 1.0,
        n_sensors=N,
        n_times=L1,
        excluded=np.zeros(k_shape, dtype=bool),
        condition_number=cond,
        rank_deficient=bool(cond > cond_ceiling),
        _dense=dense,
    )


def interp_resample(
    samples: SampleMatrix,
    net: SensorNetwork,
    target: UniformGrid,
):
    """Linearly interpolate scattered samples onto a uniform lattice.

    Piecewise-linear (simplex barycentric) interpolation on a Delaunay
    triangulation for d in {2, 3}; nodes outside the convex hull take the
    nearest sensor's value.  Returns the resampled matrix and the synthetic
    uniform network.
    """
    samples.check_against(net)
    d = net.dimension
    if d not in (1, 2, 3):
        raise Unsupported("interpolation-resampling supports d in {1, 2, 3}")
    if target.dimension != d:
        raise ShapeError("target grid dimension mismatch")
    new_pos = target.positions()
    if d == 1:
        x = net.positions[:, 0]
        order = np.argsort(x)
        xs = x[order]
        vals = samples.values[order]
        out = np.empty((new_pos.shape[0], net.n_times))
        for l in range(net.n_times):
            out[:, l] = np.interp(new_pos[:, 0], xs, vals[:, l])
    else:
        from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator
        from scipy.spatial import QhullError

        try:
            lin = LinearNDInterpolator(net.positions, samples.values)
        except QhullError as exc:
            raise DegenerateGeometry(
                "sensors are degenerate (collinear/coplanar); cannot triangulate"
            ) from exc
        out = lin(new_pos)
        bad = np.isnan(out[:, 0])
        if np.any(bad):
            near = NearestNDInterpolator(net.positions, samples.values)
            out[bad] = near(new_pos[bad])
    new_net = SensorNetwork(new_pos, net.times, net.region, uniform_grid=target)
    return SampleMatrix(out, noise_sigma=samples.noise_sigma), new_net


def reproduction_error(
    weights: WeightSet,
    model: FieldModel,
    net: SensorNetwork,
    k: Sequence[int],
    probe_points: np.ndarray,
    probe_times: Optional[np.ndarray] = None,
    filt: Optional[TemporalFilter] = None,
    scaling: Optional[DomainScaling] = None,
) -> float:
    """Relative L2 gap between the weighted kernel sum and the target exponential.

    Evaluated over the probe grid; this is the approximate-reproduction
    diagnostic, reported separately for interior and full-domain probes by the
    CLI because boundary effects dominate near the region edge.
    """
    k = tuple(int(v) for v in np.atleast_1d(k))
    if scaling is None:
        scaling = DomainScaling.for_region(net.region, weights.T)
    idx = tuple(ki - lo for ki, lo in zip(k, weights.k_min))
    if any(i < 0 or i >= s for i, s in zip(idx, weights.k_shape)):
        raise ShapeError(f"k={k} not covered by this weight set")
    w = weights.dense()[(slice(None), slice(None)) + idx]  # (N, L+1)
    pts = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probe_times is None or model.is_static:
        probe_times = np.zeros(1)
    probe_times = np.atleast_1d(np.asarray(probe_times, dtype=float))
    offs = net.positions[None, :, :] - pts[:, None, :]  # (P, N, d)
    recon = np.empty((pts.shape[0], probe_times.size), dtype=complex)
    for j, tq in enumerate(probe_times):
        if model.is_static:
            kv = kernel_values(model, None, offs, np.zeros((pts.shape[0], net.n_sensors)))
            recon[:, j] = np.einsum("pn,nl->p", kv, w)
        else:
            lag = net.times[None, None, :] - tq
            kv = kernel_values(model, filt, offs[:, :, None, :], lag)
            recon[:, j] = np.einsum("pnl,nl->p", kv, w)
    scaled_pts = scaling.to_scaled(pts)
    target_space = np.exp(1j * (scaled_pts @ np.asarray(k, dtype=float)))
    if model.is_static or weights.r == 0:
        target_time = np.ones(probe_times.size)
    else:
        target_time = np.exp(1j * weights.r * probe_times / weights.T)
    target = target_space[:, None] * target_time[None, :]
    return float(np.linalg.norm(recon - target) / np.linalg.norm(target))
