"""Green's functions of the supported PDE models and their Laplace transforms.

Supported fields: static potential (Poisson) in 2-D/3-D, diffusion in any
dimension, and wave propagation in 2-D/3-D.  The 3-D wave kernel is a
temporal impulse, so it is only evaluable pointwise after temporal
prefiltering with a B-spline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .errors import (
    OutsideROC,
    PoleEvaluation,
    QuadratureFailure,
    SingularPoint,
    Unsupported,
)

_FOUR_PI = 4.0 * math.pi
_TWO_PI = 2.0 * math.pi

# Absolute tolerance for filtered-kernel quadrature; failures are surfaced,
# never silently degraded.
QUAD_ABS_TOL = 1e-10


class FieldKind(enum.Enum):
    POISSON_2D = "poisson2d"
    POISSON_3D = "poisson3d"
    DIFFUSION = "diffusion"
    WAVE = "wave"


@dataclass(frozen=True)
class FieldModel:
    """Which PDE governs the field, plus its physical constants."""

    kind: FieldKind
    dimension: int
    diffusivity: Optional[float] = None
    wave_speed: Optional[float] = None

    def __post_init__(self):
        if self.kind is FieldKind.POISSON_2D and self.dimension != 2:
            raise ValueError("poisson2d requires dimension == 2")
        if self.kind is FieldKind.POISSON_3D and self.dimension != 3:
            raise ValueError("poisson3d requires dimension == 3")
        if self.kind is FieldKind.DIFFUSION:
            if self.dimension < 1:
                raise ValueError("diffusion requires dimension >= 1")
            if self.diffusivity is None or self.diffusivity <= 0:
                raise ValueError("diffusion requires diffusivity > 0")
        if self.kind is FieldKind.WAVE:
            if self.dimension not in (2, 3):
                raise ValueError("wave models are defined for dimension in {2, 3}")
            if self.wave_speed is None or self.wave_speed <= 0:
                raise ValueError("wave requires wave_speed > 0")

    @property
    def is_static(self) -> bool:
        return self.kind in (FieldKind.POISSON_2D, FieldKind.POISSON_3D)

    @staticmethod
    def poisson2d() -> "FieldModel":
        return FieldModel(FieldKind.POISSON_2D, 2)

    @staticmethod
    def poisson3d() -> "FieldModel":
        return FieldModel(FieldKind.POISSON_3D, 3)

    @staticmethod
    def diffusion(dimension: int, diffusivity: float) -> "FieldModel":
        return FieldModel(FieldKind.DIFFUSION, dimension, diffusivity=diffusivity)

    @staticmethod
    def wave(dimension: int, wave_speed: float) -> "FieldModel":
        return FieldModel(FieldKind.WAVE, dimension, wave_speed=wave_speed)


class FilterKind(enum.Enum):
    NONE = "none"
    BSPLINE = "bspline"


@dataclass(frozen=True)
class TemporalFilter:
    """Temporal prefilter applied by each sensor before sampling."""

    kind: FilterKind = FilterKind.NONE
    order: int = 3

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("B-spline order must be non-negative")
        if self.order > 7:
            # Higher orders buy nothing numerically and blow up the support.
            raise ValueError("B-spline order capped at 7")

    @property
    def active(self) -> bool:
        return self.kind is FilterKind.BSPLINE

    @staticmethod
    def none() -> "TemporalFilter":
        return TemporalFilter(FilterKind.NONE)

    @staticmethod
    def bspline(order: int) -> "TemporalFilter":
        return TemporalFilter(FilterKind.BSPLINE, order)


def eval_bspline(order: int, t) -> np.ndarray:
    """Causal cardinal B-spline of the given order, supported on [0, order+1].

    The zero-order spline is the indicator of [0, 1); higher orders follow the
    two-term recursion obtained by convolving indicator functions.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    return _bspline_rec(order, np.asarray(t, dtype=float))


def _bspline_rec(order, t):
    if order == 0:
        return np.where((t >= 0.0) & (t < 1.0), 1.0, 0.0)
    return (t * _bspline_rec(order - 1, t) + (order + 1 - t) * _bspline_rec(order - 1, t - 1.0)) / order


def bspline_laplace(order: int, s_t: complex) -> complex:
    """Laplace transform ((1 - e^{-s})/s)^(order+1) with the removable s=0 limit."""
    if order < 0:
        raise ValueError("order must be non-negative")
    s = complex(s_t)
    if s == 0:
        return 1.0 + 0.0j
    if abs(s) < 1e-4:
        # Series for (1 - e^{-s})/s, accurate to ~1e-17 at this cutoff.
        base = 1.0 - s / 2.0 + s * s / 6.0 - s * s * s / 24.0
    else:
        base = (1.0 - np.exp(-s)) / s
    return base ** (order + 1)


def eval_green(model: FieldModel, x, t: float = 0.0) -> float:
    """Point evaluation of the free-space Green's function g(x, t)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.dimension:
        raise ValueError(f"expected {model.dimension}-vector, got {x.size}")
    r = float(np.linalg.norm(x))
    kind = model.kind
    if kind is FieldKind.POISSON_2D:
        if r == 0.0:
            raise SingularPoint("2-D potential kernel is singular at the origin")
        return math.log(r) / _TWO_PI
    if kind is FieldKind.POISSON_3D:
        if r == 0.0:
            raise SingularPoint("3-D potential kernel is singular at the origin")
        return -1.0 / (_FOUR_PI * r)
    if kind is FieldKind.DIFFUSION:
        return _diffusion_kernel(model, np.asarray(r), np.asarray(float(t))).item()
    # Wave.
    c = model.wave_speed
    if model.dimension == 2:
        ct = c * float(t)
        if ct < r:
            return 0.0
        if ct == r:
            raise SingularPoint("2-D wave kernel is singular on the light cone ct = |x|")
        return c / (_TWO_PI * math.sqrt(ct * ct - r * r))
    raise SingularPoint(
        "3-D wave kernel is a temporal impulse; evaluate through eval_green_filtered"
    )


def eval_green_filtered(model: FieldModel, filt: Optional[TemporalFilter], x, t: float) -> float:
    """Point evaluation of the time-convolution (g * h)(x, t) with a B-spline h.

    For the 3-D wave the impulse collapses the convolution analytically; for
    diffusion and the 2-D wave the value comes from adaptive quadrature over
    the spline support.
    """
    if filt is None or not filt.active:
        return eval_green(model, x, t)
    if model.is_static:
        raise Unsupported("temporal prefiltering applies to dynamic fields only")
    x = np.asarray(x, dtype=float).reshape(-1)
    r = float(np.linalg.norm(x))
    order = filt.order
    if model.kind is FieldKind.WAVE and model.dimension == 3:
        if r == 0.0:
            raise SingularPoint("3-D wave kernel is singular at the origin")
        return float(eval_bspline(order, t - r / model.wave_speed)) / (_FOUR_PI * r)
    support = order + 1.0
    if t <= 0.0:
        return 0.0

    def integrand(s):
        try:
            return eval_green(model, x, t - s) * float(eval_bspline(order, s))
        except SingularPoint:
            return 0.0

    hi = min(support, t) if model.kind is FieldKind.DIFFUSION else support
    if hi <= 0.0:
        return 0.0
    knots = [k for k in range(1, math.ceil(hi)) if k < hi]
    if model.kind is FieldKind.WAVE and model.dimension == 2:
        # Integrable inverse-sqrt edge where the light cone crosses the window.
        s_edge = t - r / model.wave_speed
        if s_edge <= 0.0:
            return 0.0
        hi = min(hi, s_edge)
        knots = [k for k in knots if k < hi]
    val, err = quad(integrand, 0.0, hi, points=knots or None, limit=400, epsabs=QUAD_ABS_TOL / 10)
    if err > QUAD_ABS_TOL * max(1.0, abs(val) * 1e4):
        raise QuadratureFailure(f"filtered kernel quadrature error {err:.2e} above tolerance")
    return float(val)


def laplace(model: FieldModel, s_x, s_t: complex) -> complex:
    """Multidimensional bilateral Laplace transform G(s_x, s_t).

    Closed forms exist for diffusion and wave fields only.  The squared "norm"
    of the complex spatial argument is the non-conjugated sum of squares, as
    produced by the completing-the-square derivation.
    """
    s_x = np.asarray(s_x, dtype=complex).reshape(-1)
    if s_x.size != model.dimension:
        raise ValueError(f"expected {model.dimension}-vector, got {s_x.size}")
    s_t = complex(s_t)
    sq = complex(np.sum(s_x * s_x))
    if model.kind is FieldKind.DIFFUSION:
        q = s_t - model.diffusivity * sq
        if q.real <= 0.0:
            raise OutsideROC(f"Re(s_t - mu*|s_x|^2) = {q.real:.3e} must be positive")
        return 1.0 / q
    if model.kind is FieldKind.WAVE:
        # Sign fixed by quadrature of the defining integral for the
        # impulsive-shell kernel (+delta/(4 pi |x|)); the retarded kernel of
        # the nabla^2 - c^{-2} d_tt operator would flip it.
        c = model.wave_speed
        denom = (s_t / c) ** 2 - sq
        scale = abs(sq) + abs(s_t / c) ** 2
        if denom == 0 or abs(denom) < 1e-14 * scale:
            raise PoleEvaluation("wave transform evaluated at (or numerically on) a pole")
        return 1.0 / denom
    raise Unsupported("no closed-form transform for static potential fields")


def kernel_values(model: FieldModel, filt: Optional[TemporalFilter], offsets, lags) -> np.ndarray:
    """Vectorised effective kernel g_eff(offsets, lags).

    offsets has shape (..., d); lags broadcasts against offsets[..., 0].  Used
    by the forward synthesiser and the least-squares weight assembly, where
    per-point Python calls would dominate the runtime.
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape[-1] != model.dimension:
        raise ValueError("offset vectors have the wrong dimension")
    r = np.linalg.norm(offsets, axis=-1)
    lags = np.asarray(lags, dtype=float)
    kind = model.kind
    if kind is FieldKind.POISSON_2D:
        if np.any(r == 0.0):
            raise SingularPoint("2-D potential kernel is singular at the origin")
        return np.log(r) / _TWO_PI
    if kind is FieldKind.POISSON_3D:
        if np.any(r == 0.0):
            raise SingularPoint("3-D potential kernel is singular at the origin")
        return -1.0 / (_FOUR_PI * r)
    filtered = filt is not None and filt.active
    if kind is FieldKind.DIFFUSION and not filtered:
        return _diffusion_kernel(model, r, lags)
    if kind is FieldKind.WAVE and model.dimension == 2 and not filtered:
        return _wave2d_kernel(model, r, lags)
    if kind is FieldKind.WAVE and model.dimension == 3:
        if not filtered:
            raise SingularPoint(
                "3-D wave kernel is a temporal impulse; supply a temporal filter"
            )
        if np.any(r == 0.0):
            raise SingularPoint("3-D wave kernel is singular at the origin")
        return eval_bspline(filt.order, lags - r / model.wave_speed) / (_FOUR_PI * r)
    # Filtered diffusion / 2-D wave: quadrature per distinct (radius, lag) pair.
    r, lags = np.broadcast_arrays(r, lags)
    out = np.empty(r.shape, dtype=float)
    flat_r = r.reshape(-1)
    flat_t = lags.reshape(-1)
    cache: dict[tuple, float] = {}
    flat_out = out.reshape(-1)
    unit = np.zeros(model.dimension)
    for i in range(flat_r.size):
        key = (flat_r[i], flat_t[i])
        if key not in cache:
            unit[0] = flat_r[i]
            cache[key] = eval_green_filtered(model, filt, unit, flat_t[i])
        flat_out[i] = cache[key]
    return out


def _diffusion_kernel(model, r, lags):
    # r and lags broadcast against each other; keep per-factor arrays at their
    # natural (small) shapes so only the exp and the final product touch the
    # full broadcast size.
    mu = model.diffusivity
    d = model.dimension
    pos = lags > 0.0
    inv = 1.0 / (4.0 * mu * np.where(pos, lags, 1.0))
    if d == 1:
        front = np.sqrt(inv / math.pi)
    elif d == 2:
        front = inv / math.pi
    else:
        front = (inv / math.pi) ** (d / 2.0)
    # Clamp deep-tail exponents: below -708 the result underflows to zero
    # anyway, and letting exp() walk into the subnormal range is painfully
    # slow on the scalar libm fallback.
    arg = np.maximum(-(r * r) * inv, -708.0)
    return np.exp(arg) * (front * pos)


def _wave2d_kernel(model, r, lags):
    c = model.wave_speed
    ct = c * np.asarray(lags)
    gap = ct * ct - r * r
    inside = (ct > 0) & (gap > 0.0)
    on_cone = np.broadcast_to(ct, gap.shape) == np.broadcast_to(r, gap.shape)
    if np.any(on_cone):
        raise SingularPoint("2-D wave kernel is singular on the light cone ct = |x|")
    return np.where(inside, c / (_TWO_PI * np.sqrt(np.where(inside, gap, 1.0))), 0.0)
