"""Centralised source recovery: samples -> measurements -> harmonics -> sources.

Also houses the iterative unknown-source-count scheme, which alternates a
static (r = 0) window search with single-source estimation and subtraction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .domain import Box, DomainScaling, SensorNetwork, SourceSet, UniformGrid
from .errors import ConfigError, NoConvergence, PdesrcError, ShapeError, SingularPoint
from .esprit import HarmonicEstimate, default_window, denoise_tensor, nd_esprit
from .forward import MeasurementTensor, SampleMatrix, synthesize_samples
from .greens import FieldKind, FieldModel, TemporalFilter
from .weights import (
    DenseGrid,
    WeightMethod,
    WeightSet,
    interp_resample,
    ls_coeffs,
    uniform_coeffs,
)


@dataclass
class EstimatorOptions:
    """Knobs for the centralised estimator; defaults follow the experiments."""

    k_min: Optional[Sequence[int]] = None  # default: 1 for dynamic closed form, else 0
    headroom: float = 0.8
    resample_grid: Optional[UniformGrid] = None
    dense_grid: Optional[DenseGrid] = None
    ls_cutoff: float = 1e-12
    denoise: Optional[bool] = None  # None: denoise exactly when samples are noisy
    denoise_iters: int = 10
    # Diagonal prewhitening by the weight-implied per-entry noise std is only
    # an approximation: it bends the clean tensor off the low-rank Hankel
    # manifold, which costs more than the noise shaping buys once the std
    # spread is large.  Off by default; flip on for near-white weight sets.
    denoise_whiten: bool = False
    esprit_window: Optional[Sequence[int]] = None
    intensity_threshold: float = 0.01
    modulus_band: float = 0.2
    compute_residual: bool = True
    # Post-ESPRIT line search on each activation time (intensity follows
    # linearly); locations are never refined.
    refine_activation: bool = False
    refine_half_width: Optional[float] = None  # seconds; default 2.5% of T
    refine_passes: int = 2
    refine_max_sensors: Optional[int] = 512  # matched filter on nearest sensors
    # Samples closer to the activation than the guard are left out of the fit:
    # the kernel is near singular there and a tiny location error would
    # otherwise dominate the intensity estimate.
    refine_time_guard: Optional[float] = None  # seconds; default 2% of T
    refine_max_times: Optional[int] = 512  # stride the fit columns to this many


@dataclass
class EstimationReport:
    """Recovered sources with validity flags and solver diagnostics."""

    sources: SourceSet
    valid: np.ndarray
    residual: float
    diagnostics: dict
    scaling: DomainScaling

    @property
    def valid_sources(self) -> SourceSet:
        idx = np.flatnonzero(self.valid)
        return SourceSet(
            self.sources.intensities[idx],
            self.sources.activations[idx],
            self.sources.locations[idx],
        )

    def to_json_dict(self) -> dict:
        diags = {}
        for key, val in self.diagnostics.items():
            if isinstance(val, np.ndarray):
                diags[key] = val.tolist()
            elif isinstance(val, (np.floating, np.integer)):
                diags[key] = val.item()
            else:
                diags[key] = val
        return {
            "schema_version": "v1",
            "sources": [
                {
                    "intensity": float(self.sources.intensities[m]),
                    "activation_s": float(self.sources.activations[m]),
                    "location": [float(v) for v in self.sources.locations[m]],
                    "valid": bool(self.valid[m]),
                }
                for m in range(self.sources.count)
            ],
            "residual": float(self.residual),
            "diagnostics": diags,
        }

    def to_json(self, path) -> None:
        text = json.dumps(self.to_json_dict(), indent=2, sort_keys=True)
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def generalized_measurements(weights: WeightSet, samples: SampleMatrix) -> MeasurementTensor:
    """Weighted linear combination of the samples over every covered k."""
    return MeasurementTensor(
        weights.apply(samples), r=weights.r, T=weights.T, k_min=weights.k_min
    )


def extract_sources(
    Q: MeasurementTensor,
    M: int,
    scaling: DomainScaling,
    seed: int = 0,
    window: Optional[Sequence[int]] = None,
) -> tuple[SourceSet, HarmonicEstimate]:
    """Harmonic retrieval plus inverse mapping to physical source parameters.

    Intensities are moduli of the complex amplitudes; activation times come
    from their principal-branch phases (r > 0 only); locations from the
    principal-branch angles of the frequencies, unscaled.
    """
    est = nd_esprit(Q, M, window=window, seed=seed)
    if Q.r == 0:
        taus = np.zeros(M)
    else:
        taus = np.maximum(Q.T * _principal(np.angle(est.amplitudes)) / Q.r, 0.0)
    intensities = np.abs(est.amplitudes)
    angles = _principal(np.angle(est.frequencies))  # (M, d)
    locations = scaling.from_scaled(angles)
    return SourceSet(intensities, taus, locations), est


def _principal(angles, guard: float = 1e-6):
    """Map angles to [0, 2*pi), folding values within ``guard`` of the upper
    edge back to zero so that exact-zero parameters survive roundoff."""
    two_pi = 2.0 * math.pi
    wrapped = np.mod(np.asarray(angles) + guard, two_pi) - guard
    return wrapped


def validity_flags(
    sources: SourceSet,
    est: HarmonicEstimate,
    region: Box,
    intensity_threshold: float = 0.01,
    modulus_band: float = 0.2,
) -> np.ndarray:
    """A source is valid when its intensity clears the relative threshold,
    its location falls inside the monitored region, and its frequencies sit
    near the unit circle.

    The threshold is taken relative to the strongest *plausible* source
    (inside the region, near-unit modulus): spurious poles can carry huge
    interfering amplitudes that would otherwise drown the genuine ones.
    """
    if sources.count == 0:
        return np.zeros(0, dtype=bool)
    inside = region.contains(sources.locations)
    on_circle = est.modulus_deviation() <= modulus_band
    plausible = inside & np.atleast_1d(on_circle)
    peak = np.max(sources.intensities[plausible]) if np.any(plausible) else np.max(
        sources.intensities
    )
    strong = sources.intensities >= intensity_threshold * peak
    return strong & plausible


def default_k_min(model: FieldModel, method: WeightMethod, dimension: int) -> tuple:
    """Zero-frequency corner policy.

    The closed-form transform has no value on the zero spatial frequency for
    dynamic kernels (the defining integral diverges there for every r), so the
    closed-form and resampling routes start the index grid at 1.  The
    least-squares route fits whatever the dictionary can reach, including 0.
    """
    if model.is_static or method is WeightMethod.LEAST_SQUARES:
        return (0,) * dimension
    return (1,) * dimension


def build_weights(
    model: FieldModel,
    net: SensorNetwork,
    samples: SampleMatrix,
    K: Sequence[int],
    r: int,
    method: WeightMethod,
    filt: Optional[TemporalFilter],
    scaling: DomainScaling,
    options: EstimatorOptions,
):
    """Dispatch to the weight scheme; returns (weights, net', samples')."""
    K = tuple(int(v) for v in np.atleast_1d(K))
    k_min = options.k_min
    if k_min is None:
        k_min = default_k_min(model, method, net.dimension)
    k_min = tuple(int(v) for v in np.atleast_1d(k_min))
    if method is WeightMethod.CLOSED_FORM:
        w = uniform_coeffs(model, net, K, r, filt, scaling, k_min)
        return w, net, samples
    if method is WeightMethod.LEAST_SQUARES:
        grid = options.dense_grid
        if grid is None:
            grid = DenseGrid.default_for(net, static=model.is_static)
        w = ls_coeffs(
            model, net, grid, K, r, filt, scaling, k_min, cutoff=options.ls_cutoff
        )
        return w, net, samples
    if method is WeightMethod.INTERP_RESAMPLE:
        target = options.resample_grid
        if target is None:
            per_dim = max(2, int(math.ceil((2 * net.n_sensors) ** (1.0 / net.dimension))))
            spac = net.region.widths / per_dim
            target = UniformGrid(
                (per_dim,) * net.dimension,
                tuple(spac),
                tuple(net.region.lower),
            )
        res_samples, res_net = interp_resample(samples, net, target)
        w = uniform_coeffs(model, res_net, K, r, filt, scaling, k_min)
        return w, res_net, res_samples
    raise ConfigError(f"unknown weight method {method}")


def estimate_centralized(
    model: FieldModel,
    net: SensorNetwork,
    samples: SampleMatrix,
    M: int,
    K: Sequence[int],
    r: int,
    method: WeightMethod = WeightMethod.CLOSED_FORM,
    filt: Optional[TemporalFilter] = None,
    seed: int = 0,
    options: Optional[EstimatorOptions] = None,
) -> EstimationReport:
    """Full centralised recovery of M sources from (possibly noisy) samples."""
    options = options or EstimatorOptions()
    samples.check_against(net)
    K = tuple(int(v) for v in np.atleast_1d(K))
    if len(K) != net.dimension:
        raise ConfigError(f"K has {len(K)} entries for a {net.dimension}-D network")
    scaling = DomainScaling.for_region(
        net.region, net.window if net.window > 0 else 1.0, options.headroom
    )
    weights, work_net, work_samples = build_weights(
        model, net, samples, K, r, method, filt, scaling, options
    )
    counts = weights.k_shape
    if min(counts) < 2 * M:
        raise ConfigError(
            f"k grid {counts} too small for M={M}; need at least 2M entries per dimension"
        )
    Q = generalized_measurements(weights, work_samples)
    denoise = options.denoise
    if denoise is None:
        denoise = work_samples.noise_sigma > 0
    if denoise:
        entry_std = None
        if options.denoise_whiten and work_samples.noise_sigma > 0:
            entry_std = weights.entry_noise_std(work_samples.noise_sigma)
        Q = denoise_tensor(
            Q, M, window=options.esprit_window, entry_std=entry_std,
            max_iter=options.denoise_iters,
        )
    sources, harm = extract_sources(Q, M, scaling, seed=seed, window=options.esprit_window)
    if options.refine_activation and not model.is_static:
        # Refine anything location-plausible; validity is judged afterwards
        # on the refined parameters (the line search repairs wrapped phases).
        plausible = np.atleast_1d(net.region.contains(sources.locations))
        if np.any(plausible):
            half = options.refine_half_width
            if half is None:
                half = 0.025 * net.window
            guard = options.refine_time_guard
            if guard is None:
                guard = 0.02 * net.window
            sources = refine_activations(
                model, net, samples, sources, plausible, filt, half,
                passes=options.refine_passes, max_sensors=options.refine_max_sensors,
                time_guard=guard, max_times=options.refine_max_times,
            )
    valid = validity_flags(
        sources, harm, net.region, options.intensity_threshold, options.modulus_band
    )
    if not model.is_static and r != 0:
        valid &= sources.activations < net.window
    residual = float("nan")
    if options.compute_residual:
        residual = fit_residual(model, net, samples, sources, valid, filt)
    diagnostics = {
        "singular_values": harm.singular_values,
        "vandermonde_condition": harm.vandermonde_condition,
        "modulus_deviation": harm.modulus_deviation(),
        "weights_condition": weights.condition_number,
        "weights_rank_deficient": weights.rank_deficient,
        "method": method.value,
        "k_min": list(weights.k_min),
        "k_max": list(weights.k_max),
        "denoised": bool(denoise),
    }
    return EstimationReport(sources, valid, residual, diagnostics, scaling)


def fit_residual(
    model: FieldModel,
    net: SensorNetwork,
    samples: SampleMatrix,
    sources: SourceSet,
    valid: Optional[np.ndarray] = None,
    filt: Optional[TemporalFilter] = None,
) -> float:
    """Relative Frobenius mismatch between samples and the refitted field."""
    use = sources
    if valid is not None and sources.count and not np.all(valid):
        idx = np.flatnonzero(valid)
        use = SourceSet(
            sources.intensities[idx], sources.activations[idx], sources.locations[idx]
        )
    denom = np.linalg.norm(samples.values)
    if denom == 0:
        return 0.0
    try:
        fitted = synthesize_samples(model, use, net, filt)
    except PdesrcError:
        return float("inf")
    return float(np.linalg.norm(samples.values - fitted.values) / denom)


def refine_activations(
    model: FieldModel,
    net: SensorNetwork,
    samples: SampleMatrix,
    sources: SourceSet,
    valid: np.ndarray,
    filt: Optional[TemporalFilter],
    half_width: float,
    passes: int = 2,
    max_sensors: Optional[int] = 512,
    time_guard: float = 0.0,
    max_times: Optional[int] = 512,
) -> SourceSet:
    """Line search each activation time around its estimate; refit intensity.

    For a fixed location the field is linear in c, so the best intensity for a
    trial tau is a matched-filter ratio; the search maximises the explained
    energy.  Sources are cycled (largest first) with the others held at their
    current fit.  The fit window starts ``time_guard`` after the candidate
    activation range and may be strided/subset to bound the cost on big grids.
    """
    from scipy.optimize import minimize_scalar

    taus = sources.activations.copy()
    amps = sources.intensities.copy()
    order = np.argsort(-np.abs(amps))
    for _ in range(max(1, passes)):
        for m in order:
            if not valid[m]:
                continue
            keep = net.times >= min(taus[m] + half_width + time_guard, net.window / 2.0)
            cols = np.flatnonzero(keep)
            if cols.size < 4:
                cols = np.arange(net.n_times)
            if max_times is not None and cols.size > max_times:
                stride = int(np.ceil(cols.size / max_times))
                cols = cols[::stride]
            rows = np.arange(net.n_sensors)
            if max_sensors is not None and net.n_sensors > max_sensors:
                dist = np.linalg.norm(net.positions - sources.locations[m], axis=1)
                rows = np.sort(np.argsort(dist)[:max_sensors])
            positions = net.positions[rows]
            times = net.times[cols]
            values = samples.values[np.ix_(rows, cols)]
            others = SourceSet(
                np.delete(amps, m),
                np.delete(taus, m),
                np.delete(sources.locations, m, axis=0),
            )
            resid = values
            if others.count:
                resid = resid - _field_at(model, others, positions, times, filt)

            def unit(tau):
                single = SourceSet([1.0], [tau], sources.locations[m : m + 1])
                return _field_at(model, single, positions, times, filt)

            def negative_gain(tau):
                g = unit(tau)
                gg = float(np.sum(g * g))
                if gg == 0.0:
                    return 0.0
                return -float(np.sum(resid * g)) ** 2 / gg

            # A phase-wrapped activation can land outside the window; clamp
            # the bracket centre so the search stays meaningful.
            centre = min(max(taus[m], 0.0), net.window)
            lo = max(0.0, centre - half_width)
            hi = min(net.window, centre + half_width)
            if hi <= lo:
                continue
            best = minimize_scalar(
                negative_gain,
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10 * max(net.window, 1.0)},
            )
            tau_star = float(best.x)
            # Snap onto a coinciding sample instant: the causal kernel is zero
            # exactly at lag 0, but an activation a hair *before* the instant
            # would synthesise an unbounded spurious sample there.
            near = np.argmin(np.abs(net.times - tau_star))
            if abs(net.times[near] - tau_star) < 1e-4 * max(net.dt, 1e-12):
                tau_star = float(net.times[near])
            g = unit(tau_star)
            gg = float(np.sum(g * g))
            if gg > 0:
                taus[m] = tau_star
                amps[m] = float(np.sum(resid * g) / gg)
    return SourceSet(amps, taus, sources.locations)


def _field_at(model, sources, positions, times, filt):
    """Field values on an arbitrary (positions, times) grid."""
    from .greens import kernel_values

    out = np.zeros((positions.shape[0], times.size))
    for m in range(sources.count):
        offsets = positions - sources.locations[m]
        if model.is_static:
            col = kernel_values(model, None, offsets, np.zeros(positions.shape[0]))
            out += sources.intensities[m] * col[:, None]
        else:
            lags = times - sources.activations[m]
            out += sources.intensities[m] * kernel_values(
                model, filt, offsets[:, None, :], lags[None, :]
            )
    return out


def subtract_source(
    samples: SampleMatrix,
    model: FieldModel,
    source: SourceSet,
    net: SensorNetwork,
    filt: Optional[TemporalFilter] = None,
) -> SampleMatrix:
    """Remove one (or several) sources' synthesised contribution."""
    contrib = synthesize_samples(model, source, net, filt)
    return SampleMatrix(samples.values - contrib.values, noise_sigma=samples.noise_sigma)


def select_model_order(Q: MeasurementTensor, cap: Optional[int] = None) -> int:
    """Largest singular-value gap of the default multilevel Hankel matrix."""
    from .esprit import build_multilevel_hankel

    H = build_multilevel_hankel(Q.values, default_window(Q.values.shape))
    sv = np.linalg.svd(H, compute_uv=False)
    limit = min(Q.values.shape) // 2 if cap is None else cap
    limit = max(1, min(limit, sv.size - 1))
    ratios = sv[:limit] / np.maximum(sv[1 : limit + 1], 1e-300)
    return int(np.argmax(ratios)) + 1


@dataclass
class UnknownCountConfig:
    """Controls for the window-search scheme when M is not known."""

    guess_sources: int = 2
    r: int = 1
    K: Optional[Sequence[int]] = None  # index grid for the refinement stage
    method: WeightMethod = WeightMethod.CLOSED_FORM
    intensity_threshold: float = 0.01
    stop_field_fraction: float = 1e-3
    # Windows whose energy share of the original signal falls below this are
    # treated as source free: leftover subtraction error must not be probed.
    probe_floor_fraction: float = 0.01
    # The search starts just under the full window and shrinks while more
    # than one source is visible; very short starting windows invite split
    # pole artifacts from the overstated order.
    initial_window: Optional[int] = None  # in samples (L'), default L - step
    window_step: Optional[int] = None  # default max(1, L // 10)
    max_adjustments: int = 50
    seed: int = 0
    options: EstimatorOptions = field(default_factory=EstimatorOptions)


def estimate_unknown_count(
    model: FieldModel,
    net: SensorNetwork,
    samples: SampleMatrix,
    config: Optional[UnknownCountConfig] = None,
    filt: Optional[TemporalFilter] = None,
) -> EstimationReport:
    """Recover sources one by one without knowing their number.

    Searches for a time window containing exactly one valid source using
    static-index (r = 0) estimates with a deliberately overstated order, then
    estimates that source in full, subtracts its field and continues on the
    remaining signal.
    """
    if model.is_static:
        raise ConfigError("the window-search scheme applies to dynamic fields only")
    config = config or UnknownCountConfig()
    samples.check_against(net)
    L = net.n_times - 1
    if L < 2:
        raise ConfigError("need at least three sampling instants")
    step = config.window_step or max(1, L // 10)
    Lp = config.initial_window or max(2, L - step)
    Lp = min(max(Lp, 2), L)
    Mp = max(2, config.guess_sources)
    scaling = DomainScaling.for_region(net.region, net.window, config.options.headroom)
    # Energy-based stop: single near-singular cells right after an activation
    # would keep a max-based criterion from ever firing.
    stop_abs = config.stop_field_fraction * np.linalg.norm(samples.values)

    found = SourceSet.empty(net.dimension)
    current = samples
    adjustments = 0
    rejected = 0
    low_mark = 2  # windows below this were already swept by earlier finds
    descend_from = None  # window where the current shrink run started
    # The static probe needs 2M' indices per dimension but must stay inside
    # the calibrated band: at low k the r = 0 measurements of a slow plume are
    # dominated by the unobserved tail of the time integral.
    probe_k_min = config.options.k_min
    if probe_k_min is None:
        probe_k_min = default_k_min(model, config.method, net.dimension)
    probe_k_min = tuple(int(v) for v in np.atleast_1d(probe_k_min))
    probe_opts = replace(
        config.options, k_min=probe_k_min, denoise=False, compute_residual=False,
        refine_activation=False, intensity_threshold=config.intensity_threshold,
    )
    K = config.K
    if K is None:
        K = tuple(lo + 4 * Mp - 1 for lo in probe_k_min)

    while True:
        if np.linalg.norm(current.values) <= stop_abs:
            break
        if adjustments > config.max_adjustments:
            raise NoConvergence(
                f"window search did not settle after {config.max_adjustments} adjustments"
            )
        sub_net = net.restricted_to(Lp + 1)
        sub_samples = SampleMatrix(
            current.values[:, : Lp + 1], noise_sigma=current.noise_sigma
        )
        window_ref = np.linalg.norm(samples.values[:, : Lp + 1])
        if np.linalg.norm(sub_samples.values) <= config.probe_floor_fraction * window_ref:
            M_vs = 0
        else:
            M_vs = _count_valid_static(
                model, sub_net, sub_samples, Mp, scaling, config, filt, probe_opts
            )
        if M_vs > 1:
            if descend_from is None:
                descend_from = Lp
            next_Lp = max(low_mark, Lp - step)
            next_ref = np.linalg.norm(samples.values[:, : next_Lp + 1])
            next_cur = np.linalg.norm(current.values[:, : next_Lp + 1])
            if next_Lp < Lp and next_cur > config.probe_floor_fraction * next_ref:
                Lp = next_Lp
                adjustments += 1
                continue
            if Lp < L or descend_from < L:
                # The shrink run bottomed out without isolating one source:
                # the extra poles came from a freshly arrived source with too
                # little coverage to estimate stably.  Never revisit these
                # windows; widen past where the run started.
                low_mark = descend_from
                Lp = min(L, descend_from + step)
                descend_from = None
                adjustments += 1
                continue
            # Full window and nowhere left to shrink: last-resort estimate of
            # the dominant source; the energy gate arbitrates.
        if M_vs < 1:
            descend_from = None
            if Lp >= L:
                break  # nothing else becomes visible; done
            Lp = min(L, Lp + step)
            adjustments += 1
            continue
        descend_from = None
        # Exactly one valid source in [0, Lp * dt]: estimate it in full and
        # accept it only if removing its field actually shrinks the signal --
        # residual junk from earlier subtractions must not accumulate as
        # phantom sources.
        stage_opts = replace(config.options, compute_residual=False)
        if stage_opts.refine_half_width is None:
            # Estimates made right after a source surfaces carry a larger
            # activation bias than steady-window ones; search a wider bracket.
            stage_opts = replace(stage_opts, refine_half_width=0.1 * sub_net.window)
        report = estimate_centralized(
            model,
            sub_net,
            sub_samples,
            M=1,
            K=K,
            r=config.r,
            method=config.method,
            filt=filt,
            seed=config.seed,
            options=stage_opts,
        )
        candidate = subtract_source(current, model, report.sources, net, filt)
        # Samples within a short window of the found activation are unusable
        # for the continuing search: the kernel is near singular there and any
        # activation-time error leaves (or creates) enormous spike mismatch.
        blank = max(2.0 * net.dt, 0.01 * net.window)
        tau_hat = float(report.sources.activations[0])
        mask = (net.times >= tau_hat - net.dt) & (net.times <= tau_hat + blank)
        cleaned = candidate.values.copy()
        cleaned[:, mask] = 0.0
        candidate = SampleMatrix(cleaned, noise_sigma=candidate.noise_sigma)
        before = np.linalg.norm(current.values)
        after = np.linalg.norm(candidate.values)
        # Any genuine source carries a visible energy share; the cut only has
        # to reject no-progress refits of leftover subtraction error.
        if after <= 0.95 * before or after <= stop_abs:
            found = found.union(report.sources)
            current = candidate
            rejected = 0
            low_mark = min(Lp, L - 1)
        else:
            rejected += 1
            if rejected >= 2:
                break  # two non-progressing estimates in a row: done
        if Lp >= L and rejected == 0:
            # accepted at the full window: look for later arrivals, none left
            # means the energy stop will fire next pass
            continue
        if Lp >= L:
            break
        Lp = min(L, Lp + step)

    residual = float(np.linalg.norm(current.values) / max(np.linalg.norm(samples.values), 1e-300))
    return EstimationReport(
        sources=found,
        valid=np.ones(found.count, dtype=bool),
        residual=residual,
        diagnostics={"scheme": "unknown_count", "final_window": Lp},
        scaling=scaling,
    )


def _count_valid_static(model, sub_net, sub_samples, Mp, scaling, config, filt, options):
    """Step 1-3 of the window search: r = 0 estimate, count valid sources."""
    K = tuple(lo + 2 * Mp - 1 for lo in options.k_min)
    try:
        report = estimate_centralized(
            model,
            sub_net,
            sub_samples,
            M=Mp,
            K=K,
            r=0,
            method=config.method,
            filt=filt,
            seed=config.seed,
            options=options,
        )
    except ConfigError:
        raise
    except PdesrcError:
        # A degenerate window (no usable signal yet) counts as no valid source.
        return 0
    return int(np.sum(report.valid))


def match_sources(truth: SourceSet, estimate: SourceSet, scaling: DomainScaling):
    """Minimum-cost assignment of estimated to true sources in scaled space.

    Returns (indices into estimate aligned with truth, per-pair scaled
    location distances).  Extra estimated sources stay unmatched.
    """
    from scipy.optimize import linear_sum_assignment

    if truth.count == 0 or estimate.count == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    a = scaling.to_scaled(truth.locations)
    b = scaling.to_scaled(estimate.locations)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    order = np.argsort(rows)
    return cols[order], cost[rows[order], cols[order]]
