"""Experiment configuration: TOML parsing, validation, object builders.

Every randomised quantity carries an explicit seed and physical quantities
carry SI units in their key names, so a config file fully determines a run.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as toml_reader
else:
    import tomli as toml_reader

from .domain import Box, SensorNetwork, SourceSet, UniformGrid
from .errors import ConfigError
from .estimator import EstimatorOptions
from .greens import FieldKind, FieldModel, FilterKind, TemporalFilter
from .weights import DenseGrid, WeightMethod

_MODEL_KINDS = {
    "poisson2d": FieldKind.POISSON_2D,
    "poisson3d": FieldKind.POISSON_3D,
    "diffusion": FieldKind.DIFFUSION,
    "wave": FieldKind.WAVE,
}

_METHODS = {
    "closed_form": WeightMethod.CLOSED_FORM,
    "least_squares": WeightMethod.LEAST_SQUARES,
    "interp_resample": WeightMethod.INTERP_RESAMPLE,
}


def _need(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"{section}.{key}: required field is missing")
    return table[key]


@dataclass
class GossipConfig:
    r_con: float
    rounds: int
    seed: int
    trace_stride: Optional[int] = None
    trajectory_nodes: int = 3
    trajectory_stride: Optional[int] = None


@dataclass
class ExperimentConfig:
    """Validated, serialisable description of one experiment family."""

    raw: dict

    model_kind: FieldKind = FieldKind.DIFFUSION
    dimension: int = 1
    diffusivity: Optional[float] = None
    wave_speed: Optional[float] = None
    filter_kind: FilterKind = FilterKind.NONE
    filter_order: int = 3

    lower: tuple = (0.0,)
    upper: tuple = (1.0,)

    source_intensities: tuple = ()
    source_activations: tuple = ()
    source_locations: tuple = ()

    network_kind: str = "uniform"  # uniform | random
    counts: Optional[tuple] = None
    spacings: Optional[tuple] = None
    origin: Optional[tuple] = None
    n_sensors: Optional[int] = None
    placement_seed: int = 0

    dt: float = 1.0
    duration: float = 1.0

    num_sources: int = 1
    k_max: tuple = (1,)
    k_min: Optional[tuple] = None
    r: int = 1
    method: WeightMethod = WeightMethod.CLOSED_FORM
    estimation_seed: int = 0
    headroom: float = 0.8
    refine_activation: bool = False
    resample_counts: Optional[tuple] = None
    ls_grid_counts: Optional[tuple] = None
    ls_grid_spacing: Optional[float] = None
    ls_grid_offset: float = 0.0
    ls_snapshots: int = 1
    ls_cutoff: float = 1e-12
    denoise_iterations: int = 10
    intensity_threshold: float = 0.01

    snr_db: tuple = ()  # empty: noiseless
    noise_seed: int = 0

    time_sample_counts: Optional[tuple] = None  # sweep of L+1 values

    trials: int = 1
    base_seed: int = 0

    gossip: Optional[GossipConfig] = None

    output_directory: str = "results"

    # ------------------------------------------------------------------ build
    def field_model(self) -> FieldModel:
        return FieldModel(
            self.model_kind,
            self.dimension,
            diffusivity=self.diffusivity,
            wave_speed=self.wave_speed,
        )

    def temporal_filter(self) -> Optional[TemporalFilter]:
        if self.filter_kind is FilterKind.NONE:
            return None
        return TemporalFilter(self.filter_kind, self.filter_order)

    def region(self) -> Box:
        return Box(np.asarray(self.lower), np.asarray(self.upper))

    def sources(self) -> SourceSet:
        return SourceSet(
            np.asarray(self.source_intensities),
            np.asarray(self.source_activations),
            np.asarray(self.source_locations),
        )

    def times(self, n_samples: Optional[int] = None) -> np.ndarray:
        if self.model_kind in (FieldKind.POISSON_2D, FieldKind.POISSON_3D):
            return np.array([0.0])
        if n_samples is None:
            n = int(round(self.duration / self.dt)) + 1
            return np.arange(n) * self.dt
        if n_samples < 2:
            raise ConfigError("sampling: need at least two instants for dynamic fields")
        return np.linspace(0.0, self.duration, n_samples)

    def network(self, trial: int = 0, n_samples: Optional[int] = None) -> SensorNetwork:
        times = self.times(n_samples)
        region = self.region()
        if self.network_kind == "uniform":
            grid = UniformGrid(self.counts, self.spacings, self.origin)
            return SensorNetwork.uniform(grid, times, region)
        # Random placement: redraw until every sensor clears the minimum
        # standoff from the true sources (the kernel is singular on them).
        standoff = 1e-6 * region.diameter
        sources = self.sources()
        for attempt in range(50):
            rng = np.random.default_rng([self.placement_seed + trial, attempt])
            pos = region.sample(rng, self.n_sensors)
            if sources.count == 0:
                return SensorNetwork(pos, times, region)
            dist = np.linalg.norm(
                pos[:, None, :] - sources.locations[None, :, :], axis=-1
            )
            if dist.min() > standoff:
                return SensorNetwork(pos, times, region)
        raise ConfigError("network: could not place sensors clear of the sources")

    def estimator_options(self) -> EstimatorOptions:
        opts = EstimatorOptions(
            k_min=self.k_min,
            headroom=self.headroom,
            denoise_iters=self.denoise_iterations,
            intensity_threshold=self.intensity_threshold,
            refine_activation=self.refine_activation,
            ls_cutoff=self.ls_cutoff,
        )
        if self.resample_counts is not None:
            region = self.region()
            spac = tuple(
                w / c for w, c in zip(region.widths, self.resample_counts)
            )
            opts.resample_grid = UniformGrid(
                self.resample_counts, spac, tuple(region.lower)
            )
        if self.ls_grid_counts is not None:
            region = self.region()
            spacing = self.ls_grid_spacing
            axes = []
            for i, c in enumerate(self.ls_grid_counts):
                step = spacing if spacing else region.widths[i] / self.ls_grid_counts[i]
                axes.append(region.lower[i] + self.ls_grid_offset + step * np.arange(c))
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack(mesh, axis=-1).reshape(-1, len(self.ls_grid_counts))
            if self.model_kind in (FieldKind.POISSON_2D, FieldKind.POISSON_3D):
                snaps = np.array([0.0])
            else:
                snaps = np.linspace(
                    self.duration / self.ls_snapshots, self.duration, self.ls_snapshots
                )
            opts.dense_grid = DenseGrid(pts, snaps)
        return opts

    # ------------------------------------------------------------------ parse
    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig(raw=data)
        model = _need(data, "model", "config")
        kind = _need(model, "kind", "model")
        if kind not in _MODEL_KINDS:
            raise ConfigError(f"model.kind: unknown kind {kind!r}")
        cfg.model_kind = _MODEL_KINDS[kind]
        cfg.dimension = int(_need(model, "dimension", "model"))
        if cfg.model_kind is FieldKind.DIFFUSION:
            cfg.diffusivity = float(_need(model, "diffusivity_m2_per_s", "model"))
        if cfg.model_kind is FieldKind.WAVE:
            cfg.wave_speed = float(_need(model, "wave_speed_m_per_s", "model"))

        filt = data.get("filter")
        if filt:
            fk = _need(filt, "kind", "filter")
            if fk not in ("none", "bspline"):
                raise ConfigError(f"filter.kind: unknown kind {fk!r}")
            cfg.filter_kind = FilterKind(fk)
            cfg.filter_order = int(filt.get("order", 3))

        domain = _need(data, "domain", "config")
        cfg.lower = tuple(float(v) for v in _need(domain, "lower_m", "domain"))
        cfg.upper = tuple(float(v) for v in _need(domain, "upper_m", "domain"))
        if len(cfg.lower) != cfg.dimension or len(cfg.upper) != cfg.dimension:
            raise ConfigError("domain.lower_m/upper_m: length must equal model.dimension")

        sources = data.get("sources", [])
        intensities, activations, locations = [], [], []
        for i, s in enumerate(sources):
            intensities.append(float(_need(s, "intensity", f"sources[{i}]")))
            activations.append(float(s.get("activation_s", 0.0)))
            loc = _need(s, "location_m", f"sources[{i}]")
            if len(loc) != cfg.dimension:
                raise ConfigError(f"sources[{i}].location_m: wrong dimension")
            locations.append([float(v) for v in loc])
        cfg.source_intensities = tuple(intensities)
        cfg.source_activations = tuple(activations)
        cfg.source_locations = tuple(tuple(l) for l in locations)

        network = _need(data, "network", "config")
        cfg.network_kind = _need(network, "kind", "network")
        if cfg.network_kind == "uniform":
            cfg.counts = tuple(int(v) for v in _need(network, "counts", "network"))
            if "spacings_m" in network:
                cfg.spacings = tuple(float(v) for v in network["spacings_m"])
            else:
                cfg.spacings = tuple(
                    (u - l) / max(c - 1, 1)
                    for l, u, c in zip(cfg.lower, cfg.upper, cfg.counts)
                )
            cfg.origin = tuple(
                float(v) for v in network.get("origin_m", cfg.lower)
            )
        elif cfg.network_kind == "random":
            cfg.n_sensors = int(_need(network, "n_sensors", "network"))
            cfg.placement_seed = int(_need(network, "placement_seed", "network"))
        else:
            raise ConfigError(f"network.kind: unknown kind {cfg.network_kind!r}")

        sampling = data.get("sampling", {})
        cfg.dt = float(sampling.get("dt_s", 1.0))
        cfg.duration = float(sampling.get("duration_s", 0.0))
        if cfg.model_kind not in (FieldKind.POISSON_2D, FieldKind.POISSON_3D):
            if cfg.duration <= 0:
                raise ConfigError("sampling.duration_s: required for dynamic fields")
            if cfg.dt <= 0:
                raise ConfigError("sampling.dt_s: must be positive")

        est = _need(data, "estimation", "config")
        cfg.num_sources = int(_need(est, "num_sources", "estimation"))
        k_max = _need(est, "k_max", "estimation")
        if isinstance(k_max, (int, float)):
            cfg.k_max = (int(k_max),) * cfg.dimension
        else:
            cfg.k_max = tuple(int(v) for v in k_max)
        if "k_min" in est:
            k_min = est["k_min"]
            if isinstance(k_min, (int, float)):
                cfg.k_min = (int(k_min),) * cfg.dimension
            else:
                cfg.k_min = tuple(int(v) for v in k_min)
        cfg.r = int(est.get("r", 0 if cfg.model_kind in (FieldKind.POISSON_2D, FieldKind.POISSON_3D) else 1))
        method = est.get("method", "closed_form")
        if method not in _METHODS:
            raise ConfigError(f"estimation.method: unknown method {method!r}")
        cfg.method = _METHODS[method]
        cfg.estimation_seed = int(est.get("seed", 0))
        cfg.headroom = float(est.get("headroom", 0.8))
        cfg.refine_activation = bool(est.get("refine_activation", False))
        if "resample_counts" in est:
            cfg.resample_counts = tuple(int(v) for v in est["resample_counts"])
        if "ls_grid_counts" in est:
            cfg.ls_grid_counts = tuple(int(v) for v in est["ls_grid_counts"])
            cfg.ls_grid_spacing = est.get("ls_grid_spacing_m")
            if cfg.ls_grid_spacing is not None:
                cfg.ls_grid_spacing = float(cfg.ls_grid_spacing)
            cfg.ls_grid_offset = float(est.get("ls_grid_offset_m", 0.0))
            cfg.ls_snapshots = int(est.get("ls_snapshots", 1))
        cfg.ls_cutoff = float(est.get("ls_cutoff", 1e-12))
        cfg.denoise_iterations = int(est.get("denoise_iterations", 10))
        cfg.intensity_threshold = float(est.get("intensity_threshold", 0.01))

        noise = data.get("noise")
        if noise:
            snr = _need(noise, "snr_db", "noise")
            if isinstance(snr, (int, float)):
                snr = [snr]
            cfg.snr_db = tuple(float(v) for v in snr)
            cfg.noise_seed = int(_need(noise, "seed", "noise"))

        sweep = data.get("sweep")
        if sweep and "time_sample_counts" in sweep:
            cfg.time_sample_counts = tuple(int(v) for v in sweep["time_sample_counts"])

        trials = data.get("trials", {})
        cfg.trials = int(trials.get("count", 1))
        cfg.base_seed = int(trials.get("base_seed", 0))

        gossip = data.get("gossip")
        if gossip:
            cfg.gossip = GossipConfig(
                r_con=float(_need(gossip, "r_con", "gossip")),
                rounds=int(_need(gossip, "rounds", "gossip")),
                seed=int(_need(gossip, "seed", "gossip")),
                trace_stride=gossip.get("trace_stride"),
                trajectory_nodes=int(gossip.get("trajectory_nodes", 3)),
                trajectory_stride=gossip.get("trajectory_stride"),
            )

        output = data.get("output", {})
        cfg.output_directory = str(output.get("directory", "results"))

        cfg.validate()
        return cfg

    @staticmethod
    def from_toml(path) -> "ExperimentConfig":
        if hasattr(path, "read"):
            data = toml_reader.loads(path.read())
        else:
            with open(path, "rb") as fh:
                data = toml_reader.load(fh)
        return ExperimentConfig.from_dict(data)

    def to_dict(self) -> dict:
        return self.raw

    # --------------------------------------------------------------- validate
    def validate(self) -> None:
        model = self.field_model()  # raises on inconsistent physics fields
        region = self.region()
        sources = self.sources()
        if sources.count:
            if not np.all(region.contains(sources.locations)):
                raise ConfigError("sources.location_m: every source must lie inside the domain")
            if not model.is_static and np.any(
                np.asarray(self.source_activations) >= self.duration
            ):
                raise ConfigError("sources.activation_s: must be below sampling.duration_s")
            if np.any(np.asarray(self.source_activations) < 0):
                raise ConfigError("sources.activation_s: must be non-negative")
        if len(self.k_max) != self.dimension:
            raise ConfigError("estimation.k_max: length must equal model.dimension")
        if self.k_min is not None and len(self.k_min) != self.dimension:
            raise ConfigError("estimation.k_min: length must equal model.dimension")
        if self.num_sources < 1:
            raise ConfigError("estimation.num_sources: must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials.count: must be at least 1")
        if self.network_kind == "uniform":
            if len(self.counts) != self.dimension:
                raise ConfigError("network.counts: length must equal model.dimension")
            net = self.network()
            standoff = 1e-6 * region.diameter
            if sources.count:
                dist = np.linalg.norm(
                    net.positions[:, None, :] - sources.locations[None, :, :], axis=-1
                )
                if dist.min() <= standoff:
                    raise ConfigError(
                        "network/sources: a sensor sits on a source (standoff "
                        f"{standoff:.3e} m violated); move the grid or the source"
                    )
        elif self.n_sensors is not None and self.n_sensors < 1:
            raise ConfigError("network.n_sensors: must be at least 1")
        if self.gossip is not None:
            if self.gossip.rounds < 1:
                raise ConfigError("gossip.rounds: must be at least 1")
            if self.gossip.r_con <= 0:
                raise ConfigError("gossip.r_con: must be positive")
