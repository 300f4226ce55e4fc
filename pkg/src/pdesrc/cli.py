"""Command line experiment runner.

``pdesrc run <config.toml>`` simulates, estimates and writes plot-ready
artifacts: per-trial JSON reports, an aggregate error CSV, and gossip traces
for distributed configs.  ``pdesrc validate`` runs the weight diagnostics
without estimating.  Same config + same seeds give byte-identical outputs
(suppress the timestamp header with --deterministic).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .domain import DomainScaling
from .errors import ConfigError, PdesrcError
from .estimator import estimate_centralized, match_sources
from .forward import add_noise, synthesize_samples
from .gossip import estimate_distributed, graph_from_positions, trajectories_to_csv
from .greens import FieldKind
from .weights import WeightMethod, reproduction_error, uniform_coeffs, ls_coeffs


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PdesrcError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdesrc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--deterministic", action="store_true",
                       help="suppress the timestamp header line in CSV outputs")
    run_p.add_argument("--jobs", type=int, default=1, help="trial worker processes")
    run_p.add_argument("--dry-run", action="store_true",
                       help="validate the config and print the derived plan only")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="weight diagnostics without estimation")
    val_p.add_argument("config", type=Path)
    val_p.add_argument("--deterministic", action="store_true")
    val_p.set_defaults(func=cmd_validate)

    ver_p = sub.add_parser("version", help="print the package version")
    ver_p.set_defaults(func=_cmd_version)
    return parser


def _cmd_version(args) -> int:
    print(__version__)
    return 0


def output_dir(cfg: ExperimentConfig) -> Path:
    override = os.environ.get("PDESRC_OUT")
    return Path(override) if override else Path(cfg.output_directory)


def experiment_plan(cfg: ExperimentConfig) -> dict:
    sample_counts = list(cfg.time_sample_counts) if cfg.time_sample_counts else [None]
    snrs = list(cfg.snr_db) if cfg.snr_db else [None]
    cells = []
    for n_samples in sample_counts:
        for snr in snrs:
            cells.append({
                "samples_per_window": n_samples or len(cfg.times()),
                "snr_db": snr,
                "trials": cfg.trials,
            })
    return {
        "model": cfg.model_kind.value,
        "dimension": cfg.dimension,
        "method": cfg.method.value,
        "num_sources": cfg.num_sources,
        "distributed": cfg.gossip is not None,
        "cells": cells,
        "output_directory": str(output_dir(cfg)),
    }


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    plan = experiment_plan(cfg)
    if args.dry_run:
        print(json.dumps(plan, indent=2, sort_keys=True))
        return 0
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)

    tasks = []
    sample_counts = list(cfg.time_sample_counts) if cfg.time_sample_counts else [None]
    snrs = list(cfg.snr_db) if cfg.snr_db else [None]
    for n_samples in sample_counts:
        for snr_index, snr in enumerate(snrs):
            for trial in range(cfg.trials):
                tasks.append((cfg.raw, n_samples, snr_index, snr, trial, str(out)))

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_trial_task, tasks))
    else:
        results = [run_trial_task(t) for t in tasks]

    _write_aggregate(cfg, results, out, deterministic=args.deterministic)
    print(json.dumps({"status": "ok", "trials": len(results),
                      "output_directory": str(out)}, sort_keys=True))
    return 0


def run_trial_task(task) -> dict:
    """One (sample-count, SNR, trial) cell; safe for process pools."""
    raw, n_samples, snr_index, snr, trial, out = task
    cfg = ExperimentConfig.from_dict(raw)
    out = Path(out)
    model = cfg.field_model()
    filt = cfg.temporal_filter()
    truth = cfg.sources()
    net = cfg.network(trial=trial, n_samples=n_samples)
    clean = synthesize_samples(model, truth, net, filt)
    samples = clean
    if snr is not None:
        noise_seed = cfg.noise_seed + 7919 * snr_index + trial
        samples = add_noise(clean, snr, seed=noise_seed)

    label = _cell_label(n_samples or net.n_times, snr, trial)
    record = {
        "samples_per_window": int(net.n_times),
        "snr_db": snr,
        "trial": trial,
    }
    if cfg.gossip is not None:
        graph = graph_from_positions(net.positions, cfg.gossip.r_con)
        result = estimate_distributed(
            model, graph, net, samples,
            M=cfg.num_sources, K=cfg.k_max, r=cfg.r,
            rounds=cfg.gossip.rounds, seed=cfg.gossip.seed + trial,
            method=cfg.method, filt=filt, options=cfg.estimator_options(),
            trace_stride=cfg.gossip.trace_stride,
            trajectory_nodes=cfg.gossip.trajectory_nodes,
            trajectory_stride=cfg.gossip.trajectory_stride,
        )
        result.trace.to_csv(out / f"trace_{label}.csv")
        trajectories_to_csv(result, out / f"trajectory_{label}.csv", net.dimension)
        # The consensus average equals the centralised measurements; report it.
        from .estimator import extract_sources, validity_flags
        sources, harm = extract_sources(result.state.mean_tensor(), cfg.num_sources,
                                        result.scaling, seed=cfg.estimation_seed)
        valid = validity_flags(sources, harm, net.region, cfg.intensity_threshold)
        report_sources, report_valid, scaling = sources, valid, result.scaling
        diagnostics = {
            "mode": "distributed",
            "final_max_node_deviation": float(result.trace.max_deviation()[-1]),
        }
        residual = float("nan")
    else:
        report = estimate_centralized(
            model, net, samples,
            M=cfg.num_sources, K=cfg.k_max, r=cfg.r,
            method=cfg.method, filt=filt, seed=cfg.estimation_seed,
            options=cfg.estimator_options(),
        )
        report_sources, report_valid = report.sources, report.valid
        scaling = report.scaling
        diagnostics = {k: v for k, v in report.diagnostics.items()
                       if not isinstance(v, np.ndarray)}
        diagnostics["mode"] = "centralized"
        residual = report.residual

    errors = _truth_errors(truth, report_sources, report_valid, scaling)
    record.update(errors)
    payload = {
        "schema_version": "v1",
        "cell": record,
        "sources": [
            {
                "intensity": float(report_sources.intensities[m]),
                "activation_s": float(report_sources.activations[m]),
                "location": [float(v) for v in report_sources.locations[m]],
                "valid": bool(report_valid[m]),
            }
            for m in range(report_sources.count)
        ],
        "residual": residual if residual == residual else None,
        "diagnostics": diagnostics,
    }
    with open(out / f"trial_{label}.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return record


def _cell_label(n_samples, snr, trial) -> str:
    snr_tag = "clean" if snr is None else f"{snr:g}db"
    return f"L{n_samples}_{snr_tag}_{trial:03d}"


def _truth_errors(truth, estimate, valid, scaling) -> dict:
    if truth.count == 0 or estimate.count == 0:
        return {"location_mae_m": None, "activation_mae_s": None, "intensity_mae": None}
    perm, _ = match_sources(truth, estimate, scaling)
    loc = np.linalg.norm(estimate.locations[perm] - truth.locations, axis=1)
    tau = np.abs(estimate.activations[perm] - truth.activations)
    amp = np.abs(estimate.intensities[perm] - truth.intensities)
    return {
        "location_mae_m": float(np.mean(loc)),
        "activation_mae_s": float(np.mean(tau)),
        "intensity_mae": float(np.mean(amp)),
    }


def _write_aggregate(cfg, records, out: Path, deterministic: bool) -> None:
    """aggregate.csv: one row per (samples_per_window, snr) cell, MAE columns."""
    cells = {}
    for rec in records:
        key = (rec["samples_per_window"], rec["snr_db"])
        cells.setdefault(key, []).append(rec)
    lines = []
    if not deterministic:
        lines.append(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    lines.append(
        "samples_per_window,snr_db,trials,location_mae_m,activation_mae_s,intensity_mae"
    )
    for key in sorted(cells, key=lambda k: (k[0], -np.inf if k[1] is None else k[1])):
        recs = cells[key]
        loc = [r["location_mae_m"] for r in recs if r["location_mae_m"] is not None]
        tau = [r["activation_mae_s"] for r in recs if r["activation_mae_s"] is not None]
        amp = [r["intensity_mae"] for r in recs if r["intensity_mae"] is not None]
        snr_txt = "" if key[1] is None else repr(float(key[1]))
        lines.append(
            f"{key[0]},{snr_txt},{len(recs)},"
            f"{float(np.mean(loc))!r},{float(np.mean(tau))!r},{float(np.mean(amp))!r}"
        )
    with open(out / "aggregate.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_validate(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.field_model()
    filt = cfg.temporal_filter()
    net = cfg.network(trial=0)
    T = net.window if net.window > 0 else 1.0
    scaling = DomainScaling.for_region(net.region, T, cfg.headroom)
    opts = cfg.estimator_options()
    report = {"model": cfg.model_kind.value, "method": cfg.method.value}

    if cfg.method is WeightMethod.LEAST_SQUARES:
        grid = opts.dense_grid
        if grid is None:
            from .weights import DenseGrid
            grid = DenseGrid.default_for(net, static=model.is_static)
        weights = ls_coeffs(model, net, grid, cfg.k_max, cfg.r, filt, scaling,
                            cfg.k_min, cutoff=cfg.ls_cutoff)
        report["condition_number"] = weights.condition_number
        report["rank_deficient"] = weights.rank_deficient
    else:
        work_net = net
        if cfg.method is WeightMethod.INTERP_RESAMPLE:
            # Diagnostics evaluate the closed form on the resampling lattice.
            from .forward import SampleMatrix
            from .weights import interp_resample
            dummy = SampleMatrix(np.zeros((net.n_sensors, net.n_times)))
            _, work_net = interp_resample(dummy, net, opts.resample_grid)
        k_min = cfg.k_min
        if k_min is None:
            from .estimator import default_k_min
            k_min = default_k_min(model, WeightMethod.CLOSED_FORM, cfg.dimension)
        weights = uniform_coeffs(model, work_net, cfg.k_max, cfg.r, filt, scaling, k_min)
        rows = _reproduction_rows(weights, model, work_net, filt, scaling)
        path = out / "reproduction_error.csv"
        header = ",".join(f"k_{i+1}" for i in range(cfg.dimension))
        lines = []
        if not args.deterministic:
            lines.append(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}")
        lines.append(header + ",error_interior,error_full")
        lines.extend(rows)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        report["reproduction_csv"] = str(path)
        report["n_excluded"] = int(np.sum(weights.excluded))

    with open(out / "validation.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _reproduction_rows(weights, model, net, filt, scaling, per_dim_points: int = 5):
    """Interior (central 60%) and full-domain reproduction errors per k index."""
    region = net.region
    d = region.dimension

    def probe(box):
        axes = [np.linspace(box.lower[i], box.upper[i], per_dim_points + 2)[1:-1]
                for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, d)

    interior = probe(region.shrunk(0.6))
    full = probe(region)
    if model.is_static:
        snaps = None
    else:
        snaps = np.linspace(net.window / 4, net.window * 0.75, 3)
    rows = []
    for idx in np.ndindex(*weights.k_shape):
        k = tuple(weights.k_min[i] + idx[i] for i in range(d))
        if weights.excluded[idx]:
            rows.append(",".join(str(v) for v in k) + ",excluded,excluded")
            continue
        e_int = reproduction_error(weights, model, net, k, interior, snaps, filt, scaling)
        e_full = reproduction_error(weights, model, net, k, full, snaps, filt, scaling)
        rows.append(",".join(str(v) for v in k) + f",{e_int!r},{e_full!r}")
    return rows


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
