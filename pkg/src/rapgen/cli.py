"""Batch command-line front-end.

One subcommand per experiment; each run reads a JSON config, executes, and
writes CSV/JSON artifacts plus a manifest into the output directory. Files
are written atomically (temp file + rename). The worker count for grid
experiments can be overridden with the ``RAPGEN_WORKERS`` environment
variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, config_to_dict, load_config, _grid
from .dynamics import IntegrationError, channels_from_scheme, population_history
from .experiments import (
    montecarlo_positions,
    optimize_pulse,
    robustness_grid,
    saturation_scan,
    time_scan,
)
from .geometry import interaction_matrix
from .hilbert import basis_labels
from .protocols import build_protocol, protocol_fidelity, simulate_protocol
from .pulses import sample_waveforms

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _atomic_write(path: Path, write_fn) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            write_fn(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    def emit(handle):
        writer = csv.DictWriter(handle, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    _atomic_write(path, emit)


def write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, lambda h: json.dump(payload, h, indent=2, sort_keys=True))


def _apply_convention(value: float, convention: str) -> float:
    return value**2 if convention == "paper" else value


def _convert_rows(rows: list[dict], convention: str) -> list[dict]:
    if convention != "paper":
        return rows
    out = []
    for row in rows:
        row = dict(row)
        if "fidelity" in row:
            row["fidelity"] = row["fidelity"] ** 2
        row.pop("fidelity_std", None)  # spread is recomputed from samples
        out.append(row)
    return out


def _option(cfg: RunConfig, key: str, default=None, required: bool = False):
    if key in cfg.options:
        return cfg.options[key]
    if required:
        raise ConfigError(f"options.{key}", "missing required field")
    return default


def _run_simulate(cfg: RunConfig, out: Path) -> dict:
    spec = cfg.protocol
    layout, scheme, schedule, psi0, target = build_protocol(spec)
    v = interaction_matrix(layout)
    n_points = _option(cfg, "checkpoints", 400)
    if not isinstance(n_points, int) or n_points < 2:
        raise ConfigError("options.checkpoints", "expected an integer >= 2")
    state0 = psi0.to_density() if scheme.has_channels else psi0
    final, times, pops = population_history(
        state0, schedule, v, scheme, settings=cfg.integrator, n_points=n_points
    )
    fid = protocol_fidelity(spec, final)
    labels = basis_labels(spec.n_atoms, scheme.dim_local)
    rows = [
        {"t": float(t), "state": lab, "population": float(p)}
        for t, pop_row in zip(times, pops)
        for lab, p in zip(labels, pop_row)
    ]
    write_csv(out / "populations.csv", rows, ["t", "state", "population"])
    wf_rows = [
        {"t": float(t), "omega": float(o), "delta": float(d)}
        for t, o, d in sample_waveforms(schedule, n_points)
    ]
    write_csv(out / "waveform.csv", wf_rows, ["t", "omega", "delta"])
    summary = {
        "fidelity": _apply_convention(fid, cfg.convention),
        "convention": cfg.convention,
        "total_duration": schedule.total_duration,
        "protocol": asdict(spec),
    }
    write_json(out / "result.json", summary)
    return {"files": ["populations.csv", "waveform.csv", "result.json"], "fidelity": summary["fidelity"]}


def _run_saturation(cfg: RunConfig, out: Path) -> dict:
    grid = _grid(_option(cfg, "v0_grid", required=True), "options.v0_grid")
    eps = float(_option(cfg, "plateau_eps", 0.1))
    result, v_sat = saturation_scan(cfg.protocol, grid, plateau_eps=eps, settings=cfg.integrator)
    rows = _convert_rows(result.rows(), cfg.convention)
    write_csv(out / "saturation.csv", rows, ["v0", "fidelity"])
    summary = result.summary()
    summary["v_sat"] = v_sat
    summary["plateau_eps"] = eps
    write_json(out / "summary.json", summary)
    return {"files": ["saturation.csv", "summary.json"], "v_sat": v_sat}


def _run_timescan(cfg: RunConfig, out: Path) -> dict:
    grid = _grid(_option(cfg, "total_time_us_grid", required=True), "options.total_time_us_grid")
    baseline = _option(cfg, "baseline", "rap")
    if baseline not in ("rap", "pi_pulse"):
        raise ConfigError("options.baseline", "expected 'rap' or 'pi_pulse'")
    result = time_scan(cfg.protocol, grid, baseline=baseline, settings=cfg.integrator)
    rows = _convert_rows(result.rows(), cfg.convention)
    for row in rows:
        row["baseline"] = baseline
    write_csv(out / "timescan.csv", rows, ["total_time_us", "fidelity", "baseline"])
    write_json(out / "summary.json", result.summary())
    return {"files": ["timescan.csv", "summary.json"]}


def _run_robustness(cfg: RunConfig, out: Path) -> dict:
    omega_scales = _grid(_option(cfg, "omega_scales", required=True), "options.omega_scales")
    delta_scales = _grid(_option(cfg, "delta_scales", required=True), "options.delta_scales")
    result = robustness_grid(cfg.protocol, omega_scales, delta_scales, settings=cfg.integrator)
    rows = _convert_rows(result.rows(), cfg.convention)
    write_csv(out / "robustness.csv", rows, ["omega_scale", "delta_scale", "fidelity"])
    summary = result.summary()
    summary["min_fidelity"] = _apply_convention(float(result.values.min()), cfg.convention)
    write_json(out / "summary.json", summary)
    return {"files": ["robustness.csv", "summary.json"], "min_fidelity": summary["min_fidelity"]}


def _run_montecarlo(cfg: RunConfig, out: Path) -> dict:
    sigmas = _grid(_option(cfg, "sigma_grid", required=True), "options.sigma_grid")
    n_samples = _option(cfg, "n_samples", 30)
    if not isinstance(n_samples, int) or n_samples < 2:
        raise ConfigError("options.n_samples", "expected an integer >= 2")
    dims = _option(cfg, "dims", 2)
    if dims not in (1, 2, 3):
        raise ConfigError("options.dims", "expected 1, 2 or 3")
    dissipation = bool(_option(cfg, "dissipation", False))
    result = montecarlo_positions(
        cfg.protocol,
        sigmas,
        n_samples=n_samples,
        dims=dims,
        seed=cfg.seed,
        dissipation=dissipation,
        settings=cfg.integrator,
    )
    rows = _convert_rows(result.rows(), cfg.convention)
    write_csv(out / "montecarlo.csv", rows, ["sigma", "sample_index", "fidelity"])
    samples = result.samples**2 if cfg.convention == "paper" else result.samples
    summary = result.summary()
    summary["fidelity"] = samples.mean(axis=1).tolist()
    summary["fidelity_std"] = samples.std(axis=1, ddof=1).tolist()
    summary["convention"] = cfg.convention
    summary["dims"] = dims
    summary["dissipation"] = dissipation
    write_json(out / "summary.json", summary)
    return {"files": ["montecarlo.csv", "summary.json"]}


def _run_optimize(cfg: RunConfig, out: Path) -> dict:
    init = _option(cfg, "init")
    bounds = _option(cfg, "bounds")
    max_evals = _option(cfg, "max_evals", 200)
    include_widths = bool(_option(cfg, "include_widths", False))
    if not isinstance(max_evals, int) or max_evals < 1:
        raise ConfigError("options.max_evals", "expected a positive integer")
    if bounds is not None:
        try:
            bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        except (TypeError, ValueError):
            raise ConfigError("options.bounds", "expected a list of [low, high] pairs")
    if init is not None:
        try:
            init = [float(x) for x in init]
        except (TypeError, ValueError):
            raise ConfigError("options.init", "expected a list of numbers")
    outcome = optimize_pulse(
        cfg.protocol,
        init=init,
        bounds=bounds,
        max_evals=max_evals,
        include_widths=include_widths,
        settings=cfg.integrator,
    )
    names = ["omega_max", "delta_max"] + (["tau_r_frac", "tau_d_frac"] if include_widths else [])
    rows = [
        {**dict(zip(names, row[:-1])), "fidelity": _apply_convention(row[-1], cfg.convention)}
        for row in outcome.trace
    ]
    write_csv(out / "optimize_trace.csv", rows, names + ["fidelity"])
    summary = {
        "best_params": dict(zip(names, outcome.best_params)),
        "best_fidelity": _apply_convention(outcome.best_fidelity, cfg.convention),
        "converged": outcome.converged,
        "n_evaluations": len(outcome.trace),
        "protocol": asdict(cfg.protocol),
        "convention": cfg.convention,
    }
    write_json(out / "summary.json", summary)
    return {"files": ["optimize_trace.csv", "summary.json"], "best_fidelity": summary["best_fidelity"]}


_RUNNERS = {
    "simulate": _run_simulate,
    "saturation": _run_saturation,
    "timescan": _run_timescan,
    "robustness": _run_robustness,
    "montecarlo": _run_montecarlo,
    "optimize": _run_optimize,
}


def run(cfg: RunConfig) -> dict:
    """Execute a run config, writing artifacts and a manifest; returns the manifest."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outcome = _RUNNERS[cfg.experiment](cfg, out)
    manifest = {
        "tool": "rapgen",
        "version": __version__,
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "wall_time_s": time.time() - started,
        **outcome,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rapgen",
        description="Entanglement-generation simulator for Rydberg atom arrays driven by sequential adiabatic sweeps.",
        epilog=f"Set {os.environ.get('RAPGEN_WORKERS', 'RAPGEN_WORKERS')} to override the worker count.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a config file")
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument(
            "--convention",
            choices=("standard", "paper"),
            default=None,
            help="fidelity convention for reported values",
        )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError("experiment", f"config requests {cfg.experiment!r} but subcommand is {args.command!r}")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        if args.convention is not None:
            cfg = replace(cfg, convention=args.convention)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({k: manifest[k] for k in ("tool", "version", "files") if k in manifest}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
