"""Experiment battery: saturation scans, time scans with a pi-pulse
baseline, robustness grids, positional Monte Carlo and derivative-free
pulse-parameter optimization.

Grid points and Monte-Carlo samples are evaluated in parallel worker
processes (``RAPGEN_WORKERS`` overrides the count); every sample owns an rng
stream derived from ``(seed, grid index, sample index)`` and reduction order
is fixed, so results are reproducible bit for bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .dynamics import IntegratorSettings
from .geometry import AtomLayout, perturb_positions
from .protocols import (
    PRESET_LIFETIME_US,
    ProtocolSpec,
    build_protocol,
    default_spec,
    simulate_protocol,
)

WORKERS_ENV = "RAPGEN_WORKERS"


def worker_count() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value is not None:
        return max(1, int(value))
    return max(1, os.cpu_count() or 1)


def _run_point(task: tuple) -> float:
    spec, dissipation, layout, settings = task
    return simulate_protocol(spec, dissipation=dissipation, layout=layout, settings=settings).fidelity


def _evaluate_all(tasks: list[tuple]) -> list[float]:
    n_workers = worker_count()
    if n_workers == 1 or len(tasks) == 1:
        return [_run_point(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * n_workers))
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_point, tasks, chunksize=chunk))


@dataclass(frozen=True)
class SweepResult:
    """Gridded fidelity table with optional per-sample spread."""

    axes: dict[str, np.ndarray]
    values: np.ndarray
    std: np.ndarray | None
    n_samples: int
    seed: int | None
    protocol: dict
    samples: np.ndarray | None = None  # raw fidelities, shape values.shape + (n_samples,)

    def __post_init__(self) -> None:
        shape = tuple(len(a) for a in self.axes.values())
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")
        if (self.std is not None) != (self.n_samples > 1):
            raise ValueError("std must be present exactly when n_samples > 1")

    def rows(self) -> list[dict]:
        """Long-format rows: one per grid point, or per sample when sampled."""
        names = list(self.axes)
        grids = np.meshgrid(*self.axes.values(), indexing="ij")
        out = []
        for idx in np.ndindex(self.values.shape):
            point = {name: float(g[idx]) for name, g in zip(names, grids)}
            if self.samples is not None:
                for s in range(self.n_samples):
                    out.append({**point, "sample_index": s, "fidelity": float(self.samples[idx + (s,)])})
            else:
                row = {**point, "fidelity": float(self.values[idx])}
                if self.std is not None:
                    row["fidelity_std"] = float(self.std[idx])
                out.append(row)
        return out

    def summary(self) -> dict:
        out = {
            "axes": {k: np.asarray(v).tolist() for k, v in self.axes.items()},
            "fidelity": self.values.tolist(),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "protocol": self.protocol,
        }
        if self.std is not None:
            out["fidelity_std"] = self.std.tolist()
        return out


def saturation_scan(
    spec: ProtocolSpec,
    v_grid: Sequence[float],
    plateau_eps: float = 0.1,
    settings: IntegratorSettings | None = None,
) -> tuple[SweepResult, float]:
    """Dissipation-free fidelity against interaction strength.

    The saturation interaction is the smallest grid value whose infidelity
    is within ``plateau_eps`` (relative) of the large-interaction plateau,
    taken as the mean infidelity of the top three grid points.
    """
    v_grid = np.asarray(v_grid, dtype=float)
    if len(v_grid) < 5:
        raise ValueError("need at least 5 interaction grid points")
    if np.any(np.diff(v_grid) <= 0):
        raise ValueError("interaction grid must be strictly ascending")
    tasks = [(replace(spec, v0=float(v)), False, None, settings) for v in v_grid]
    fidelities = np.array(_evaluate_all(tasks))
    infid = 1.0 - fidelities
    plateau = infid[-3:].mean()
    v_sat = None
    for v, i in zip(v_grid, infid):
        if i <= plateau * (1.0 + plateau_eps):
            v_sat = float(v)
            break
    if v_sat is None:
        v_sat = float(v_grid[-1])
    result = SweepResult(
        axes={"v0": v_grid},
        values=fidelities,
        std=None,
        n_samples=1,
        seed=None,
        protocol=asdict(spec),
    )
    return result, v_sat


def _baseline_spec(spec: ProtocolSpec, baseline: str) -> ProtocolSpec:
    if baseline == "rap":
        return spec
    if baseline == "pi_pulse":
        name = spec.name if spec.name.startswith("pi_pulse") else f"pi_pulse_{spec.name}"
        return default_spec(
            name,
            sweep_width=spec.sweep_width,
            v0=spec.v0,
            delta_max=spec.delta_max,
            preset=spec.preset,
            omega0_2pi_mhz=spec.omega0_2pi_mhz,
        )
    raise ValueError(f"unknown baseline {baseline!r}")


def time_scan(
    spec: ProtocolSpec,
    total_times_us: Sequence[float],
    baseline: str = "rap",
    settings: IntegratorSettings | None = None,
) -> SweepResult:
    """Fidelity against total physical duration at fixed pulse shape.

    The dimensionless protocol is kept fixed and the physical duration is
    realized by rescaling the reference Rabi frequency, which only changes
    the dimensionless decay rate: gamma = (t / lifetime) / tau_total.
    """
    times = np.asarray(total_times_us, dtype=float)
    if np.any(times <= 0):
        raise ValueError("total times must be positive")
    run_spec = _baseline_spec(spec, baseline)
    tau_tot = run_spec.total_duration
    lifetime = PRESET_LIFETIME_US.get(run_spec.preset)
    tasks = []
    for t_us in times:
        gamma = 0.0 if lifetime is None else (t_us / lifetime) / tau_tot
        tasks.append((replace(run_spec, gamma_r=gamma), True, None, settings))
    fidelities = np.array(_evaluate_all(tasks))
    return SweepResult(
        axes={"total_time_us": times},
        values=fidelities,
        std=None,
        n_samples=1,
        seed=None,
        protocol=asdict(run_spec),
    )


def robustness_grid(
    spec: ProtocolSpec,
    omega_scales: Sequence[float],
    delta_scales: Sequence[float],
    settings: IntegratorSettings | None = None,
) -> SweepResult:
    """Fidelity with dissipation over multiplicative amplitude/detuning scales."""
    omega_scales = np.asarray(omega_scales, dtype=float)
    delta_scales = np.asarray(delta_scales, dtype=float)
    for name, grid in (("omega", omega_scales), ("delta", delta_scales)):
        if not np.any(np.isclose(grid, 1.0)):
            raise ValueError(f"{name} scale grid must contain 1.0")
    tasks = []
    for a in omega_scales:
        for b in delta_scales:
            scaled = replace(spec, omega_max=float(a) * spec.omega_max, delta_max=float(b) * spec.delta_max)
            tasks.append((scaled, True, None, settings))
    fidelities = np.array(_evaluate_all(tasks)).reshape(len(omega_scales), len(delta_scales))
    return SweepResult(
        axes={"omega_scale": omega_scales, "delta_scale": delta_scales},
        values=fidelities,
        std=None,
        n_samples=1,
        seed=None,
        protocol=asdict(spec),
    )


def montecarlo_positions(
    spec: ProtocolSpec,
    sigma_grid: Sequence[float],
    n_samples: int = 30,
    dims: int = 2,
    seed: int = 0,
    dissipation: bool = False,
    settings: IntegratorSettings | None = None,
) -> SweepResult:
    """Fidelity statistics under Gaussian positional fluctuations.

    Positions are resampled per (sigma, sample) from streams derived from
    the seed, and the interactions recomputed from the displaced geometry.
    Dissipation is off by default so the scan isolates geometric effects.
    """
    sigmas = np.asarray(sigma_grid, dtype=float)
    if n_samples < 2:
        raise ValueError("need at least 2 samples per sigma")
    if np.any(sigmas < 0):
        raise ValueError("sigma values must be nonnegative")
    layout0, *_ = build_protocol(spec)
    tasks = []
    for i, sigma in enumerate(sigmas):
        for k in range(n_samples):
            rng = np.random.default_rng([seed, i, k])
            layout = perturb_positions(layout0, float(sigma), dims, rng)
            tasks.append((spec, dissipation, layout, settings))
    fidelities = np.array(_evaluate_all(tasks)).reshape(len(sigmas), n_samples)
    return SweepResult(
        axes={"sigma": sigmas},
        values=fidelities.mean(axis=1),
        std=fidelities.std(axis=1, ddof=1),
        n_samples=n_samples,
        seed=seed,
        protocol=asdict(spec),
        samples=fidelities,
    )


@dataclass(frozen=True)
class OptimizeOutcome:
    best_params: tuple[float, ...]
    best_fidelity: float
    trace: tuple[tuple[float, ...], ...]  # (params..., fidelity) per evaluation
    converged: bool


def optimize_pulse(
    spec: ProtocolSpec,
    init: Sequence[float] | None = None,
    bounds: Sequence[tuple[float, float]] | None = None,
    max_evals: int = 200,
    include_widths: bool = False,
    settings: IntegratorSettings | None = None,
) -> OptimizeOutcome:
    """Nelder-Mead search maximizing the dissipation-free fidelity.

    Optimizes ``(omega_max, delta_max)``, or with ``include_widths`` also
    the envelope/detuning widths as fractions of the sweep width. Returns
    the best evaluated point (never worse than the initial one) plus the
    full evaluation trace.
    """
    if init is None:
        init = (spec.omega_max, spec.delta_max)
        if include_widths:
            init = init + (0.35, 1.0)
    init = tuple(float(x) for x in init)
    n_params = 4 if include_widths else 2
    if len(init) != n_params:
        raise ValueError(f"init must have {n_params} entries")
    if bounds is None:
        bounds = tuple((0.2 * x, 5.0 * x) for x in init)
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    for x, (lo, hi) in zip(init, bounds):
        if lo <= 0 or hi <= lo:
            raise ValueError("bounds must be positive and ordered")
        if not lo <= x <= hi:
            raise ValueError("init must lie within bounds")

    trace: list[tuple[float, ...]] = []

    def objective(x: np.ndarray) -> float:
        params = dict(omega_max=float(x[0]), delta_max=float(x[1]))
        if include_widths:
            params["tau_r_frac"] = float(x[2])
            params["tau_d_frac"] = float(x[3])
        trial = replace(spec, **params)
        fid = simulate_protocol(trial, dissipation=False, settings=settings).fidelity
        trace.append(tuple(x) + (fid,))
        return 1.0 - fid

    result = minimize(
        objective,
        np.asarray(init),
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-9},
    )
    best = max(trace, key=lambda row: row[-1])
    return OptimizeOutcome(
        best_params=best[:-1],
        best_fidelity=best[-1],
        trace=tuple(trace),
        converged=bool(result.success),
    )
