"""Run configuration: JSON schema, validation and round-tripping.

A run config selects exactly one experiment, the protocol it operates on,
optional physical-unit calibration and integrator overrides. Validation
errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .dynamics import IntegratorSettings
from .protocols import PROTOCOL_NAMES, ProtocolSpec, default_spec
from .units import PhysicalUnits, dimensionless_time

SCHEMA_VERSION = 1

EXPERIMENTS = ("simulate", "saturation", "timescan", "robustness", "montecarlo", "optimize")


class ConfigError(ValueError):
    """Invalid run configuration; message names the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    protocol: ProtocolSpec
    options: dict[str, Any] = field(default_factory=dict)
    physical_units: PhysicalUnits | None = None
    seed: int = 0
    output_dir: str = "."
    convention: str = "standard"
    integrator: IntegratorSettings | None = None
    schema_version: int = SCHEMA_VERSION


def _require(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return mapping[key]


def _number(value: Any, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _grid(value: Any, path: str) -> list[float]:
    """Accept an explicit list or {"start", "stop", "num"}."""
    if isinstance(value, list):
        if not value:
            raise ConfigError(path, "grid must be nonempty")
        return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, dict):
        start = _number(_require(value, "start", path), f"{path}.start")
        stop = _number(_require(value, "stop", path), f"{path}.stop")
        num = _require(value, "num", path)
        if not isinstance(num, int) or num < 2:
            raise ConfigError(f"{path}.num", "expected an integer >= 2")
        step = (stop - start) / (num - 1)
        return [start + i * step for i in range(num)]
    raise ConfigError(path, "expected a list or {start, stop, num}")


def _parse_protocol(raw: Any, physical: PhysicalUnits | None) -> ProtocolSpec:
    if not isinstance(raw, dict):
        raise ConfigError("protocol", "expected an object")
    name = _require(raw, "name", "protocol")
    if name not in PROTOCOL_NAMES:
        raise ConfigError("protocol.name", f"unknown protocol {name!r}; choose from {PROTOCOL_NAMES}")
    overrides: dict[str, Any] = {}
    numeric = ("omega_max", "delta_max", "v0", "sweep_width", "omega0_2pi_mhz", "gamma_r", "tau_r_frac", "tau_d_frac")
    for key in numeric:
        if key in raw:
            overrides[key] = _number(raw[key], f"protocol.{key}")
    for key in ("preset", "ground_coupling_mode"):
        if key in raw:
            if not isinstance(raw[key], str):
                raise ConfigError(f"protocol.{key}", "expected a string")
            overrides[key] = raw[key]
    if "total_time_us" in raw:
        if "sweep_width" in raw:
            raise ConfigError("protocol.total_time_us", "give either total_time_us or sweep_width, not both")
        omega0 = physical.omega0_over_2pi_mhz if physical else overrides.get("omega0_2pi_mhz", 100.0)
        n_sweeps = 3 if name == "relay_bell3" else 2
        total = _number(raw["total_time_us"], "protocol.total_time_us")
        if total <= 0:
            raise ConfigError("protocol.total_time_us", "must be positive")
        overrides["sweep_width"] = dimensionless_time(total, omega0) / n_sweeps
    if physical is not None:
        overrides.setdefault("omega0_2pi_mhz", physical.omega0_over_2pi_mhz)
        if physical.gamma_inverse_us is not None:
            overrides.setdefault(
                "gamma_r",
                1.0 / (2.0 * math.pi * physical.gamma_inverse_us * physical.omega0_over_2pi_mhz),
            )
    unknown = set(raw) - set(numeric) - {"name", "preset", "ground_coupling_mode", "total_time_us"}
    if unknown:
        raise ConfigError(f"protocol.{sorted(unknown)[0]}", "unknown field")
    try:
        return default_spec(name, **overrides)
    except ValueError as exc:
        raise ConfigError("protocol", str(exc)) from exc


def _parse_units(raw: Any) -> PhysicalUnits:
    if not isinstance(raw, dict):
        raise ConfigError("physical_units", "expected an object")
    kwargs = {}
    if "omega0_over_2pi_MHz" in raw:
        kwargs["omega0_over_2pi_mhz"] = _number(raw["omega0_over_2pi_MHz"], "physical_units.omega0_over_2pi_MHz")
    if "gamma_inverse_us" in raw:
        kwargs["gamma_inverse_us"] = _number(raw["gamma_inverse_us"], "physical_units.gamma_inverse_us")
    try:
        return PhysicalUnits(**kwargs)
    except ValueError as exc:
        raise ConfigError("physical_units", str(exc)) from exc


def _parse_integrator(raw: Any) -> IntegratorSettings:
    if not isinstance(raw, dict):
        raise ConfigError("integrator", "expected an object")
    kwargs: dict[str, Any] = {}
    for key in ("rel_tol", "abs_tol", "max_step"):
        if key in raw:
            kwargs[key] = _number(raw[key], f"integrator.{key}")
    if "method" in raw:
        kwargs["method"] = raw["method"]
    try:
        return IntegratorSettings(**kwargs)
    except ValueError as exc:
        raise ConfigError("integrator", str(exc)) from exc


def parse_config(data: Any) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "config root must be an object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}; expected {SCHEMA_VERSION}")
    experiment = _require(data, "experiment", "config")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    physical = _parse_units(data["physical_units"]) if "physical_units" in data else None
    protocol = _parse_protocol(_require(data, "protocol", "config"), physical)
    options = data.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options", "expected an object")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "expected an integer")
    convention = data.get("convention", "standard")
    if convention not in ("standard", "paper"):
        raise ConfigError("convention", "expected 'standard' or 'paper'")
    integrator = _parse_integrator(data["integrator"]) if "integrator" in data else None
    output_dir = data.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir", "expected a string path")
    return RunConfig(
        experiment=experiment,
        protocol=protocol,
        options=dict(options),
        physical_units=physical,
        seed=seed,
        output_dir=output_dir,
        convention=convention,
        integrator=integrator,
        schema_version=SCHEMA_VERSION,
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}")
    return parse_config(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-serializable snapshot that reparses to an equal config."""
    out: dict[str, Any] = {
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment,
        "protocol": {k: v for k, v in asdict(cfg.protocol).items() if v is not None},
        "options": cfg.options,
        "seed": cfg.seed,
        "convention": cfg.convention,
        "output_dir": cfg.output_dir,
    }
    if cfg.physical_units is not None:
        units: dict[str, Any] = {"omega0_over_2pi_MHz": cfg.physical_units.omega0_over_2pi_mhz}
        if cfg.physical_units.gamma_inverse_us is not None:
            units["gamma_inverse_us"] = cfg.physical_units.gamma_inverse_us
        out["physical_units"] = units
    if cfg.integrator is not None:
        out["integrator"] = {
            "rel_tol": cfg.integrator.rel_tol,
            "abs_tol": cfg.integrator.abs_tol,
            "method": cfg.integrator.method,
        }
        if math.isfinite(cfg.integrator.max_step):
            out["integrator"]["max_step"] = cfg.integrator.max_step
    return out
