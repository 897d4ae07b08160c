"""Conversion between physical and dimensionless quantities.

Internally everything is expressed in units of the reference Rabi frequency
Omega0 (angular): rates are divided by Omega0 and times multiplied by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalUnits:
    """Physical calibration of the dimensionless unit system."""

    omega0_over_2pi_mhz: float = 100.0
    gamma_inverse_us: float | None = None  # optional explicit Rydberg lifetime

    def __post_init__(self) -> None:
        if self.omega0_over_2pi_mhz <= 0:
            raise ValueError("omega0_over_2pi_MHz must be positive")
        if self.gamma_inverse_us is not None and self.gamma_inverse_us <= 0:
            raise ValueError("gamma_inverse_us must be positive")

    @property
    def omega0_rad_per_s(self) -> float:
        return 2.0 * math.pi * self.omega0_over_2pi_mhz * 1e6


def to_dimensionless(physical: PhysicalUnits, quantity: str, value: float) -> float:
    """Convert a physical value to Omega0 units.

    ``rate``: 1/s -> rate/Omega0; ``time``: s -> Omega0*t;
    ``frequency``: Hz (cyclic) -> 2*pi*f/Omega0.
    """
    omega0 = physical.omega0_rad_per_s
    if quantity == "rate":
        if value <= 0:
            raise ValueError("rate must be positive")
        return value / omega0
    if quantity == "time":
        if value <= 0:
            raise ValueError("time must be positive")
        return value * omega0
    if quantity == "frequency":
        if value <= 0:
            raise ValueError("frequency must be positive")
        return 2.0 * math.pi * value / omega0
    raise ValueError(f"unknown quantity kind {quantity!r}")


def decay_rate_dimensionless(lifetime_us: float, omega0_over_2pi_mhz: float) -> float:
    """Dimensionless decay rate for a lifetime in microseconds."""
    if lifetime_us <= 0 or omega0_over_2pi_mhz <= 0:
        raise ValueError("lifetime and Omega0 must be positive")
    return 1.0 / (2.0 * math.pi * lifetime_us * omega0_over_2pi_mhz)


def dimensionless_time(total_time_us: float, omega0_over_2pi_mhz: float) -> float:
    """Omega0 * t for a duration in microseconds."""
    if total_time_us <= 0:
        raise ValueError("time must be positive")
    return 2.0 * math.pi * total_time_us * omega0_over_2pi_mhz
