"""Time-dependent control waveforms.

A protocol schedule is an ordered list of segments:

* ``RapSegment`` -- one rapid-adiabatic-passage sweep of width ``T_p``. The
  Rabi envelope is a quartic-exponential bump floored so it is exactly zero
  at both sweep edges; the detuning is a half-period sine whose sign
  alternates with the sweep counter ``k`` so consecutive sweeps chain into a
  continuous chirp.
* ``GroundFlip`` -- instantaneous global pi rotation in the ground manifold
  (g0 <-> g1), leaving ryd and dump untouched.
* ``SquareSegment`` -- constant resonant drive, used for the pi-pulse
  baseline.
* ``IdleSegment`` -- no drive.

RAP segments also carry the ground level the laser couples to ``ryd``; the
laser-retarget entanglement variant switches it from g1 to g0 between
sweeps, with the switch itself taking zero time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .hilbert import LEVEL_CHARS, Operator, digit_of

#: Relative slack when locating the segment containing a query time.
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class RapParams:
    """One sweep of the RAP waveform family.

    ``sweep_width`` is the sweep duration T_p; ``tau_r`` and ``tau_d``
    default to 0.35*T_p and T_p. ``k_index`` (1-based) fixes the detuning
    sign (-1)**(k+1).
    """

    omega_max: float
    delta_max: float
    sweep_width: float
    tau_r: float | None = None
    tau_d: float | None = None
    k_index: int = 1

    def __post_init__(self) -> None:
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.sweep_width <= 0:
            raise ValueError("sweep_width must be positive")
        if self.k_index < 1:
            raise ValueError("k_index must be >= 1")
        if self.tau_r is None:
            object.__setattr__(self, "tau_r", 0.35 * self.sweep_width)
        if self.tau_d is None:
            object.__setattr__(self, "tau_d", self.sweep_width)
        if self.tau_r <= 0 or self.tau_d <= 0:
            raise ValueError("tau_r and tau_d must be positive")

    @property
    def floor_a(self) -> float:
        """Envelope floor, chosen so the Rabi amplitude vanishes at the edges."""
        return math.exp(-((self.sweep_width / (2.0 * self.tau_r)) ** 4))


def rap_waveform(t: float, p: RapParams) -> tuple[float, float]:
    """(omega, delta) at segment-local time t in [0, sweep_width]."""
    if t < -_TIME_EPS * p.sweep_width or t > (1.0 + _TIME_EPS) * p.sweep_width:
        raise ValueError(f"time {t} outside RAP segment of width {p.sweep_width}")
    x = t - 0.5 * p.sweep_width
    a = p.floor_a
    omega = p.omega_max * (math.exp(-((x / p.tau_r) ** 4)) - a) / (1.0 - a)
    delta = (-1.0) ** (p.k_index + 1) * p.delta_max * math.sin(math.pi * x / p.tau_d)
    return omega, delta


@dataclass(frozen=True)
class RapSegment:
    params: RapParams
    coupled_level: str = "g1"

    @property
    def duration(self) -> float:
        return self.params.sweep_width


@dataclass(frozen=True)
class GroundFlip:
    """Instantaneous global g0 <-> g1 flip."""

    duration: float = 0.0


@dataclass(frozen=True)
class SquareSegment:
    omega: float
    duration: float
    coupled_level: str = "g1"

    def __post_init__(self) -> None:
        if self.omega <= 0 or self.duration <= 0:
            raise ValueError("square segment needs positive omega and duration")


@dataclass(frozen=True)
class IdleSegment:
    duration: float

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("idle duration must be nonnegative")


Segment = Union[RapSegment, GroundFlip, SquareSegment, IdleSegment]


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("schedule must contain at least one segment")

    @property
    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def timed_segments(self) -> list[tuple[float, Segment]]:
        """(start_time, segment) pairs in schedule order."""
        out, t = [], 0.0
        for seg in self.segments:
            out.append((t, seg))
            t += seg.duration
        return out

    def waveform_at(self, t: float) -> tuple[float, float, str]:
        """(omega, delta, coupled_level) at global time t.

        Boundary times are attributed to the earlier finite segment;
        zero-duration gates are skipped. Idle stretches report a drive of
        zero coupled to g1.
        """
        total = self.total_duration
        if t < -_TIME_EPS * total or t > (1.0 + _TIME_EPS) * total:
            raise ValueError(f"time {t} outside schedule of duration {total}")
        remaining = min(max(t, 0.0), total)
        chosen: Segment | None = None
        for seg in self.segments:
            if seg.duration == 0.0:
                continue
            if remaining <= seg.duration * (1.0 + _TIME_EPS):
                chosen = seg
                break
            remaining -= seg.duration
        if chosen is None:  # t == total_duration: final driven segment
            for seg in reversed(self.segments):
                if seg.duration > 0.0:
                    chosen, remaining = seg, seg.duration
                    break
        if chosen is None:
            raise ValueError("schedule has no finite-duration segment")
        if isinstance(chosen, RapSegment):
            omega, delta = rap_waveform(min(remaining, chosen.duration), chosen.params)
            return omega, delta, chosen.coupled_level
        if isinstance(chosen, SquareSegment):
            return chosen.omega, 0.0, chosen.coupled_level
        return 0.0, 0.0, "g1"


def build_schedule(segments: Sequence[Segment]) -> PulseSchedule:
    """Assemble a schedule, assigning RAP sweep counters 1, 2, ... in order.

    Raises if consecutive RAP sweeps (ignoring zero-duration gates between
    them) have mismatched ``delta_max``, which would make the chirp jump.
    """
    if not segments:
        raise ValueError("schedule must contain at least one segment")
    out: list[Segment] = []
    k = 0
    prev_rap: RapSegment | None = None
    gap_since_rap = False
    for seg in segments:
        if isinstance(seg, RapSegment):
            k += 1
            seg = replace(seg, params=replace(seg.params, k_index=k))
            if prev_rap is not None and not gap_since_rap:
                d_prev, d_new = prev_rap.params.delta_max, seg.params.delta_max
                if abs(d_prev - d_new) > 1e-12 * max(abs(d_prev), abs(d_new), 1.0):
                    raise ValueError(
                        f"detuning discontinuity between RAP sweeps {k - 1} and {k}: "
                        f"delta_max {d_prev} vs {d_new}"
                    )
            prev_rap = seg
            gap_since_rap = False
        elif seg.duration > 0.0:
            gap_since_rap = True
        out.append(seg)
    return PulseSchedule(tuple(out))


def pi_g_unitary(n_atoms: int, dim_local: int) -> Operator:
    """Global unitary swapping g0 <-> g1 on every atom, identity on ryd/dump."""
    if dim_local < 3:
        raise ValueError("need at least 3 local levels")
    perm = ground_flip_permutation(n_atoms, dim_local)
    dim = dim_local**n_atoms
    mat = np.zeros((dim, dim), dtype=complex)
    mat[perm, np.arange(dim)] = 1.0
    return Operator(n_atoms, dim_local, mat)


def ground_flip_permutation(n_atoms: int, dim_local: int) -> np.ndarray:
    """Index permutation implementing the global g0<->g1 flip (an involution)."""
    dim = dim_local**n_atoms
    idx = np.arange(dim)
    out = np.zeros(dim, dtype=np.int64)
    for atom in range(n_atoms):
        shift = dim_local ** (n_atoms - 1 - atom)
        digit = digit_of(idx, atom, n_atoms, dim_local)
        swapped = np.where(digit == 0, 1, np.where(digit == 1, 0, digit))
        out += swapped * shift
    return out


def square_pi_segment(n_atoms_driven_collectively: int, omega: float, coupled_level: str = "g1") -> SquareSegment:
    """Resonant pulse of duration pi/(sqrt(n)*omega).

    In the perfect-blockade limit n collectively driven atoms behave as one
    two-level system with Rabi frequency sqrt(n)*omega, so this duration
    implements the collective pi rotation.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if n_atoms_driven_collectively < 1:
        raise ValueError("need at least one driven atom")
    duration = math.pi / (math.sqrt(n_atoms_driven_collectively) * omega)
    return SquareSegment(omega=omega, duration=duration, coupled_level=coupled_level)


def sample_waveforms(schedule: PulseSchedule, n_points: int = 400) -> np.ndarray:
    """Sample (t, omega, delta) rows over the whole schedule for export."""
    if n_points < 2:
        raise ValueError("need at least 2 sample points")
    total = schedule.total_duration
    ts = np.linspace(0.0, total, n_points)
    rows = np.zeros((n_points, 3))
    for i, t in enumerate(ts):
        omega, delta, _ = schedule.waveform_at(float(t))
        rows[i] = (t, omega, delta)
    return rows
