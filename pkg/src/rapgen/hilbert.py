"""Tensor-product Hilbert space over n atoms with 3 or 4 local levels.

Basis convention: atom 0 is the slowest-varying digit, so a basis index i
decomposes into per-atom digits via repeated division by ``dim_local``.
Local level order is fixed: g0=0, g1=1, ryd=2, dump=3, written as the
characters ``0 1 r d`` in basis-state labels such as ``"1r0"``.

All quantities are dimensionless; rates are in units of the reference Rabi
frequency and times are its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

LEVEL_NAMES = ("g0", "g1", "ryd", "dump")
LEVEL_CHARS = "01rd"

#: Maximum elementwise deviation allowed by state validation.
PURE_NORM_TOL = 1e-9
DENSITY_HERM_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-9
DENSITY_EIG_FLOOR = -1e-8


def level_index(level: str) -> int:
    """Index of a level name (``g0``/``g1``/``ryd``/``dump``) or char (``0 1 r d``)."""
    if level in LEVEL_NAMES:
        return LEVEL_NAMES.index(level)
    if level in LEVEL_CHARS:
        return LEVEL_CHARS.index(level)
    raise ValueError(f"unknown level {level!r}")


@dataclass(frozen=True)
class LevelScheme:
    """Per-atom level set with decay channels.

    ``decay_channels`` entries are ``(from_level, to_level, rate)``;
    ``to_level == from_level`` denotes a pure-dephasing channel on that
    level. ``gamma_r`` is the total dissipation rate out of / on the
    Rydberg state, in units of the reference Rabi frequency.
    """

    levels: tuple[str, ...] = ("g0", "g1", "ryd")
    decay_channels: tuple[tuple[str, str, float], ...] = ()
    gamma_r: float = 0.0

    def __post_init__(self) -> None:
        if "ryd" not in self.levels:
            raise ValueError("level scheme must contain the Rydberg level 'ryd'")
        if self.dim_local not in (3, 4):
            raise ValueError(f"dim_local must be 3 or 4, got {self.dim_local}")
        targets_dump = any(to == "dump" for _, to, _ in self.decay_channels)
        if targets_dump != ("dump" in self.levels):
            raise ValueError("dump level must be present iff a channel targets it")
        for frm, to, rate in self.decay_channels:
            if frm not in self.levels or to not in self.levels:
                raise ValueError(f"channel ({frm!r}, {to!r}) uses unknown level")
            if rate < 0:
                raise ValueError("channel rates must be nonnegative")
        if self.gamma_r < 0:
            raise ValueError("gamma_r must be nonnegative")

    @property
    def dim_local(self) -> int:
        return len(self.levels)

    @property
    def has_channels(self) -> bool:
        return any(rate > 0 for _, _, rate in self.decay_channels)


def closed_scheme(dim_local: int = 3) -> LevelScheme:
    """Dissipation-free scheme with 3 or 4 local levels."""
    levels = LEVEL_NAMES[:dim_local]
    if dim_local == 4:
        # A 4-level closed scheme still needs a dump-targeting channel to
        # justify the level; use rate 0 so dynamics are unaffected.
        return LevelScheme(levels, (("ryd", "dump", 0.0),), 0.0)
    return LevelScheme(levels, (), 0.0)


def cesium_scheme(gamma_r: float) -> LevelScheme:
    """Cs-style dissipation: branching gamma_r/16 to each qubit state plus
    7*gamma_r/8 Rydberg dephasing; the three rates sum to gamma_r."""
    return LevelScheme(
        levels=("g0", "g1", "ryd"),
        decay_channels=(
            ("ryd", "g0", gamma_r / 16.0),
            ("ryd", "g1", gamma_r / 16.0),
            ("ryd", "ryd", 7.0 * gamma_r / 8.0),
        ),
        gamma_r=gamma_r,
    )


def rubidium_scheme(gamma_r: float) -> LevelScheme:
    """Rb-style dissipation: all Rydberg decay collected in a dump level."""
    return LevelScheme(
        levels=("g0", "g1", "ryd", "dump"),
        decay_channels=(("ryd", "dump", gamma_r),),
        gamma_r=gamma_r,
    )


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuantumState:
    """Pure state vector or density matrix over the n-atom tensor space."""

    kind: Literal["pure", "density"]
    n_atoms: int
    dim_local: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        dim = self.dim_local**self.n_atoms
        amps = _readonly(self.amplitudes)
        if self.kind == "pure":
            if amps.shape != (dim,):
                raise ValueError(f"pure state must have shape ({dim},), got {amps.shape}")
        elif self.kind == "density":
            if amps.shape != (dim, dim):
                raise ValueError(f"density matrix must have shape ({dim},{dim}), got {amps.shape}")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.dim_local**self.n_atoms

    def validate(self) -> None:
        """Check the numeric state invariants; raise ValueError on violation."""
        if self.kind == "pure":
            norm = float(np.linalg.norm(self.amplitudes))
            if abs(norm - 1.0) > PURE_NORM_TOL:
                raise ValueError(f"pure state norm {norm} deviates from 1 beyond {PURE_NORM_TOL}")
            return
        rho = self.amplitudes
        herm_dev = float(np.max(np.abs(rho - rho.conj().T)))
        if herm_dev > DENSITY_HERM_TOL:
            raise ValueError(f"density matrix non-Hermitian by {herm_dev}")
        trace_dev = abs(complex(np.trace(rho)) - 1.0)
        if trace_dev > DENSITY_TRACE_TOL:
            raise ValueError(f"density trace deviates from 1 by {trace_dev}")
        min_eig = float(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0).min())
        if min_eig < DENSITY_EIG_FLOOR:
            raise ValueError(f"density matrix has eigenvalue {min_eig} below {DENSITY_EIG_FLOOR}")

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        rho = np.outer(self.amplitudes, self.amplitudes.conj())
        return QuantumState("density", self.n_atoms, self.dim_local, rho)


def basis_state(label: str, dim_local: int = 3) -> QuantumState:
    """Computational basis product state from a label like ``"1r0"``."""
    n = len(label)
    idx = 0
    for ch in label:
        lv = level_index(ch)
        if lv >= dim_local:
            raise ValueError(f"level {ch!r} not available with dim_local={dim_local}")
        idx = idx * dim_local + lv
    amps = np.zeros(dim_local**n, dtype=complex)
    amps[idx] = 1.0
    return QuantumState("pure", n, dim_local, amps)


def superposition(labels: Sequence[str], dim_local: int = 3, coeffs: Sequence[complex] | None = None) -> QuantumState:
    """Normalized superposition of basis labels (equal weights by default)."""
    if not labels:
        raise ValueError("need at least one basis label")
    n = len(labels[0])
    amps = np.zeros(dim_local**n, dtype=complex)
    if coeffs is None:
        coeffs = [1.0] * len(labels)
    for label, c in zip(labels, coeffs, strict=True):
        amps += c * basis_state(label, dim_local).amplitudes
    amps /= np.linalg.norm(amps)
    return QuantumState("pure", n, dim_local, amps)


def basis_labels(n_atoms: int, dim_local: int) -> list[str]:
    """Labels of all basis states in index order (atom 0 = leftmost char)."""
    out = []
    for idx in range(dim_local**n_atoms):
        digits = []
        rem = idx
        for _ in range(n_atoms):
            digits.append(LEVEL_CHARS[rem % dim_local])
            rem //= dim_local
        out.append("".join(reversed(digits)))
    return out


def digit_of(indices: np.ndarray | int, atom_index: int, n_atoms: int, dim_local: int) -> np.ndarray | int:
    """Local level digit of atom ``atom_index`` for the given basis indices."""
    shift = dim_local ** (n_atoms - 1 - atom_index)
    return (indices // shift) % dim_local


@dataclass(frozen=True)
class Operator:
    """Dense operator on the n-atom tensor space."""

    n_atoms: int
    dim_local: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        dim = self.dim_local**self.n_atoms
        mat = _readonly(self.matrix)
        if mat.shape != (dim, dim):
            raise ValueError(f"operator must have shape ({dim},{dim}), got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.dim_local**self.n_atoms


def local_projector(level: str, dim_local: int) -> np.ndarray:
    """Single-atom projector |level><level| as a dense matrix."""
    lv = level_index(level)
    if lv >= dim_local:
        raise ValueError(f"level {level!r} not available with dim_local={dim_local}")
    mat = np.zeros((dim_local, dim_local), dtype=complex)
    mat[lv, lv] = 1.0
    return mat


def local_transition(to_level: str, from_level: str, dim_local: int) -> np.ndarray:
    """Single-atom transition operator |to><from|."""
    a, b = level_index(to_level), level_index(from_level)
    if max(a, b) >= dim_local:
        raise ValueError("transition uses a level outside dim_local")
    mat = np.zeros((dim_local, dim_local), dtype=complex)
    mat[a, b] = 1.0
    return mat


def embed_single(local_op: np.ndarray, atom_index: int, n_atoms: int, dim_local: int) -> Operator:
    """Embed a single-atom operator at ``atom_index``, identity elsewhere."""
    local_op = np.asarray(local_op, dtype=complex)
    if local_op.shape != (dim_local, dim_local):
        raise ValueError(f"local operator must be {dim_local}x{dim_local}, got {local_op.shape}")
    if not 0 <= atom_index < n_atoms:
        raise ValueError(f"atom index {atom_index} out of range for {n_atoms} atoms")
    left = np.eye(dim_local**atom_index, dtype=complex)
    right = np.eye(dim_local ** (n_atoms - 1 - atom_index), dtype=complex)
    mat = np.kron(np.kron(left, local_op), right)
    return Operator(n_atoms, dim_local, mat)


def two_site_projector(atom_i: int, atom_j: int, level: str, n_atoms: int, dim_local: int) -> Operator:
    """Projector onto basis states where atoms i and j both occupy ``level``."""
    if atom_i == atom_j:
        raise ValueError("two-site projector needs distinct atoms")
    p = local_projector(level, dim_local)
    a = embed_single(p, atom_i, n_atoms, dim_local)
    b = embed_single(p, atom_j, n_atoms, dim_local)
    return Operator(n_atoms, dim_local, a.matrix @ b.matrix)


def expectation(state: QuantumState, op: Operator) -> complex:
    """<psi|O|psi> for pure states, trace(rho O) for density matrices."""
    if (state.n_atoms, state.dim_local) != (op.n_atoms, op.dim_local):
        raise ValueError("state and operator dimensions do not match")
    if state.kind == "pure":
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    return complex(np.einsum("ij,ji->", state.amplitudes, op.matrix))


def partial_trace(state: QuantumState, keep: Iterable[int]) -> QuantumState:
    """Reduced density matrix over the kept atoms (ascending original order)."""
    keep_sorted = sorted(set(keep))
    if not keep_sorted:
        raise ValueError("keep set must be nonempty")
    if keep_sorted[0] < 0 or keep_sorted[-1] >= state.n_atoms:
        raise ValueError(f"keep set {keep_sorted} out of range for {state.n_atoms} atoms")
    n, d = state.n_atoms, state.dim_local
    rho = state.to_density().amplitudes.reshape((d,) * (2 * n))
    traced = [i for i in range(n) if i not in keep_sorted]
    for offset, atom in enumerate(traced):
        ax = atom - offset  # axes shift left after each trace
        rho = np.trace(rho, axis1=ax, axis2=ax + (n - offset))
    k = len(keep_sorted)
    dim = d**k
    return QuantumState("density", k, d, rho.reshape(dim, dim))
