"""Atom layouts and van-der-Waals interaction matrices.

Coordinates are dimensionless lengths; interactions are parameterized by the
value ``v_ref`` at the reference-pair separation ``d_ref`` and scale as the
inverse sixth power of distance. Positional Monte-Carlo perturbations keep
``(v_ref, d_ref)`` pinned so the interactions are recomputed from the new
distances alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AtomLayout:
    positions: np.ndarray  # (n_atoms, 3)
    reference_pair: tuple[int, int] = (0, 1)
    v_ref: float = 1.0
    d_ref: float | None = None

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
            raise ValueError(f"positions must be (n>=2, 3), got {pos.shape}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        i, j = self.reference_pair
        if i == j or not (0 <= i < len(pos)) or not (0 <= j < len(pos)):
            raise ValueError(f"invalid reference pair {self.reference_pair}")
        dists = pairwise_distances(pos)
        off = dists[~np.eye(len(pos), dtype=bool)]
        if np.any(off <= 0.0):
            raise ValueError("layout contains coincident atoms")
        if self.d_ref is None:
            object.__setattr__(self, "d_ref", float(dists[i, j]))
        elif self.d_ref <= 0:
            raise ValueError("d_ref must be positive")

    @property
    def n_atoms(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class InteractionMatrix:
    v: np.ndarray  # symmetric, zero diagonal, units of the reference Rabi frequency

    def __post_init__(self) -> None:
        v = np.array(self.v, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("interaction matrix must be square")
        if np.max(np.abs(v - v.T)) > 0:
            raise ValueError("interaction matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise ValueError("interaction matrix must have zero diagonal")
        if np.any(v < 0):
            raise ValueError("interaction strengths must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def n_atoms(self) -> int:
        return len(self.v)


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def build_layout(shape: str, n_atoms: int, spacing: float = 1.0, v_ref: float = 1.0) -> AtomLayout:
    """Standard layouts: line (any n), triangle (3), square (4), pyramid (4).

    The reference pair is (0, 1), i.e. adjacent atoms at distance ``spacing``.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    s = float(spacing)
    if shape == "line":
        if n_atoms < 2:
            raise ValueError("line layout needs at least 2 atoms")
        pos = [(i * s, 0.0, 0.0) for i in range(n_atoms)]
    elif shape == "triangle":
        if n_atoms != 3:
            raise ValueError("triangle layout needs exactly 3 atoms")
        pos = [(0.0, 0.0, 0.0), (s, 0.0, 0.0), (s / 2.0, s * np.sqrt(3.0) / 2.0, 0.0)]
    elif shape == "square":
        if n_atoms != 4:
            raise ValueError("square layout needs exactly 4 atoms")
        pos = [(0.0, 0.0, 0.0), (s, 0.0, 0.0), (s, s, 0.0), (0.0, s, 0.0)]
    elif shape == "pyramid":
        if n_atoms != 4:
            raise ValueError("pyramid layout needs exactly 4 atoms")
        # regular tetrahedron with edge s
        pos = [
            (0.0, 0.0, 0.0),
            (s, 0.0, 0.0),
            (s / 2.0, s * np.sqrt(3.0) / 2.0, 0.0),
            (s / 2.0, s * np.sqrt(3.0) / 6.0, s * np.sqrt(2.0 / 3.0)),
        ]
    else:
        raise ValueError(f"unknown layout shape {shape!r}")
    return AtomLayout(np.array(pos), reference_pair=(0, 1), v_ref=v_ref)


def interaction_matrix(layout: AtomLayout) -> InteractionMatrix:
    """Pairwise strengths v_ref * (d_ref / d_ij)**6."""
    dists = pairwise_distances(layout.positions)
    n = layout.n_atoms
    v = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    v[mask] = layout.v_ref * (layout.d_ref / dists[mask]) ** 6
    return InteractionMatrix(v)


def perturb_positions(layout: AtomLayout, sigma: float, dims: int, rng: np.random.Generator) -> AtomLayout:
    """Displace every atom by independent N(0, sigma^2) along the first ``dims`` axes."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if dims not in (1, 2, 3):
        raise ValueError("dims must be 1, 2 or 3")
    if sigma == 0:
        return layout
    shift = np.zeros_like(np.asarray(layout.positions))
    shift[:, :dims] = rng.normal(0.0, sigma, size=(layout.n_atoms, dims))
    return replace(layout, positions=layout.positions + shift)
