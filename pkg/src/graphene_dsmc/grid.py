"""Cell estimate of the distribution function on an N x N wave-vector mesh.

Occupation of a cell is ``f_ij = count_ij * W_stat * (2 pi)^2 / (g_s g_v dk^2)``
where ``W_stat`` is the areal density carried by one simulated particle.

Under a uniform field every electron drifts with the same ``dk/dt``, so the
mesh is translated together with the particles.  Cell membership is then
unchanged by free flight, and counts change only through scattering events
(which are Pauli-checked).  Whenever the accumulated translation reaches a
full cell the mesh is re-registered by one cell, which is a pure relabeling
of the counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .material import CONDUCTION, DEFAULT_MATERIAL, MaterialParams


class OutOfBoxError(ValueError):
    """A wave-vector fell outside the simulation box."""


class BookkeepingError(RuntimeError):
    """The occupancy counts went inconsistent (e.g. decrement of an empty cell)."""


def _band_slot(band: int) -> int:
    return 0 if band == CONDUCTION else 1


@dataclass(frozen=True)
class GridSpec:
    N: int = 100
    k_max: float = 1.2 / DEFAULT_MATERIAL.gamma

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("grid needs at least 2 cells per side")
        if not self.k_max > 0:
            raise ValueError("k_max must be positive")

    @property
    def delta_k(self) -> float:
        return 2.0 * self.k_max / self.N


class OccupancyGrid:
    def __init__(self, spec: GridSpec, rho: float, n_particles: int,
                 params: MaterialParams = DEFAULT_MATERIAL):
        if n_particles < 1:
            raise ValueError("need at least one particle")
        self.spec = spec
        self.params = params
        self.rho = float(rho)
        self.n_particles = int(n_particles)
        self.W_stat = self.rho / self.n_particles
        self.quantum = self.W_stat * (2.0 * math.pi) ** 2 / (params.degeneracy * spec.delta_k**2)
        self.counts = np.zeros((2, spec.N, spec.N), dtype=np.int64)
        self.home = np.array([-spec.k_max, -spec.k_max])
        self.origin = self.home.copy()

    # -- geometry ------------------------------------------------------------
    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def delta_k(self) -> float:
        return self.spec.delta_k

    @property
    def k_max(self) -> float:
        return self.spec.k_max

    def cell_indices(self, k) -> np.ndarray:
        """Integer (i, j) of the cell containing each k; half-open [low, high)."""
        k = np.asarray(k, dtype=float)
        return np.floor((k - self.origin) / self.delta_k).astype(np.int64)

    def inside(self, k) -> np.ndarray:
        idx = self.cell_indices(k)
        return np.all((idx >= 0) & (idx < self.N), axis=-1)

    def cell_index(self, k) -> tuple[int, int]:
        i, j = self.cell_indices(k)
        if not (0 <= i < self.N and 0 <= j < self.N):
            raise OutOfBoxError(f"k = {tuple(np.asarray(k))} is outside the box")
        return int(i), int(j)

    def centers(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.delta_k

    # -- occupation ----------------------------------------------------------
    def f(self, band: int = CONDUCTION) -> np.ndarray:
        return self.counts[_band_slot(band)] * self.quantum

    def lookup(self, k, band: int = CONDUCTION) -> float:
        """Occupation of the cell containing k, clamped to [0, 1]."""
        i, j = self.cell_index(k)
        return min(self.counts[_band_slot(band), i, j] * self.quantum, 1.0)

    def lookup_index(self, i: int, j: int, band: int = CONDUCTION) -> float:
        if not (0 <= i < self.N and 0 <= j < self.N):
            raise OutOfBoxError(f"cell ({i}, {j}) is outside the box")
        return min(self.counts[_band_slot(band), i, j] * self.quantum, 1.0)

    def add(self, i: int, j: int, band: int, delta: int) -> None:
        slot = _band_slot(band)
        new = self.counts[slot, i, j] + delta
        if new < 0:
            raise BookkeepingError(f"cell ({i}, {j}) band {band} would hold {new} particles")
        self.counts[slot, i, j] = new

    def increment(self, k, band: int = CONDUCTION) -> None:
        self.add(*self.cell_index(k), band, +1)

    def decrement(self, k, band: int = CONDUCTION) -> None:
        self.add(*self.cell_index(k), band, -1)

    def occupied(self, band: int = CONDUCTION) -> tuple[np.ndarray, np.ndarray]:
        """Centers (M, 2) and raw occupations (M,) of the non-empty cells."""
        counts = self.counts[_band_slot(band)]
        idx = np.argwhere(counts > 0)
        f = counts[idx[:, 0], idx[:, 1]] * self.quantum
        return np.ascontiguousarray(self.centers(idx)), f

    def total_count(self, band: int | None = None) -> int:
        if band is None:
            return int(self.counts.sum())
        return int(self.counts[_band_slot(band)].sum())

    def density(self, band: int = CONDUCTION) -> float:
        """g_s g_v / (2 pi)^2 * sum f_ij dk^2."""
        return (self.params.degeneracy / (2.0 * math.pi) ** 2
                * self.f(band).sum() * self.delta_k**2)

    def max_occupancy(self, band: int = CONDUCTION) -> float:
        return float(self.counts[_band_slot(band)].max() * self.quantum)

    def pauli_bound(self) -> float:
        """Hard limit 1 + 3 quantization steps."""
        return 1.0 + 3.0 * self.quantum

    # -- construction ----------------------------------------------------------
    def fill(self, k, bands=None) -> np.ndarray:
        """Reset counts from an ensemble; returns the (n, 2) cell indices."""
        k = np.asarray(k, dtype=float).reshape(-1, 2)
        bands = np.full(len(k), CONDUCTION) if bands is None else np.asarray(bands)
        idx = self.cell_indices(k)
        bad = np.flatnonzero(~np.all((idx >= 0) & (idx < self.N), axis=1))
        if bad.size:
            n = int(bad[0])
            raise OutOfBoxError(f"particle {n} at k = {tuple(k[n])} is outside the box "
                                f"({bad.size} particles outside)")
        self.counts[:] = 0
        slots = np.where(bands == CONDUCTION, 0, 1)
        np.add.at(self.counts, (slots, idx[:, 0], idx[:, 1]), 1)
        return idx

    @classmethod
    def estimate(cls, k, spec: GridSpec, rho: float, bands=None, origin=None,
                 params: MaterialParams = DEFAULT_MATERIAL) -> "OccupancyGrid":
        k = np.asarray(k, dtype=float).reshape(-1, 2)
        grid = cls(spec, rho, max(len(k), 1), params)
        if origin is not None:
            grid.origin = np.asarray(origin, dtype=float).copy()
        if len(k):
            grid.fill(k, bands)
        return grid

    def copy(self) -> "OccupancyGrid":
        other = object.__new__(OccupancyGrid)
        other.__dict__.update(self.__dict__)
        other.counts = self.counts.copy()
        other.origin = self.origin.copy()
        other.home = self.home.copy()
        return other

    # -- drift ---------------------------------------------------------------
    def translate(self, shift) -> np.ndarray:
        """Move the mesh with the particles; returns the integer relabel per axis.

        Particle cell indices must be increased by the returned vector.
        """
        self.origin = self.origin + np.asarray(shift, dtype=float)
        n = np.floor((self.origin - self.home) / self.delta_k).astype(np.int64)
        if np.any(n != 0):
            self._relabel(n)
            self.origin = self.origin - n * self.delta_k
        return n

    def _relabel(self, n) -> None:
        N = self.N
        out = np.zeros_like(self.counts)
        # new index = old index + n
        si, sj = int(n[0]), int(n[1])
        src_i = slice(max(0, -si), min(N, N - si))
        dst_i = slice(max(0, si), min(N, N + si))
        src_j = slice(max(0, -sj), min(N, N - sj))
        dst_j = slice(max(0, sj), min(N, N + sj))
        out[:, dst_i, dst_j] = self.counts[:, src_i, src_j]
        lost = self.counts.sum() - out.sum()
        if lost:
            raise OutOfBoxError(f"{lost} particles drifted out of the box; enlarge k_max")
        self.counts = out

    # -- output --------------------------------------------------------------
    def snapshot_rows(self, band: int = CONDUCTION):
        """Rows (i, j, kx_center, ky_center, f) for every cell."""
        f = self.f(band)
        ii, jj = np.meshgrid(np.arange(self.N), np.arange(self.N), indexing="ij")
        cx = self.origin[0] + (ii + 0.5) * self.delta_k
        cy = self.origin[1] + (jj + 0.5) * self.delta_k
        return np.column_stack([ii.ravel(), jj.ravel(), cx.ravel(), cy.ravel(), f.ravel()])
