"""Nested structured grids on the unit cube, rank ownership and subdomain sets.

Grid vectors on level ``l`` are stored as full node arrays of shape
``(m_l + 1,) * 3`` indexed ``[i, j, k]`` with node coordinate
``(i, j, k) * h_l``.  Boundary entries are Dirichlet nodes and are not
degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid mesh, partition or solver configurations."""


class UnrecoverableScenarioError(ValueError):
    """Raised when a fault scenario leaves no healthy rank."""


@dataclass(frozen=True)
class MeshHierarchy:
    m0: int
    L: int

    def __post_init__(self):
        if self.m0 < 2:
            raise ConfigurationError(f"m0 must be >= 2, got {self.m0}")
        if self.L < 1:
            raise ConfigurationError(f"L must be >= 1, got {self.L}")

    @property
    def levels(self) -> range:
        return range(self.L + 1)

    def m(self, level: int) -> int:
        """Cells per axis on ``level``."""
        return self.m0 * 2**level

    def h(self, level: int) -> float:
        return 1.0 / self.m(level)

    def n(self, level: int) -> int:
        """Number of interior degrees of freedom on ``level``."""
        return (self.m(level) - 1) ** 3

    def shape(self, level: int) -> tuple[int, int, int]:
        s = self.m(level) + 1
        return (s, s, s)

    def zeros(self, level: int) -> np.ndarray:
        return np.zeros(self.shape(level))

    def coordinates(self, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.m(level) + 1) * self.h(level)
        return np.meshgrid(x, x, x, indexing="ij")

    def interior_mask(self, level: int) -> np.ndarray:
        mask = np.zeros(self.shape(level), dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = True
        return mask

    def interior(self, v: np.ndarray, level: int) -> np.ndarray:
        """Flattened interior values of a full node array (lexicographic order)."""
        self.check(v, level)
        return v[1:-1, 1:-1, 1:-1].ravel()

    def from_interior(self, values: np.ndarray, level: int) -> np.ndarray:
        """Embed ``n_l`` interior values into a full node array with zero boundary."""
        values = np.asarray(values, dtype=float)
        if values.size != self.n(level):
            raise ValueError(
                f"expected {self.n(level)} interior values on level {level}, got {values.size}"
            )
        out = self.zeros(level)
        k = self.m(level) - 1
        out[1:-1, 1:-1, 1:-1] = values.reshape(k, k, k)
        return out

    def check(self, v: np.ndarray, level: int) -> None:
        if v.shape != self.shape(level):
            raise ValueError(
                f"grid vector on level {level} must have shape {self.shape(level)}, got {v.shape}"
            )


def build_hierarchy(m0: int, L: int) -> MeshHierarchy:
    return MeshHierarchy(int(m0), int(L))


def _axis_owner(m: int, p_axis: int) -> np.ndarray:
    # Box b covers [b/p, (b+1)/p]; nodes on a shared face go to the lower box.
    i = np.arange(m + 1)
    return np.maximum(-((-i * p_axis) // m) - 1, 0)


@dataclass(frozen=True)
class Partition:
    """Axis-aligned box decomposition of the level-0 cells into ``p_axis**3`` ranks."""

    hierarchy: MeshHierarchy
    p_axis: int
    owner: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def P(self) -> int:
        return self.p_axis**3

    @property
    def ranks(self) -> range:
        return range(self.P)

    def rank_of_box(self, bx: int, by: int, bz: int) -> int:
        return (bx * self.p_axis + by) * self.p_axis + bz

    def box_of_rank(self, rank: int) -> tuple[int, int, int]:
        p = self.p_axis
        return rank // (p * p), (rank // p) % p, rank % p

    def owned_mask(self, rank: int, level: int | None = None) -> np.ndarray:
        """Interior nodes owned by ``rank`` (finest level by default)."""
        level = self.hierarchy.L if level is None else level
        return (self.owner[level] == rank) & self.hierarchy.interior_mask(level)

    def owned_counts(self, level: int | None = None) -> np.ndarray:
        level = self.hierarchy.L if level is None else level
        own = self.owner[level][1:-1, 1:-1, 1:-1]
        return np.bincount(own.ravel(), minlength=self.P)

    def cell_faulty(self, faulty_ranks: Iterable[int], level: int) -> np.ndarray:
        """Boolean ``(m_l,)*3`` array of cells lying inside a faulty rank box."""
        faulty = np.zeros(self.P, dtype=bool)
        faulty[list(faulty_ranks)] = True
        m = self.hierarchy.m(level)
        cells_per_box = m // self.p_axis
        box = np.arange(m) // cells_per_box
        bx, by, bz = np.meshgrid(box, box, box, indexing="ij")
        return faulty[(bx * self.p_axis + by) * self.p_axis + bz]


def build_partition(h: MeshHierarchy, p_axis: int) -> Partition:
    p_axis = int(p_axis)
    if p_axis < 1 or h.m0 % p_axis != 0:
        raise ConfigurationError(f"p_axis={p_axis} must divide m0={h.m0}")
    owner = []
    for level in h.levels:
        ax = _axis_owner(h.m(level), p_axis)
        bx, by, bz = np.meshgrid(ax, ax, ax, indexing="ij")
        owner.append((bx * p_axis + by) * p_axis + bz)
    return Partition(h, p_axis, tuple(owner))


@dataclass(frozen=True)
class SubdomainSets:
    """Faulty-interior / interface / healthy-interior node masks per level."""

    partition: Partition
    faulty_ranks: tuple[int, ...]
    faulty: tuple[np.ndarray, ...] = field(repr=False)
    interface: tuple[np.ndarray, ...] = field(repr=False)
    healthy: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def healthy_ranks(self) -> tuple[int, ...]:
        bad = set(self.faulty_ranks)
        return tuple(p for p in self.partition.ranks if p not in bad)

    def counts(self, level: int | None = None) -> dict[str, int]:
        level = self.partition.hierarchy.L if level is None else level
        return {
            "faulty": int(self.faulty[level].sum()),
            "interface": int(self.interface[level].sum()),
            "healthy": int(self.healthy[level].sum()),
        }

    def faulty_volume_ratio(self) -> float:
        """Volume of the faulty boxes relative to the healthy remainder."""
        frac = len(self.faulty_ranks) / self.partition.P
        return frac / (1.0 - frac)


def classify_subdomains(part: Partition, faulty_ranks: Sequence[int]) -> SubdomainSets:
    ranks = tuple(sorted({int(r) for r in faulty_ranks}))
    if not ranks:
        raise ConfigurationError("faulty_ranks must be nonempty")
    if any(r < 0 or r >= part.P for r in ranks):
        raise ConfigurationError(f"faulty ranks {ranks} out of range for P={part.P}")
    if len(ranks) == part.P:
        raise UnrecoverableScenarioError("all ranks faulty: nothing left to recover from")

    hier = part.hierarchy
    faulty, interface, healthy = [], [], []
    for level in hier.levels:
        cells = part.cell_faulty(ranks, level).astype(np.int8)
        m = hier.m(level)
        # Number of faulty cells among the 8 cells touching each interior node.
        touching = np.zeros((m - 1,) * 3, dtype=np.int8)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    touching += cells[dx : dx + m - 1, dy : dy + m - 1, dz : dz + m - 1]
        f = np.zeros(hier.shape(level), dtype=bool)
        g = np.zeros_like(f)
        f[1:-1, 1:-1, 1:-1] = touching == 8
        g[1:-1, 1:-1, 1:-1] = (touching > 0) & (touching < 8)
        faulty.append(f)
        interface.append(g)
        healthy.append(hier.interior_mask(level) & ~f & ~g)
    return SubdomainSets(part, ranks, tuple(faulty), tuple(interface), tuple(healthy))
