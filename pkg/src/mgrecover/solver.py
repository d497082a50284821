"""Point smoothers, coarse Jacobi-PCG and (masked) multigrid V-cycles.

A ``Mask`` selects the updatable nodes on every level.  Nodes outside the
mask keep their values bit-for-bit, which turns a global V-cycle into a
multigrid solver for the Dirichlet problem on the masked subdomain with the
frozen values acting as boundary data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels as K
from .mesh import ConfigurationError, MeshHierarchy, SubdomainSets
from .operators import LevelSystem

SMOOTHERS = ("red-black", "jacobi", "lexicographic")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CycleConfig:
    """V(nu1, nu2) cycle parameters.

    ``smoother="red-black"`` is the parity-coloured Gauss-Seidel (eight
    colours, which is what a red-black ordering becomes for the 27-point
    stencil).  ``coarse_iters_faulty`` is the PCG budget for the coarse
    problem of a faulty-subdomain solve.
    """

    nu1: int = 3
    nu2: int = 3
    smoother: str = "jacobi"
    omega: float = 0.8
    coarse_iters: int = 30
    coarse_iters_faulty: int = 10

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 < 1:
            raise ConfigurationError(f"invalid smoothing counts ({self.nu1}, {self.nu2})")
        if self.coarse_iters < 1 or self.coarse_iters_faulty < 1:
            raise ConfigurationError("coarse PCG iteration counts must be >= 1")
        if not 0.0 < self.omega <= 1.0:
            raise ConfigurationError(f"damping omega={self.omega} outside (0, 1]")
        if self.smoother not in SMOOTHERS:
            raise ConfigurationError(f"unknown smoother {self.smoother!r}; choose from {SMOOTHERS}")

    def for_faulty_domain(self) -> "CycleConfig":
        return replace(self, coarse_iters=self.coarse_iters_faulty)


@dataclass(frozen=True)
class Mask:
    levels: tuple[np.ndarray, ...]

    @classmethod
    def full(cls, hier: MeshHierarchy) -> "Mask":
        return cls(tuple(hier.interior_mask(lv) for lv in hier.levels))

    @classmethod
    def faulty(cls, sets: SubdomainSets) -> "Mask":
        return cls(sets.faulty)

    @classmethod
    def healthy(cls, sets: SubdomainSets) -> "Mask":
        return cls(sets.healthy)

    def __getitem__(self, level: int) -> np.ndarray:
        return self.levels[level]


def smooth(sys: LevelSystem, u: np.ndarray, f: np.ndarray, sweeps: int,
           mask: np.ndarray, cfg: CycleConfig) -> np.ndarray:
    """Apply ``sweeps`` relaxation sweeps in place on masked nodes and return ``u``."""
    sys.check(u)
    w = sys.weights
    if cfg.smoother == "jacobi":
        tmp = np.zeros(sys.shape)
        for _ in range(sweeps):
            K.jacobi_sweep(u, f, mask, tmp, cfg.omega, *w)
    elif cfg.smoother == "red-black":
        for _ in range(sweeps):
            K.colored_gs_sweep(u, f, mask, *w)
    else:
        for _ in range(sweeps):
            K.lex_gs_sweep(u, f, mask, *w)
    return u


def pcg_coarse(sys0: LevelSystem, f0: np.ndarray, iters: int,
               mask: np.ndarray | None = None) -> np.ndarray:
    """Exactly ``iters`` Jacobi-PCG steps from a zero guess on the masked nodes.

    Stops early only once the residual drops below ``1e-15 * |f0|``.
    """
    if iters < 1:
        raise ConfigurationError("iters must be >= 1")
    sys0.check(f0)
    if mask is None:
        mask = np.zeros(sys0.shape, dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = True
    x = np.zeros(sys0.shape)
    r = np.where(mask, f0, 0.0)
    fnorm = np.linalg.norm(r)
    if fnorm == 0.0:
        return x
    d = sys0.diag
    z = r / d
    p = z.copy()
    rz = float(np.vdot(r, z))
    q = np.empty(sys0.shape)
    for _ in range(iters):
        sys0.apply(p, q)
        q[~mask] = 0.0
        curv = float(np.vdot(p, q))
        if curv <= 0.0:
            raise SolverError(f"PCG breakdown: non-positive curvature {curv:g}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) < 1e-15 * fnorm:
            break
        z = r / d
        rz_new = float(np.vdot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
    return x


def _cycle(levels: Sequence[LevelSystem], lv: int, u: np.ndarray, f: np.ndarray,
           cfg: CycleConfig, mask: Mask, post: bool) -> None:
    sys = levels[lv]
    if lv == 0:
        r = sys.residual(u, f, mask[0])
        u += pcg_coarse(sys, r, cfg.coarse_iters, mask[0])
        return
    smooth(sys, u, f, cfg.nu1, mask[lv], cfg)
    r = sys.residual(u, f, mask[lv])
    coarse = levels[lv - 1]
    rc = np.zeros(coarse.shape)
    K.restrict(r, rc)
    rc[~mask[lv - 1]] = 0.0
    ec = np.zeros(coarse.shape)
    _cycle(levels, lv - 1, ec, rc, cfg, mask, post)
    K.prolongate_add(ec, u, mask[lv])
    if post:
        smooth(sys, u, f, cfg.nu2, mask[lv], cfg)


def v_cycle(levels: Sequence[LevelSystem], u: np.ndarray, f: np.ndarray,
            cfg: CycleConfig, mask: Mask) -> np.ndarray:
    """One V(nu1, nu2) cycle in place on the masked nodes; returns ``u``."""
    top = len(levels) - 1
    levels[top].check(u)
    _cycle(levels, top, u, f, cfg, mask, post=True)
    return u


def half_cycle_down(levels: Sequence[LevelSystem], u: np.ndarray, f: np.ndarray,
                    cfg: CycleConfig, mask: Mask) -> np.ndarray:
    """Downward branch with coarse solve, then straight prolongation to the top."""
    top = len(levels) - 1
    levels[top].check(u)
    _cycle(levels, top, u, f, cfg, mask, post=False)
    return u
