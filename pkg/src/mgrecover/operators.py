"""Trilinear finite-element stencils, right-hand sides and grid transfers.

The Laplacian stiffness matrix of trilinear (Q1) elements on a uniform grid
is the tensor sum ``K(x)M(y)M(z) + M(x)K(y)M(z) + M(x)M(y)K(z)`` of the 1D
linear-element stiffness ``K = [-1, 2, -1] / h`` and mass
``M = [1, 4, 1] h / 6``, i.e. a 27-point stencil whose entries scale with h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .mesh import MeshHierarchy

_K1 = {-1: -1.0, 0: 2.0, 1: -1.0}
_M1 = {-1: 1.0 / 6.0, 0: 4.0 / 6.0, 1: 1.0 / 6.0}


def stencil_template() -> np.ndarray:
    """Scale-free 3x3x3 stencil; multiply by h to get the level operator."""
    s = np.zeros((3, 3, 3))
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            for c in (-1, 0, 1):
                s[a + 1, b + 1, c + 1] = (
                    _K1[a] * _M1[b] * _M1[c] + _M1[a] * _K1[b] * _M1[c] + _M1[a] * _M1[b] * _K1[c]
                )
    return s


_TEMPLATE = stencil_template()


@dataclass(frozen=True)
class LevelSystem:
    """Matrix-free operator on one level.

    ``weights`` holds the (center, face, edge, corner) stencil entries, which
    already include the factor ``h``.  Only the finest level carries a
    right-hand side.
    """

    level: int
    m: int
    h: float
    weights: tuple[float, float, float, float]
    rhs: np.ndarray | None = None

    @property
    def n(self) -> int:
        return (self.m - 1) ** 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.m + 1,) * 3

    @property
    def diag(self) -> float:
        """Constant diagonal entry of ``A_l``."""
        return self.weights[0]

    def check(self, v: np.ndarray) -> None:
        if v.shape != self.shape:
            raise ValueError(f"level {self.level} expects shape {self.shape}, got {v.shape}")

    def apply(self, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        self.check(v)
        if out is None:
            out = np.empty(self.shape)
        K.apply(np.ascontiguousarray(v, dtype=float), out, *self.weights)
        return out

    def residual(self, u: np.ndarray, f: np.ndarray, mask: np.ndarray,
                 out: np.ndarray | None = None) -> np.ndarray:
        """``f - A u`` on masked nodes, zero elsewhere."""
        self.check(u)
        if out is None:
            out = np.empty(self.shape)
        K.residual(u, f, mask, out, *self.weights)
        return out


def level_system(hier: MeshHierarchy, level: int, rhs: np.ndarray | None = None) -> LevelSystem:
    h = hier.h(level)
    t = _TEMPLATE * h
    weights = (float(t[1, 1, 1]), float(t[0, 1, 1]), float(t[0, 0, 1]), float(t[0, 0, 0]))
    if rhs is not None:
        hier.check(rhs, level)
    return LevelSystem(level, hier.m(level), h, weights, rhs)


def assemble_levels(hier: MeshHierarchy, rhs: np.ndarray | None = None) -> list[LevelSystem]:
    """One ``LevelSystem`` per level; ``rhs`` is attached to the finest."""
    return [level_system(hier, lv, rhs if lv == hier.L else None) for lv in hier.levels]


def apply_operator(sys: LevelSystem, v: np.ndarray) -> np.ndarray:
    """``A_l v`` with boundary entries of ``v`` treated as zero."""
    sys.check(v)
    w = np.array(v, dtype=float)
    w[0, :, :] = w[-1, :, :] = 0.0
    w[:, 0, :] = w[:, -1, :] = 0.0
    w[:, :, 0] = w[:, :, -1] = 0.0
    return sys.apply(w)


def assemble_rhs(hier: MeshHierarchy, f: Callable, g: Callable | None = None) -> np.ndarray:
    """Mass-lumped load ``f(x_i) h^3`` minus the stencil action of boundary data ``g``."""
    L = hier.L
    x, y, z = hier.coordinates(L)
    rhs = np.zeros(hier.shape(L))
    inner = (slice(1, -1),) * 3
    rhs[inner] = np.broadcast_to(f(x[inner], y[inner], z[inner]), rhs[inner].shape) * hier.h(L) ** 3
    if g is not None:
        lift = np.broadcast_to(np.asarray(g(x, y, z), dtype=float), rhs.shape).copy()
        lift[inner] = 0.0
        sys = level_system(hier, L)
        rhs[inner] -= sys.apply(lift)[inner]
    return rhs


@dataclass(frozen=True)
class TransferPair:
    """Trilinear prolongation from ``coarse`` to ``coarse + 1`` and its transpose."""

    hierarchy: MeshHierarchy
    coarse: int

    def prolongate(self, vc: np.ndarray) -> np.ndarray:
        self.hierarchy.check(vc, self.coarse)
        out = self.hierarchy.zeros(self.coarse + 1)
        K.prolongate(np.ascontiguousarray(vc, dtype=float), out)
        return out

    def restrict(self, vf: np.ndarray) -> np.ndarray:
        self.hierarchy.check(vf, self.coarse + 1)
        w = np.array(vf, dtype=float)
        w[0, :, :] = w[-1, :, :] = 0.0
        w[:, 0, :] = w[:, -1, :] = 0.0
        w[:, :, 0] = w[:, :, -1] = 0.0
        out = self.hierarchy.zeros(self.coarse)
        K.restrict(w, out)
        return out


def transfers(hier: MeshHierarchy) -> list[TransferPair]:
    return [TransferPair(hier, lv) for lv in range(hier.L)]


def prolongate(tp: TransferPair, v_coarse: np.ndarray) -> np.ndarray:
    return tp.prolongate(v_coarse)


def restrict(tp: TransferPair, v_fine: np.ndarray) -> np.ndarray:
    return tp.restrict(v_fine)


def verify_galerkin(levels: Sequence[LevelSystem], hier: MeshHierarchy,
                    n_probes: int = 10, seed: int = 0) -> float:
    """Max relative deviation of ``A_l v`` from ``R A_{l+1} P v`` over random probes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for lv in range(hier.L):
        tp = TransferPair(hier, lv)
        for _ in range(n_probes):
            v = hier.zeros(lv)
            v[1:-1, 1:-1, 1:-1] = rng.standard_normal((hier.m(lv) - 1,) * 3)
            direct = levels[lv].apply(v)
            galerkin = tp.restrict(levels[lv + 1].apply(tp.prolongate(v)))
            dev = np.linalg.norm(direct - galerkin) / np.linalg.norm(direct)
            worst = max(worst, float(dev))
    return worst
