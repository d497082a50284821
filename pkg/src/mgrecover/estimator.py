"""Hierarchical weighted (HW) algebraic error estimator and norm instrumentation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .mesh import MeshHierarchy, Partition, SubdomainSets
from .operators import LevelSystem
from .solver import CycleConfig, Mask, pcg_coarse, v_cycle


def hierarchical_sum(levels: Sequence[LevelSystem], r_L: np.ndarray, mask: Mask,
                     coarse_iters: int) -> np.ndarray:
    """Sum over levels of the prolongated, diagonally scaled restricted residuals.

    The coarsest term uses a PCG solve with ``A_0`` instead of a diagonal
    scaling.  Restriction and prolongation are confined to ``mask`` on every
    level.  Accumulated coarse-to-fine in a single upward pass.
    """
    top = len(levels) - 1
    res = [None] * (top + 1)
    res[top] = np.where(mask[top], r_L, 0.0)
    for lv in range(top, 0, -1):
        rc = np.zeros(levels[lv - 1].shape)
        K.restrict(res[lv], rc)
        rc[~mask[lv - 1]] = 0.0
        res[lv - 1] = rc
    s = pcg_coarse(levels[0], res[0], coarse_iters, mask[0])
    for lv in range(1, top + 1):
        fine = np.empty(levels[lv].shape)
        K.prolongate(s, fine)
        fine += res[lv] / levels[lv].diag
        fine[~mask[lv]] = 0.0
        s = fine
    return s


@dataclass
class HwReport:
    """Global HW estimate with its per-rank contributions at iterate ``k``."""

    k: float
    eta: float
    eta_ranks: np.ndarray
    n_ranks: np.ndarray
    n_L: int
    field: np.ndarray | None = field(default=None, repr=False)

    def decomposition_defect(self) -> float:
        """Relative defect of ``n_L eta^2 = sum_p n_p eta_p^2``."""
        lhs = self.n_L * self.eta**2
        rhs = float(np.sum(self.n_ranks * self.eta_ranks**2))
        if lhs == 0.0:
            return abs(rhs)
        return abs(lhs - rhs) / lhs

    def weighted_contributions(self) -> np.ndarray:
        """``n_p * eta_p**2`` per rank, the quantities the re-coupling bounds reduce."""
        return self.n_ranks * self.eta_ranks**2


def _per_rank(part: Partition, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    L = part.hierarchy.L
    own = part.owner[L][1:-1, 1:-1, 1:-1].ravel()
    sq = values[1:-1, 1:-1, 1:-1].ravel() ** 2
    n_p = np.bincount(own, minlength=part.P)
    sums = np.bincount(own, weights=sq, minlength=part.P)
    return np.sqrt(sums / n_p), n_p


def hw_estimate(levels: Sequence[LevelSystem], r_L: np.ndarray, part: Partition,
                coarse_iters: int = 30, k: float = 0, keep_field: bool = False) -> HwReport:
    hier = part.hierarchy
    s = hierarchical_sum(levels, r_L, Mask.full(hier), coarse_iters)
    n_L = hier.n(hier.L)
    eta = float(np.sqrt(np.sum(s[1:-1, 1:-1, 1:-1] ** 2) / n_L))
    eta_p, n_p = _per_rank(part, s)
    return HwReport(k, eta, eta_p, n_p, n_L, s if keep_field else None)


def hw_estimate_faulty(levels: Sequence[LevelSystem], u_current: np.ndarray, f: np.ndarray,
                       sets: SubdomainSets, coarse_iters: int = 10) -> float:
    """Local indicator on the faulty domain: Euclidean norm of the masked hierarchical sum.

    The interface values in ``u_current`` act as Dirichlet data; no value
    outside the faulty domain and its interface is read.
    """
    L = len(levels) - 1
    if not sets.faulty[L].any():
        raise ValueError("faulty domain has no interior nodes")
    mask = Mask.faulty(sets)
    r = levels[L].residual(u_current, f, mask[L])
    s = hierarchical_sum(levels, r, mask, coarse_iters)
    return float(np.sqrt(np.sum(s[mask[L]] ** 2)))


def discrete_norm(v: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Weighted Euclidean norm ``sqrt(v.v / n)`` over interior (or masked) nodes."""
    vals = v[1:-1, 1:-1, 1:-1] if mask is None else v[mask]
    if vals.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(vals**2) / vals.size))


def norms(u: np.ndarray, reference: np.ndarray | None, r: np.ndarray,
          part: Partition | None = None) -> dict:
    out = {"res_norm": discrete_norm(r), "err_norm": float("nan"), "err_ranks": None}
    if reference is not None:
        e = reference - u
        out["err_norm"] = discrete_norm(e)
        if part is not None:
            out["err_ranks"] = _per_rank(part, e)[0]
    return out


@dataclass(frozen=True)
class EigBounds:
    lam_max: float
    lam_min: float
    converged: bool

    @property
    def ratio(self) -> float:
        return self.lam_max / self.lam_min

    def error_bounds(self, res_norm: float) -> tuple[float, float]:
        """Lower and upper residual-based bounds on the algebraic error norm."""
        return res_norm / self.lam_max, res_norm / self.lam_min


def estimate_eigs(levels: Sequence[LevelSystem], iters: int = 200, inner_cycles: int = 2,
                  cfg: CycleConfig | None = None, seed: int = 0) -> EigBounds:
    """Extreme eigenvalues of the finest operator by power and inverse power iteration.

    Inner solves of the inverse iteration start from ``v / theta`` and run
    ``inner_cycles`` V-cycles (an exact PCG solve on a single level).
    """
    cfg = cfg or CycleConfig()
    sys = levels[-1]
    m = sys.m
    rng = np.random.default_rng(seed)
    interior = np.zeros(sys.shape, dtype=bool)
    interior[1:-1, 1:-1, 1:-1] = True

    def start():
        v = np.zeros(sys.shape)
        v[interior] = rng.standard_normal(interior.sum())
        return v / np.linalg.norm(v)

    v = start()
    hist_max = []
    for _ in range(iters):
        w = sys.apply(v)
        hist_max.append(float(np.vdot(v, w)))
        v = w / np.linalg.norm(w)

    if len(levels) > 1:
        hier = MeshHierarchy(levels[0].m, len(levels) - 1)
        mask = Mask.full(hier)
    v = start()
    theta = float(np.vdot(v, sys.apply(v)))
    hist_min = []
    for _ in range(iters):
        if len(levels) == 1:
            x = pcg_coarse(sys, v, max(m**3, 1))
        else:
            x = v / theta
            for _ in range(inner_cycles):
                v_cycle(levels, x, v, cfg, mask)
        ax = sys.apply(x)
        theta = float(np.vdot(x, ax) / np.vdot(x, x))
        hist_min.append(theta)
        v = x / np.linalg.norm(x)

    def settled(hist):
        if len(hist) < 2:
            return True
        return abs(hist[-1] - hist[-2]) <= 0.01 * abs(hist[-1])

    return EigBounds(hist_max[-1], hist_min[-1], settled(hist_max) and settled(hist_min))


def export_field_csv(path, hier: MeshHierarchy, values: np.ndarray) -> None:
    """Write interior node values of the finest level as ``x,y,z,value`` rows."""
    L = hier.L
    x, y, z = (c[1:-1, 1:-1, 1:-1].ravel() for c in hier.coordinates(L))
    vals = values[1:-1, 1:-1, 1:-1].ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "value"])
        for row in zip(x, y, z, vals):
            w.writerow([f"{c:.17g}" for c in row])
