"""Model problems on the unit cube and over-solved reference solutions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..estimator import hw_estimate
from ..fault import ConvergenceError
from ..mesh import MeshHierarchy, Partition, build_hierarchy, build_partition
from ..operators import LevelSystem, assemble_levels, assemble_rhs
from ..solver import CycleConfig, Mask, v_cycle

log = logging.getLogger(__name__)

PROBLEMS = ("cube-sin", "cube-random-rhs")

_S2, _S3 = np.sqrt(2.0), np.sqrt(3.0)


def cube_sin_solution(x, y, z):
    return np.sin((x + _S2 * y) * np.pi) * np.sin(_S3 * z * np.pi)


def cube_sin_source(x, y, z):
    # -Laplace of the solution: (1 + 2 + 3) pi^2 u
    return 6.0 * np.pi**2 * cube_sin_solution(x, y, z)


@dataclass
class Problem:
    name: str
    hierarchy: MeshHierarchy
    partition: Partition
    levels: list[LevelSystem]
    rhs: np.ndarray = field(repr=False)
    exact: Callable | None = None
    seed: int | None = None
    reference: np.ndarray | None = field(default=None, repr=False)
    reference_cycles: int = 0


def make_problem(name: str = "cube-sin", m0: int = 8, L: int = 4, p_axis: int = 2,
                 seed: int = 0, source: Callable | None = None,
                 boundary: Callable | None = None) -> Problem:
    """Assemble a model problem; ``custom`` takes ``source`` and ``boundary`` callables."""
    hier = build_hierarchy(m0, L)
    part = build_partition(hier, p_axis)
    exact = None
    used_seed = None
    if name == "cube-sin":
        rhs = assemble_rhs(hier, cube_sin_source, cube_sin_solution)
        exact = cube_sin_solution
    elif name == "cube-random-rhs":
        used_seed = seed
        rng = np.random.default_rng(seed)
        rhs = hier.zeros(L)
        rhs[1:-1, 1:-1, 1:-1] = rng.standard_normal((hier.m(L) - 1,) * 3) * hier.h(L) ** 3
    elif name == "custom":
        if source is None:
            raise ValueError("custom problem needs a source function")
        rhs = assemble_rhs(hier, source, boundary)
    else:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEMS + ('custom',)}")
    return Problem(name, hier, part, assemble_levels(hier, rhs), rhs, exact, used_seed)


def make_reference(problem: Problem, cfg: CycleConfig | None = None, max_cycles: int = 200,
                   polish: int = 3) -> np.ndarray:
    """Over-solve until the estimate drops below ``1e3 * eps`` relative, plus ``polish`` cycles.

    Stores the result on ``problem.reference`` and returns it.
    """
    cfg = cfg or CycleConfig()
    hier = problem.hierarchy
    L = hier.L
    full = Mask.full(hier)
    levels, f = problem.levels, problem.rhs
    target = 1e3 * np.finfo(float).eps

    def eta(u):
        r = levels[L].residual(u, f, full[L])
        return hw_estimate(levels, r, problem.partition, cfg.coarse_iters).eta

    u = hier.zeros(L)
    eta0 = eta(u)
    cycles = 0
    converged = eta0 == 0.0
    while not converged and cycles < max_cycles:
        v_cycle(levels, u, f, cfg, full)
        cycles += 1
        converged = eta(u) < target * eta0
    if not converged:
        raise ConvergenceError(f"reference solve stalled after {cycles} cycles")
    for _ in range(polish):
        v_cycle(levels, u, f, cfg, full)
    problem.reference = u
    problem.reference_cycles = cycles + polish
    log.info("reference for %s: %d cycles", problem.name, problem.reference_cycles)
    return u
