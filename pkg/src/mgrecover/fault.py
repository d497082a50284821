"""Fault injection, re-coupling bounds and the adaptive Dirichlet-Dirichlet recovery.

Asynchrony between the faulty and the healthy domain is replaced by a
deterministic cost model: each domain advances a scalar clock, and the
healthy domain's progress at the re-coupling signal is counted in half
V-cycles.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .estimator import HwReport, discrete_norm, hw_estimate, hw_estimate_faulty
from .mesh import ConfigurationError, Partition, SubdomainSets, classify_subdomains
from .solver import CycleConfig, Mask, half_cycle_down, v_cycle

log = logging.getLogger(__name__)

BOUNDS = ("GRB", "LRB")
MODES = ("fault-free", "no-recovery", "recovery")
# Estimator share of a faulty-domain cycle: est / V-cycle time at superman 2.
DEFAULT_EPSILON = 0.43 / 1.01


class RecoveryError(RuntimeError):
    def __init__(self, message, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class OverlappingFaultError(ConfigurationError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FaultEvent:
    k_F: float
    faulty_ranks: tuple[int, ...]
    eta_s: float = 2.0
    bound: str = "LRB"
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "faulty_ranks", tuple(int(r) for r in self.faulty_ranks))
        if not self.faulty_ranks:
            raise ConfigurationError("a fault event needs at least one faulty rank")
        if self.eta_s < 1.0:
            raise ConfigurationError(f"superman factor must be >= 1, got {self.eta_s}")
        if self.bound not in BOUNDS:
            raise ConfigurationError(f"bound must be one of {BOUNDS}, got {self.bound!r}")
        if not self.kappa > 0.0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class CostModel:
    """Simulated seconds per V-cycle from per-rank fine-level DOF counts.

    Ranks of one domain work in parallel, so a domain's cycle time is set by
    its most loaded rank.  Faulty-domain cycles carry the estimator overhead
    ``epsilon`` and are divided by the superman factor.
    """

    unit_work: float = 1e-6
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.unit_work > 0.0:
            raise ConfigurationError("unit_work must be positive")
        if self.epsilon < 0.0:
            raise ConfigurationError("epsilon must be >= 0")

    def global_cycle_time(self, part: Partition) -> float:
        return float(part.owned_counts().max()) * self.unit_work

    def healthy_cycle_time(self, sets: SubdomainSets) -> float:
        counts = sets.partition.owned_counts()
        return float(counts[list(sets.healthy_ranks)].max()) * self.unit_work

    def faulty_cycle_time(self, sets: SubdomainSets, eta_s: float) -> float:
        counts = sets.partition.owned_counts()
        base = float(counts[list(sets.faulty_ranks)].max()) * self.unit_work
        return base * (1.0 + self.epsilon) / eta_s

    @staticmethod
    def healthy_progress(elapsed: float, t_healthy: float) -> float:
        """Healthy cycles credited when the signal arrives after ``elapsed``.

        Completed half cycles, plus the half in progress, which is finished
        before re-coupling.
        """
        halves = elapsed / (0.5 * t_healthy)
        return math.ceil(halves - 1e-9) / 2.0


@dataclass
class FaultScenario:
    events: list[FaultEvent] = field(default_factory=list)
    cost: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        ks = [e.k_F for e in self.events]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigurationError(f"fault times must be strictly increasing, got {ks}")

    def with_overrides(self, **kw) -> "FaultScenario":
        """Copy with every event's ``bound``/``kappa``/``eta_s`` replaced."""
        return FaultScenario([replace(e, **kw) for e in self.events], self.cost)

    @classmethod
    def from_dict(cls, data: dict) -> "FaultScenario":
        defaults = {k: data[k] for k in ("eta_s", "bound", "kappa") if k in data}
        events = []
        for ev in data.get("events", []):
            merged = {**defaults, **ev}
            events.append(FaultEvent(
                k_F=float(merged["k_F"]),
                faulty_ranks=tuple(merged["faulty_ranks"]),
                eta_s=float(merged.get("eta_s", 2.0)),
                bound=str(merged.get("bound", "LRB")),
                kappa=float(merged.get("kappa", 1.0)),
            ))
        cost = CostModel(**data.get("cost", {}))
        return cls(events, cost)

    @classmethod
    def load(cls, path) -> "FaultScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def inject_fault(u: np.ndarray, sets: SubdomainSets) -> np.ndarray:
    """Zero the faulty-interior values on the finest level; interface copies survive."""
    out = u.copy()
    out[sets.faulty[-1]] = 0.0
    return out


def recoupling_bound(kind: str, cached: HwReport | None, faulty_ranks: Sequence[int]) -> float:
    """Re-coupling threshold from the per-rank contributions cached before the fault."""
    if cached is None:
        raise RecoveryError("no cached estimator contributions: the estimator was never run")
    contrib = cached.weighted_contributions()
    healthy = np.ones(contrib.size, dtype=bool)
    healthy[list(faulty_ranks)] = False
    if not healthy.any():
        raise RecoveryError("no healthy rank left to form a bound")
    if kind == "GRB":
        return float(np.sqrt(np.sum(contrib[healthy])))
    if kind == "LRB":
        return float(np.sqrt(np.max(contrib[healthy])))
    raise ConfigurationError(f"unknown bound kind {kind!r}")


@dataclass
class RecoveryOutcome:
    n_F: int
    n_I: float
    sigma: float
    eta_F_final: float
    recovery_sim_time: float
    t_F: float
    t_I: float
    eta_F_history: list[float] = field(default_factory=list)
    threshold: float = float("nan")


def run_recovery(levels, u: np.ndarray, f: np.ndarray, sets: SubdomainSets,
                 event: FaultEvent, sigma: float, cfg: CycleConfig, cost: CostModel,
                 max_faulty_cycles: int = 50, check_masks: bool = True) -> RecoveryOutcome:
    """Decoupled Dirichlet solves on the faulty and healthy domains, in place on ``u``.

    The faulty domain runs V-cycles (with a reduced coarse PCG budget) until
    its local indicator drops below ``kappa * sigma``; the healthy domain is
    credited with the V-cycles that fit into the same simulated time.
    """
    if not sigma > 0.0:
        raise RecoveryError(f"re-coupling bound must be positive, got {sigma}")
    threshold = event.kappa * sigma
    fmask, hmask = Mask.faulty(sets), Mask.healthy(sets)
    fcfg = cfg.for_faulty_domain()
    gamma = sets.interface[-1]
    gamma_before = u[gamma].copy()
    t_F = cost.faulty_cycle_time(sets, event.eta_s)
    t_I = cost.healthy_cycle_time(sets)

    outside_f = ~fmask[-1]
    frozen = u[outside_f].copy() if check_masks else None
    history = []
    n_F = 0
    while True:
        n_F += 1
        v_cycle(levels, u, f, fcfg, fmask)
        eta_F = hw_estimate_faulty(levels, u, f, sets, fcfg.coarse_iters)
        history.append(eta_F)
        if check_masks and not np.array_equal(u[outside_f], frozen):
            raise RecoveryError("faulty-domain cycle wrote outside the faulty domain")
        if eta_F < threshold:
            break
        if n_F >= max_faulty_cycles:
            partial = RecoveryOutcome(n_F, float("nan"), sigma, eta_F, float("nan"),
                                      t_F, t_I, history, threshold)
            raise RecoveryError(
                f"recovery did not reach kappa*sigma={threshold:.3e} in {n_F} cycles", partial)

    elapsed = n_F * t_F
    n_I = CostModel.healthy_progress(elapsed, t_I)
    outside_h = ~hmask[-1]
    frozen = u[outside_h].copy() if check_masks else None
    for _ in range(int(n_I)):
        v_cycle(levels, u, f, cfg, hmask)
    if n_I - int(n_I) > 0:
        half_cycle_down(levels, u, f, cfg, hmask)
    if check_masks and not np.array_equal(u[outside_h], frozen):
        raise RecoveryError("healthy-domain cycle wrote outside the healthy domain")
    if not np.array_equal(u[gamma], gamma_before):
        raise RecoveryError("interface values changed during recovery")

    log.debug("recovery: n_F=%d n_I=%.1f eta_F=%.3e sigma=%.3e", n_F, n_I, eta_F, sigma)
    return RecoveryOutcome(n_F, n_I, sigma, eta_F, max(elapsed, n_I * t_I),
                           t_F, t_I, history, threshold)


@dataclass
class TraceRow:
    iter: float
    sim_time: float
    eta_global: float
    res_norm: float
    err_norm: float
    event: str = "none"


@dataclass
class Snapshot:
    iter: float
    label: str
    report: HwReport


@dataclass
class SimulationReport:
    run_id: str
    variant: str
    rows: list[TraceRow] = field(default_factory=list)
    events: list[tuple[FaultEvent, RecoveryOutcome | None]] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    converged: bool = False
    deltas: dict = field(default_factory=dict)
    u: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations_total(self) -> float:
        return self.rows[-1].iter

    @property
    def sim_time_total(self) -> float:
        return self.rows[-1].sim_time

    def delays_against(self, baseline: "SimulationReport") -> dict:
        return {
            "delay_iters": self.iterations_total - baseline.iterations_total,
            "delay_time": self.sim_time_total - baseline.sim_time_total,
        }


def solve_with_resilience(problem, scenario: FaultScenario | None, cfg: CycleConfig,
                          mode: str = "recovery", tol: float = 1e-13, max_iters: int = 100,
                          run_id: str = "run", max_faulty_cycles: int = 50,
                          check_masks: bool = True, keep_solution: bool = False,
                          raise_on_cap: bool = True) -> SimulationReport:
    """Global V-cycles from a zero guess until ``eta_k < tol * eta_0``, with faults.

    ``problem`` provides ``levels``, ``rhs``, ``partition`` and optionally a
    ``reference`` solution.  Faults fire after the first global cycle whose
    iteration count reaches the event's ``k_F``.  ``mode`` selects whether
    events are ignored, injected without recovery, or recovered adaptively.
    """
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    scenario = scenario or FaultScenario()
    levels, f, part = problem.levels, problem.rhs, problem.partition
    ref = getattr(problem, "reference", None)
    hier = part.hierarchy
    L = hier.L
    full = Mask.full(hier)
    cost = scenario.cost
    t_global = cost.global_cycle_time(part)
    pending = list(scenario.events) if mode != "fault-free" else []

    report = SimulationReport(run_id, mode)
    u = hier.zeros(L)
    it, clock = 0.0, 0.0

    def estimate(k):
        r = levels[L].residual(u, f, full[L])
        rep = hw_estimate(levels, r, part, cfg.coarse_iters, k=k)
        err = discrete_norm(ref - u) if ref is not None else float("nan")
        return rep, discrete_norm(r), err

    cached, res, err = estimate(0)
    eta0 = cached.eta
    report.rows.append(TraceRow(it, clock, cached.eta, res, err))

    while not cached.eta < tol * eta0:
        if it >= max_iters:
            if raise_on_cap:
                raise ConvergenceError(f"{run_id}: no convergence within {max_iters} iterations")
            break
        v_cycle(levels, u, f, cfg, full)
        it += 1.0
        clock += t_global
        cached, res, err = estimate(it)
        row = TraceRow(it, clock, cached.eta, res, err)
        report.rows.append(row)
        if cached.eta < tol * eta0 or not pending or it < pending[0].k_F:
            continue

        event = pending.pop(0)
        sets = classify_subdomains(part, event.faulty_ranks)
        report.snapshots.append(Snapshot(it, "pre-fault", cached))
        u = inject_fault(u, sets)
        if mode == "no-recovery":
            cached, row.res_norm, row.err_norm = estimate(it)
            row.eta_global, row.event = cached.eta, "fault"
            report.snapshots.append(Snapshot(it, "fault", cached))
            report.events.append((event, None))
            continue

        sigma = recoupling_bound(event.bound, report.snapshots[-1].report, event.faulty_ranks)
        post, row.res_norm, row.err_norm = estimate(it)
        row.eta_global, row.event = post.eta, "recovery-start"
        report.snapshots.append(Snapshot(it, "fault", post))
        outcome = run_recovery(levels, u, f, sets, event, sigma, cfg, cost,
                               max_faulty_cycles, check_masks)
        it += outcome.n_I
        clock += outcome.recovery_sim_time
        if pending and pending[0].k_F < it:
            raise OverlappingFaultError(
                f"fault at k_F={pending[0].k_F} would strike during the recovery ending at {it}")
        cached, res, err = estimate(it)
        report.rows.append(TraceRow(it, clock, cached.eta, res, err, "recouple"))
        report.snapshots.append(Snapshot(it, "recouple", cached))
        report.events.append((event, outcome))

    report.converged = cached.eta < tol * eta0
    report.snapshots.append(Snapshot(it, "final", cached))
    if keep_solution:
        report.u = u
    return report
