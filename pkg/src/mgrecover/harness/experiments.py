"""Experiment drivers and CSV reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..estimator import discrete_norm, estimate_eigs, export_field_csv, hw_estimate
from ..fault import (FaultEvent, FaultScenario, SimulationReport, Snapshot, TraceRow,
                     solve_with_resilience)
from ..mesh import ConfigurationError
from ..solver import CycleConfig, Mask, v_cycle
from .problems import PROBLEMS, Problem, make_problem, make_reference

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["run_id", "iter", "sim_time", "eta_global", "res_norm", "err_norm", "event"]
EVENT_COLUMNS = ["run_id", "event_idx", "k_F", "bound_kind", "kappa", "eta_s", "sigma",
                 "n_F", "n_I", "eta_F_final", "recovery_sim_time"]
RANK_COLUMNS = ["run_id", "iter", "rank", "n_p", "eta_p"]
SUMMARY_COLUMNS = ["run_id", "variant", "iterations_total", "sim_time_total",
                   "delay_iters", "delay_time"]
ESTIMATOR_COLUMNS = ["run_id", "iter", "eta_global", "err_norm", "res_norm",
                     "res_over_lam_max", "res_over_lam_min"]

KAPPAS = (1e2, 1e1, 1e0, 1e-1, 1e-2)
VARIANTS = ("fault-free", "no-recovery", "recovery")


@dataclass
class ExperimentConfig:
    problem: str = "cube-sin"
    m0: int = 8
    L: int = 4
    p_axis: int = 2
    cycle: CycleConfig = field(default_factory=CycleConfig)
    tol: float = 1e-13
    max_iters: int = 100
    seed: int = 0
    scenario: FaultScenario | None = None
    baselines: tuple[str, ...] = ("fault-free", "no-recovery")
    out: str = "results"
    with_reference: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        bad = [b for b in self.baselines if b not in ("fault-free", "no-recovery")]
        if bad:
            raise ConfigurationError(f"unknown baselines {bad}")
        if not self.tol > 0.0:
            raise ConfigurationError("tol must be positive")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "cycle" in data:
            data["cycle"] = CycleConfig(**data["cycle"])
        sc = data.get("scenario")
        if isinstance(sc, str):
            path = Path(sc)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            data["scenario"] = FaultScenario.load(path)
        elif isinstance(sc, dict):
            data["scenario"] = FaultScenario.from_dict(sc)
        if "baselines" in data:
            data["baselines"] = tuple(data["baselines"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


def default_single_fault(eta_s: float = 2.0, bound: str = "LRB", kappa: float = 1.0,
                         k_F: float = 7, rank: int = 0) -> FaultScenario:
    return FaultScenario([FaultEvent(k_F, (rank,), eta_s, bound, kappa)])


def default_multi_fault(P: int, eta_s: float = 4.0, bound: str = "LRB",
                        kappa: float = 0.1) -> FaultScenario:
    return FaultScenario([FaultEvent(5, (0,), eta_s, bound, kappa),
                          FaultEvent(10, (P - 1,), eta_s, bound, kappa)])


def build_problem(cfg: ExperimentConfig) -> Problem:
    problem = make_problem(cfg.problem, cfg.m0, cfg.L, cfg.p_axis, cfg.seed)
    if cfg.with_reference:
        make_reference(problem, cfg.cycle)
    return problem


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_reports(out_dir, reports: Sequence[SimulationReport]) -> dict[str, Path]:
    """Write trace/events/rank_contrib/summary CSVs for a set of runs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("trace", "events", "rank_contrib", "summary")}

    _write(paths["trace"], TRACE_COLUMNS, (
        (rep.run_id, r.iter, r.sim_time, r.eta_global, r.res_norm, r.err_norm, r.event)
        for rep in reports for r in rep.rows))

    def event_rows():
        for rep in reports:
            for idx, (ev, oc) in enumerate(rep.events):
                if oc is None:
                    yield (rep.run_id, idx, float(ev.k_F), ev.bound, float(ev.kappa),
                           float(ev.eta_s), "", "", "", "", "")
                else:
                    yield (rep.run_id, idx, float(ev.k_F), ev.bound, float(ev.kappa),
                           float(ev.eta_s), oc.sigma, oc.n_F, float(oc.n_I), oc.eta_F_final,
                           oc.recovery_sim_time)
    _write(paths["events"], EVENT_COLUMNS, event_rows())

    _write(paths["rank_contrib"], RANK_COLUMNS, (
        (rep.run_id, float(s.iter), p, int(s.report.n_ranks[p]), float(s.report.eta_ranks[p]))
        for rep in reports for s in rep.snapshots for p in range(s.report.n_ranks.size)))

    _write(paths["summary"], SUMMARY_COLUMNS, (
        (rep.run_id, rep.variant, float(rep.iterations_total), float(rep.sim_time_total),
         float(rep.deltas.get("delay_iters", 0.0)), float(rep.deltas.get("delay_time", 0.0)))
        for rep in reports))
    return paths


def run_variants(problem: Problem, scenario: FaultScenario | None, cfg: ExperimentConfig,
                 variants: Sequence[str] = VARIANTS, tag: str = "") -> list[SimulationReport]:
    """Run the requested variants; delays are measured against the fault-free run."""
    reports = []
    baseline = None
    for variant in variants:
        run_id = f"{variant}{tag}"
        rep = solve_with_resilience(problem, scenario, cfg.cycle, variant, cfg.tol,
                                    cfg.max_iters, run_id)
        if variant == "fault-free":
            baseline = rep
        reports.append(rep)
    if baseline is not None:
        for rep in reports:
            rep.deltas = rep.delays_against(baseline)
    return reports


def _variants(cfg: ExperimentConfig, with_recovery: bool = True) -> list[str]:
    v = ["fault-free"]  # delays need the fault-free run
    if "no-recovery" in cfg.baselines:
        v.append("no-recovery")
    if with_recovery:
        v.append("recovery")
    return v


def run_solve(cfg: ExperimentConfig, problem: Problem | None = None) -> list[SimulationReport]:
    problem = problem or build_problem(cfg)
    reports = run_variants(problem, None, cfg, ["fault-free"])
    write_reports(cfg.out, reports)
    return reports


def run_faulty(cfg: ExperimentConfig, problem: Problem | None = None) -> list[SimulationReport]:
    problem = problem or build_problem(cfg)
    scenario = cfg.scenario or default_single_fault()
    reports = run_variants(problem, scenario, cfg, _variants(cfg))
    write_reports(cfg.out, reports)
    return reports


def run_kappa_sweep(cfg: ExperimentConfig, problem: Problem | None = None,
                    kappas: Sequence[float] = KAPPAS,
                    bounds: Sequence[str] = ("GRB", "LRB")) -> list[SimulationReport]:
    """Baselines once, then one recovery run per (bound, kappa)."""
    problem = problem or build_problem(cfg)
    scenario = cfg.scenario or default_single_fault()
    reports = run_variants(problem, scenario, cfg, _variants(cfg, with_recovery=False))
    baseline = reports[0]
    for bound in bounds:
        for kappa in kappas:
            sc = scenario.with_overrides(bound=bound, kappa=float(kappa))
            rep = solve_with_resilience(problem, sc, cfg.cycle, "recovery", cfg.tol,
                                        cfg.max_iters, f"recovery-{bound}-kappa{kappa:g}")
            rep.deltas = rep.delays_against(baseline)
            reports.append(rep)
    write_reports(cfg.out, reports)
    return reports


def run_multi_fault(cfg: ExperimentConfig, problem: Problem | None = None) -> list[SimulationReport]:
    problem = problem or build_problem(cfg)
    scenario = cfg.scenario or default_multi_fault(problem.partition.P)
    reports = run_variants(problem, scenario, cfg, _variants(cfg))
    write_reports(cfg.out, reports)
    return reports


@dataclass
class EstimatorStudyRow:
    run_id: str
    iter: int
    eta_global: float
    err_norm: float
    res_norm: float
    res_over_lam_max: float
    res_over_lam_min: float


def run_estimator_study(cfg: ExperimentConfig, levels_list: Sequence[int] = (3, 4),
                        cycles: int = 10, eig_iters: int = 200,
                        field_iters: Sequence[int] = ()) -> list[EstimatorStudyRow]:
    """Per-iteration HW estimate, true error and residual-based bounds for several L."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    reports = []
    for L in levels_list:
        problem = make_problem(cfg.problem, cfg.m0, L, cfg.p_axis, cfg.seed)
        make_reference(problem, cfg.cycle)
        eig = estimate_eigs(problem.levels, eig_iters, cfg=cfg.cycle, seed=cfg.seed)
        if not eig.converged:
            log.warning("eigenvalue estimates for L=%d did not settle to 1%%", L)
        run_id = f"estimator-L{L}"
        report = SimulationReport(run_id, "fault-free")
        full = Mask.full(problem.hierarchy)
        u = problem.hierarchy.zeros(L)
        for k in range(cycles + 1):
            if k:
                v_cycle(problem.levels, u, problem.rhs, cfg.cycle, full)
            r = problem.levels[L].residual(u, problem.rhs, full[L])
            rep = hw_estimate(problem.levels, r, problem.partition, cfg.cycle.coarse_iters,
                              k=k, keep_field=k in field_iters)
            rn = discrete_norm(r)
            err = discrete_norm(problem.reference - u)
            lo, hi = eig.error_bounds(rn)
            rows.append(EstimatorStudyRow(run_id, k, rep.eta, err, rn, lo, hi))
            if rep.field is not None:
                export_field_csv(out / f"hw_field_L{L}_k{k}.csv", problem.hierarchy, rep.field)
                export_field_csv(out / f"error_field_L{L}_k{k}.csv", problem.hierarchy,
                                 problem.reference - u)
            report.rows.append(TraceRow(float(k), 0.0, rep.eta, rn, err))
            report.snapshots.append(Snapshot(float(k), "iterate", rep))
        reports.append(report)
    _write(out / "estimator.csv", ESTIMATOR_COLUMNS, (
        tuple(asdict(r).values()) for r in rows))
    write_reports(out, reports)
    return rows
