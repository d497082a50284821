import csv
import json

import numpy as np
import pytest

from mgrecover.estimator import discrete_norm
from mgrecover.fault import FaultEvent, FaultScenario
from mgrecover.harness import cli
from mgrecover.harness.experiments import (EVENT_COLUMNS, RANK_COLUMNS, SUMMARY_COLUMNS,
                                           TRACE_COLUMNS, ExperimentConfig, run_estimator_study,
                                           run_faulty, run_kappa_sweep, run_multi_fault,
                                           run_solve)
from mgrecover.harness.problems import make_problem, make_reference
from mgrecover.mesh import ConfigurationError
from mgrecover.solver import CycleConfig, Mask, v_cycle

import oracles as O


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _small(tmp_path, **kw):
    return ExperimentConfig(m0=4, L=2, out=str(tmp_path), **kw)


def test_reference_matches_dense_lu():
    p = make_problem("cube-sin", 2, 1, 1)
    ref = make_reference(p)
    A = O.dense_interior_stiffness(4)
    x = np.linalg.solve(A, O.to_interior(p.rhs))
    np.testing.assert_allclose(O.to_interior(ref), x, rtol=1e-10, atol=1e-13)


def test_reference_quality(small_problem):
    p = small_problem
    L = p.hierarchy.L
    full = Mask.full(p.hierarchy)
    r = p.levels[L].residual(p.reference, p.rhs, full[L])
    assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(p.rhs)
    again = p.reference.copy()
    v_cycle(p.levels, again, p.rhs, CycleConfig(), full)
    assert np.linalg.norm(again - p.reference) < 1e-12 * np.linalg.norm(p.reference)


def test_random_rhs_is_seeded():
    a = make_problem("cube-random-rhs", 4, 1, 2, seed=3)
    b = make_problem("cube-random-rhs", 4, 1, 2, seed=3)
    c = make_problem("cube-random-rhs", 4, 1, 2, seed=4)
    np.testing.assert_array_equal(a.rhs, b.rhs)
    assert not np.array_equal(a.rhs, c.rhs)
    assert a.seed == 3


def test_custom_problem():
    p = make_problem("custom", 4, 2, 2, source=lambda x, y, z: 3.0 * np.pi**2 * np.sin(np.pi * x)
                     * np.sin(np.pi * y) * np.sin(np.pi * z))
    make_reference(p)
    x, y, z = p.hierarchy.coordinates(2)
    exact = np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)
    assert discrete_norm(p.reference - exact) < 0.01
    with pytest.raises(ValueError):
        make_problem("custom", 4, 1, 2)
    with pytest.raises(ValueError):
        make_problem("sphere")


def test_config_validation_and_loading(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(problem="sphere")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(baselines=("restart",))
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"levels": 3})
    (tmp_path / "sc.json").write_text(json.dumps(
        {"events": [{"k_F": 3, "faulty_ranks": [1]}], "kappa": 0.1}))
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"m0": 4, "L": 2, "cycle": {"nu1": 2, "nu2": 2}, "scenario": "sc.json",
         "baselines": ["fault-free"]}))
    cfg = ExperimentConfig.load(tmp_path / "cfg.json")
    assert cfg.cycle.nu1 == 2 and cfg.scenario.events[0].kappa == 0.1
    assert cfg.baselines == ("fault-free",)


def test_solve_writes_columns_and_no_events(tmp_path):
    run_solve(_small(tmp_path))
    trace = _read(tmp_path / "trace.csv")
    assert trace[0] == TRACE_COLUMNS
    assert all(row[-1] == "none" for row in trace[1:])
    assert _read(tmp_path / "events.csv") == [EVENT_COLUMNS]
    assert _read(tmp_path / "rank_contrib.csv")[0] == RANK_COLUMNS
    summary = _read(tmp_path / "summary.csv")
    assert summary[0] == SUMMARY_COLUMNS and len(summary) == 2


def test_floats_have_17_significant_digits(tmp_path):
    sc = FaultScenario([FaultEvent(3, (0,), 4.0, "LRB", 0.1)])
    run_faulty(_small(tmp_path, scenario=sc))
    events = _read(tmp_path / "events.csv")[1:]
    assert events[0][4] == "0.10000000000000001"
    for row in _read(tmp_path / "trace.csv")[1:]:
        for cell in row[1:6]:
            assert cell == f"{float(cell):.17g}"


def test_faulty_run_summary_delay_matches_trace(tmp_path):
    sc = FaultScenario([FaultEvent(3, (0,), 4.0, "LRB", 0.1)])
    run_faulty(_small(tmp_path, scenario=sc))
    trace = _read(tmp_path / "trace.csv")[1:]
    last = {}
    for row in trace:
        last[row[0]] = float(row[1])
    summary = {row[0]: row for row in _read(tmp_path / "summary.csv")[1:]}
    assert set(summary) == {"fault-free", "no-recovery", "recovery"}
    for run_id, row in summary.items():
        assert float(row[4]) == last[run_id] - last["fault-free"]
    events = _read(tmp_path / "events.csv")[1:]
    assert [e[0] for e in events] == ["no-recovery", "recovery"]
    assert events[0][6] == "" and float(events[1][7]) >= 1


def test_kappa_sweep_rows(tmp_path):
    sc = FaultScenario([FaultEvent(3, (0,), 2.0, "LRB", 1.0)])
    reports = run_kappa_sweep(_small(tmp_path, scenario=sc))
    summary = _read(tmp_path / "summary.csv")[1:]
    rec = [row for row in summary if row[1] == "recovery"]
    assert len(rec) == 10
    assert {row[0] for row in summary} >= {"fault-free", "no-recovery"}
    n_F = {}
    for rep in reports:
        if rep.variant == "recovery":
            ev, out = rep.events[0]
            n_F.setdefault(ev.bound, []).append((ev.kappa, out.n_F))
    for bound, pairs in n_F.items():
        counts = [n for _, n in sorted(pairs)]
        assert all(b <= a for a, b in zip(counts, counts[1:])), (bound, pairs)


def test_multi_fault_driver(tmp_path):
    reports = run_multi_fault(_small(tmp_path, scenario=FaultScenario([
        FaultEvent(2, (0,), 4.0, "LRB", 0.1), FaultEvent(6, (7,), 4.0, "LRB", 0.1)])))
    rec = next(r for r in reports if r.variant == "recovery")
    assert rec.converged and len(rec.events) == 2
    trace = _read(tmp_path / "trace.csv")
    assert sum(row[-1] == "recouple" for row in trace) == 2


def test_estimator_study(tmp_path):
    rows = run_estimator_study(_small(tmp_path), levels_list=(1, 2), cycles=4, eig_iters=60,
                               field_iters=(2,))
    assert len(rows) == 10
    for r in rows:
        assert r.res_over_lam_max <= r.err_norm * (1 + 1e-9)
        assert r.err_norm <= r.res_over_lam_min * (1 + 1e-9)
    header = _read(tmp_path / "estimator.csv")[0]
    assert header == ["run_id", "iter", "eta_global", "err_norm", "res_norm",
                      "res_over_lam_max", "res_over_lam_min"]
    assert (tmp_path / "hw_field_L2_k2.csv").exists()
    assert (tmp_path / "error_field_L2_k2.csv").exists()


def test_cli_faulty_run(tmp_path, capsys):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"events": [{"k_F": 3, "faulty_ranks": [0], "eta_s": 4,
                                          "kappa": 0.1}]}))
    code = cli.main(["faulty-run", "--out", str(tmp_path / "out"), "--m0", "4", "--levels", "2",
                     "--p-axis", "2", "--tol", "1e-10", "--seed", "1", "--scenario", str(sc)])
    assert code == 0
    out = capsys.readouterr().out
    assert "recovery" in out and "delay=" in out
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"m0": 4, "L": 1, "out": str(tmp_path / "o")}))
    assert cli.main(["solve", "--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "trace.csv").exists()


def test_cli_reports_config_errors(tmp_path, capsys):
    assert cli.main(["solve", "--m0", "6", "--p-axis", "4", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["bogus"])


def test_cli_estimator_study(tmp_path):
    assert cli.main(["estimator-study", "--m0", "4", "--out", str(tmp_path),
                     "--study-levels", "1", "--cycles", "2"]) == 0
    assert len(_read(tmp_path / "estimator.csv")) == 4


def test_reports_are_deterministic(tmp_path):
    sc = FaultScenario([FaultEvent(3, (0,), 4.0, "GRB", 0.1)])
    for name in ("a", "b"):
        run_faulty(_small(tmp_path / name, scenario=sc))
    for f in ("trace.csv", "events.csv", "rank_contrib.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
