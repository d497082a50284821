import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgrecover.harness.problems import cube_sin_solution, cube_sin_source
from mgrecover.mesh import ConfigurationError, build_hierarchy, build_partition, classify_subdomains
from mgrecover.operators import assemble_levels, assemble_rhs, level_system
from mgrecover.solver import (CycleConfig, Mask, half_cycle_down, pcg_coarse, smooth, v_cycle)

import oracles as O


def _random_problem(m0, L, seed=0):
    h = build_hierarchy(m0, L)
    rng = np.random.default_rng(seed)
    f = h.from_interior(rng.standard_normal(h.n(L)), L)
    return h, assemble_levels(h, f), f


def _dense_solution(h, f):
    m = h.m(h.L)
    return O.from_interior(np.linalg.solve(O.dense_interior_stiffness(m), O.to_interior(f)), m)


@pytest.mark.parametrize("kw", [dict(nu1=0, nu2=0), dict(omega=0.0), dict(omega=1.5),
                                dict(smoother="sor"), dict(coarse_iters=0)])
def test_cycle_config_validation(kw):
    with pytest.raises(ConfigurationError):
        CycleConfig(**kw)


def test_faulty_config_budget():
    assert CycleConfig().for_faulty_domain().coarse_iters == 10


@pytest.mark.parametrize("smoother", ["jacobi", "red-black", "lexicographic"])
def test_smoother_fixed_point(smoother):
    h, levels, f = _random_problem(2, 1)
    u = _dense_solution(h, f)
    u0 = u.copy()
    smooth(levels[1], u, f, 3, h.interior_mask(1), CycleConfig(smoother=smoother))
    np.testing.assert_allclose(u, u0, rtol=0, atol=1e-13)


def test_jacobi_sweep_formula():
    h, levels, f = _random_problem(2, 1)
    sys = levels[1]
    u = h.from_interior(np.random.default_rng(5).standard_normal(27), 1)
    cfg = CycleConfig(omega=0.8)
    A = O.dense_interior_stiffness(2 * 2)
    x = O.to_interior(u)
    expected = x + 0.8 * (O.to_interior(f) - A @ x) / A[0, 0]
    smooth(sys, u, f, 1, h.interior_mask(1), cfg)
    np.testing.assert_allclose(O.to_interior(u), expected, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("smoother", ["red-black", "lexicographic"])
def test_gauss_seidel_monotone(smoother):
    h, levels, f = _random_problem(2, 1, seed=7)
    sys = levels[1]
    u = h.zeros(1)
    A = O.dense_interior_stiffness(4)
    # Gauss-Seidel decreases the energy norm of the error monotonically
    ex = np.linalg.solve(A, O.to_interior(f))
    energy = []
    for _ in range(10):
        smooth(sys, u, f, 1, h.interior_mask(1), CycleConfig(smoother=smoother))
        e = ex - O.to_interior(u)
        energy.append(e @ A @ e)
    assert all(b < a for a, b in zip(energy, energy[1:]))


def test_red_black_residual_decreases():
    h, levels, f = _random_problem(2, 1, seed=11)
    sys = levels[1]
    u = h.zeros(1)
    mask = h.interior_mask(1)
    norms = []
    for _ in range(10):
        smooth(sys, u, f, 1, mask, CycleConfig(smoother="red-black"))
        norms.append(np.linalg.norm(sys.residual(u, f, mask)))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_pcg_trivial():
    sys = level_system(build_hierarchy(2, 1), 0)
    assert not pcg_coarse(sys, np.zeros(sys.shape), 5).any()
    f = np.zeros(sys.shape)
    f[1, 1, 1] = 2.0
    x = pcg_coarse(sys, f, 1)
    assert x[1, 1, 1] == pytest.approx(2.0 / sys.diag, rel=1e-15)
    with pytest.raises(ConfigurationError):
        pcg_coarse(sys, f, 0)


def test_pcg_against_dense_solve():
    h = build_hierarchy(4, 1)
    sys = level_system(h, 0)
    b = np.random.default_rng(8).standard_normal(27)
    A = O.dense_interior_stiffness(4)
    x = O.to_interior(pcg_coarse(sys, O.from_interior(b, 4), 30))
    x_ref = np.linalg.solve(A, b)
    assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
    np.testing.assert_allclose(x, x_ref, rtol=1e-10)


def test_pcg_matches_dense_on_smallest_fine_grid():
    h = build_hierarchy(2, 1)
    sys = level_system(h, 1)
    b = np.random.default_rng(9).standard_normal(27)
    x = O.to_interior(pcg_coarse(sys, O.from_interior(b, 4), 60))
    np.testing.assert_allclose(x, np.linalg.solve(O.dense_interior_stiffness(4), b), rtol=1e-10)


def test_pcg_masked_stays_on_mask():
    h = build_hierarchy(4, 1)
    sets = classify_subdomains(build_partition(h, 2), [0])
    sys = level_system(h, 1)
    f = h.from_interior(np.ones(h.n(1)), 1)
    x = pcg_coarse(sys, f, 30, sets.faulty[1])
    assert not x[~sets.faulty[1]].any()
    F = O.to_interior(sets.faulty[1])
    A = O.dense_interior_stiffness(8)[np.ix_(F, F)]
    np.testing.assert_allclose(O.to_interior(x)[F], np.linalg.solve(A, np.ones(F.sum())),
                               rtol=1e-10)


def test_v_cycle_fixed_point():
    h, levels, f = _random_problem(2, 2)
    m = h.m(2)
    A = O.dense_interior_stiffness(m)
    u = O.from_interior(np.linalg.solve(A, O.to_interior(f)), m)
    u0 = u.copy()
    v_cycle(levels, u, f, CycleConfig(), Mask.full(h))
    assert np.max(np.abs(u - u0)) <= 1e-12 * np.max(np.abs(u0))


def asymptotic_factor(m0, L, cycles=20, seed=0):
    """Per-cycle error reduction of the homogeneous problem, by power iteration."""
    h = build_hierarchy(m0, L)
    levels = assemble_levels(h)
    f = h.zeros(L)
    u = h.from_interior(np.random.default_rng(seed).standard_normal(h.n(L)), L)
    q = 0.0
    for _ in range(cycles):
        before = np.linalg.norm(u)
        v_cycle(levels, u, f, CycleConfig(), Mask.full(h))
        after = np.linalg.norm(u)
        q = before / after
        u /= after
    return q


def test_v_cycle_reduction_mesh_independent():
    q = {L: asymptotic_factor(4, L) for L in (2, 3, 4)}
    assert q[3] >= 10
    assert min(q.values()) >= 10
    assert max(q.values()) / min(q.values()) <= 1.5


@pytest.mark.parametrize("smoother", ["red-black", "lexicographic"])
def test_gauss_seidel_cycles_converge(smoother):
    h, levels, f = _random_problem(4, 2)
    u = h.zeros(2)
    mask = Mask.full(h)
    r0 = np.linalg.norm(levels[2].residual(u, f, mask[2]))
    for _ in range(4):
        v_cycle(levels, u, f, CycleConfig(smoother=smoother), mask)
    assert np.linalg.norm(levels[2].residual(u, f, mask[2])) < 1e-5 * r0


def test_half_cycle_zero_residual_and_reduction():
    h, levels, f = _random_problem(4, 3)
    m = h.m(3)
    cfg, full = CycleConfig(), Mask.full(h)
    ref = h.zeros(3)
    for _ in range(25):
        v_cycle(levels, ref, f, cfg, full)
    u = ref.copy()
    half_cycle_down(levels, u, f, cfg, full)
    assert np.max(np.abs(u - ref)) <= 1e-12 * np.max(np.abs(ref))
    u = h.zeros(3)
    before = np.linalg.norm(ref - u)
    half_cycle_down(levels, u, f, cfg, full)
    assert np.linalg.norm(ref - u) < before
    assert m == 32


@settings(max_examples=10, deadline=None)
@given(rank=st.integers(0, 7), seed=st.integers(0, 1000), healthy=st.booleans())
def test_masked_cycles_never_touch_frozen_nodes(rank, seed, healthy):
    h, levels, f = _random_problem(4, 2, seed)
    sets = classify_subdomains(build_partition(h, 2), [rank])
    mask = Mask.healthy(sets) if healthy else Mask.faulty(sets)
    u = h.from_interior(np.random.default_rng(seed + 1).standard_normal(h.n(2)), 2)
    frozen = u[~mask[2]].copy()
    v_cycle(levels, u, f, CycleConfig(), mask)
    half_cycle_down(levels, u, f, CycleConfig(), mask)
    np.testing.assert_array_equal(u[~mask[2]], frozen)


def test_masked_cycle_solves_dirichlet_subproblem():
    h, levels, f = _random_problem(4, 1, seed=3)
    sets = classify_subdomains(build_partition(h, 2), [5])
    mask = Mask.faulty(sets)
    u = h.from_interior(np.random.default_rng(4).standard_normal(h.n(1)), 1)
    F = O.to_interior(sets.faulty[1])
    A = O.dense_interior_stiffness(8)
    x = O.to_interior(u)
    b = O.to_interior(f)[F] - A[np.ix_(F, ~F)] @ x[~F]
    expected = np.linalg.solve(A[np.ix_(F, F)], b)
    for _ in range(20):
        v_cycle(levels, u, f, CycleConfig(), mask)
    np.testing.assert_allclose(O.to_interior(u)[F], expected, rtol=1e-10, atol=1e-12)
