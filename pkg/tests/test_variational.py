import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kacgibbs import curie_weiss as cw
from kacgibbs import variational as kv
from kacgibbs.errors import ConvergenceError, GridMismatchError, UnsupportedRegimeError
from kacgibbs.torus import (ExternalField, KacModel, TorusGrid, constant_kernel, cosine_bump_kernel,
                            entropy_phi, static_rate_values)


def model(M=32, beta=1.0, h=0.0, kernel="cosine-bump", beta_prime=0.0):
    g = TorusGrid(1, M)
    J = cosine_bump_kernel(g) if kernel == "cosine-bump" else constant_kernel(g)
    hf = ExternalField(g, np.asarray(h, dtype=float)) if np.ndim(h) else ExternalField.constant(g, h)
    return KacModel(J, hf, beta, beta_prime)


# -- trajectories and rates ---------------------------------------------------

def test_trajectory_endpoints_exact():
    g = TorusGrid(1, 8)
    rng = np.random.default_rng(0)
    a, ap = rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8)
    tr = kv.optimal_trajectory(a, ap, 0.7, g, steps=50)
    assert np.array_equal(tr.values[0], a) and np.array_equal(tr.values[-1], ap)
    assert tr.t == 0.7


def test_lagrangian_density_examples():
    assert kv.kac_lagrangian_density(0.5, 0.0, 0.7, 0.0) == pytest.approx(1 - math.sqrt(0.75), abs=1e-15)
    assert kv.kac_lagrangian_density(0.3, -0.6, 0.2, 0.0) <= 1e-15
    q = 2 * (math.sinh(0.3) - 0.1 * math.cosh(0.3))
    assert kv.kac_lagrangian_density(0.1, q, 0.3, 1.0) <= 1e-14


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-5, 5), st.floats(-2, 2), st.floats(0, 2))
def test_lagrangian_density_nonnegative(p, q, F, bp):
    assert kv.kac_lagrangian_density(p, q, F, bp) >= 0


def test_dynamic_rate_examples():
    m = model(M=8, beta=0.0)
    g = m.grid
    times = np.linspace(0, 1, 2001)
    zero = kv.TrajectoryGrid(g, times, np.zeros((times.size, 8)))
    assert kv.dynamic_rate(zero, m) == 0.0
    frozen = kv.TrajectoryGrid(g, times, np.full((times.size, 8), 0.5))
    assert kv.dynamic_rate(frozen, m) == pytest.approx(1 - math.sqrt(0.75), abs=1e-12)
    a = np.linspace(-0.8, 0.8, 8)
    relax = kv.TrajectoryGrid(g, times, a[None, :] * np.exp(-2 * times)[:, None])
    assert kv.dynamic_rate(relax, m) <= 1e-6
    assert kv.total_rate(relax, m) == pytest.approx(np.mean(entropy_phi(a)) + kv.dynamic_rate(relax, m))


def test_dynamic_rate_matches_action_along_optimal_path():
    m = model(M=8)
    rng = np.random.default_rng(1)
    a, ap = rng.uniform(-0.9, 0.9, 8), rng.uniform(-0.9, 0.9, 8)
    tr = kv.optimal_trajectory(a, ap, 1.0, m.grid, steps=4000)
    assert kv.dynamic_rate(tr, m) == pytest.approx(np.mean(cw.cw_action_closed(a, ap, 1.0)), abs=1e-5)


def test_total_rate_lower_bound():
    m = model(M=8, beta=1.5, h=0.4)
    rng = np.random.default_rng(2)
    tr = kv.optimal_trajectory(rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8), 0.5, m.grid, steps=200)
    bound = static_rate_values(tr.values[0], m) - 0.5 * m.beta * m.J.mean() - m.beta * 0.4
    assert kv.total_rate(tr, m) >= bound


# -- costs ----------------------------------------------------------------------

def test_cost_examples():
    m = model(M=16, beta=1.3, h=0.2)
    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, 16)
    assert kv.kac_cost(a, a * math.exp(-1.0), 0.5, m) == pytest.approx(static_rate_values(a, m), abs=1e-12)
    assert kv.kac_cost(np.zeros(16), np.zeros(16), 1.0, model(M=16)) == 0.0
    mc = model(M=16, beta=1.7, h=0.3, kernel="constant")
    cwm = cw.CWModel(1.7, 1.7 * 0.3)
    for c, cp, t in ((0.2, -0.1, 0.4), (0.8, 0.5, 2.0)):
        assert kv.kac_cost(np.full(16, c), np.full(16, cp), t, mc) == pytest.approx(cw.cw_cost(c, cp, t, cwm),
                                                                                  abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2), st.floats(0.01, 5))
def test_cost_forms_agree(seed, beta, t):
    rng = np.random.default_rng(seed)
    m = model(M=32, beta=beta, h=rng.uniform(-1, 1, 32))
    a, ap = rng.uniform(-1, 1, 32), rng.uniform(-1, 1, 32)
    c1, c2 = kv.kac_cost(a, ap, t, m), kv.kac_cost_pt(a, ap, t, m)
    assert abs(c1 - c2) <= 1e-9 * max(1.0, abs(c1))


def test_cost_pt_needs_unit_mean_kernel():
    g = TorusGrid(1, 8)
    m = KacModel(constant_kernel(g, 2.0), ExternalField.constant(g, 0.1), 0.7)
    a, ap = np.full(8, 0.2), np.linspace(-0.5, 0.5, 8)
    with pytest.raises(ValueError):
        kv.kac_cost_pt(a, ap, 1.0, m)
    assert kv.kac_cost_pt(a, ap, 1.0, m, rescale=True) == pytest.approx(kv.kac_cost(a, ap, 1.0, m), abs=1e-12)


def test_quad_and_closed_cost_agree():
    m = model(M=8, beta=1.0, h=0.1)
    rng = np.random.default_rng(4)
    a, ap = rng.uniform(-0.9, 0.9, 8), rng.uniform(-0.9, 0.9, 8)
    assert kv.kac_cost(a, ap, 0.8, m, method="quad") == pytest.approx(kv.kac_cost(a, ap, 0.8, m), abs=1e-8)


def test_finite_temperature_rejected():
    m = model(M=8, beta_prime=0.5)
    with pytest.raises(UnsupportedRegimeError):
        kv.kac_cost(np.zeros(8), np.zeros(8), 1.0, m)


def test_grid_mismatch_rejected():
    with pytest.raises(GridMismatchError):
        kv.kac_cost(np.zeros(8), np.zeros(16), 1.0, model(M=8))


# -- critical equation ----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2), st.floats(0.05, 3))
def test_residual_is_gradient(seed, beta, t):
    # N * dC/d alpha_i by central differences equals the analytic gradient
    rng = np.random.default_rng(seed)
    M = 12
    m = model(M=M, beta=beta, h=rng.uniform(-0.5, 0.5, M))
    a, ap = rng.uniform(-0.9, 0.9, M), rng.uniform(-0.9, 0.9, M)
    grad = kv.cost_gradient(a, ap, t, m)
    d = 1e-6
    fd = np.empty(M)
    for i in range(M):
        e = np.zeros(M)
        e[i] = d
        fd[i] = M * (kv.kac_cost(a + e, ap, t, m) - kv.kac_cost(a - e, ap, t, m)) / (2 * d)
    assert np.max(np.abs(grad - fd)) <= 1e-5 * (1 + np.max(np.abs(fd)))
    res = kv.critical_residual(a, ap, t, m)
    assert np.max(np.abs(kv.gradient_from_residual(res, a, m) - grad)) <= 1e-9 * (1 + np.max(np.abs(grad)))


def test_beta_zero_solution_is_exponential_relaxation():
    m = model(M=16, beta=0.0)
    rng = np.random.default_rng(5)
    for t in (0.1, 1.0, 3.0):
        ap = rng.uniform(-1, 1, 16)
        prof, res, _ = kv.solve_critical(ap, t, m)
        assert np.max(np.abs(prof.values - ap * math.exp(-2 * t))) <= 1e-12
        assert np.max(np.abs(kv.critical_residual(ap * math.exp(-2 * t), ap, t, m))) <= 1e-12
        # the profile alpha'/cosh(2t) is not a solution
        assert np.max(np.abs(kv.critical_residual(ap / math.cosh(2 * t), ap, t, m))) > 1e-3


def test_long_time_limit_is_mean_field_equation():
    m = model(M=32, beta=1.4, h=0.2)
    prof, _, _ = kv.solve_critical(np.zeros(32), 20.0, m)
    a = prof.values
    assert np.max(np.abs(a - np.tanh(m.beta * m.local_field(a)))) <= 1e-6


def test_symmetric_fixed_point():
    m = model(M=16, beta=2.0)
    prof, res, _ = kv.solve_critical(np.zeros(16), 1.0, m, seed=np.zeros(16))
    assert np.max(np.abs(prof.values)) == 0.0 and res == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 3))
def test_fixed_point_map_is_monotone(seed, t):
    rng = np.random.default_rng(seed)
    m = model(M=16, beta=rng.uniform(0, 2), h=rng.uniform(-1, 1, 16))
    ap = rng.uniform(-1, 1, 16)
    x = rng.uniform(-1, 1, 16)
    y = np.clip(x + rng.uniform(0, 0.5, 16), -1, 1)
    assert np.all(kv.fixed_point_map(y, ap, t, m) >= kv.fixed_point_map(x, ap, t, m) - 1e-15)


def test_solver_reports_failure():
    m = model(M=16, beta=2.0, h=0.1)
    with pytest.raises(ConvergenceError):
        kv.solve_critical(np.full(16, 0.3), 2.0, m, max_iter=2, newton=False)


# -- global minimisers ----------------------------------------------------------

def test_unique_for_weak_coupling():
    m = model(M=32, beta=0.5)
    rng = np.random.default_rng(6)
    for t in (0.1, 1.0, 5.0):
        assert kv.kac_global_minimizers(rng.uniform(-1, 1, 32), t, m).unique


def test_symmetric_pair_for_strong_coupling():
    m = model(M=32, beta=2.0)
    rep = kv.kac_global_minimizers(np.zeros(32), 3.0, m)
    assert len(rep.global_set) == 2
    p, q = rep.global_minimizers()
    assert np.ptp(p.values) <= 1e-9 and np.ptp(q.values) <= 1e-9
    assert p.values[0] == pytest.approx(-q.values[0], abs=1e-9)
    ref = cw.cw_global_minima(3.0, 0.0, cw.CWModel(2.0))
    assert abs(abs(p.values[0]) - ref.global_minima[1][0]) <= 1e-6
    assert kv.kac_global_minimizers(np.zeros(32), 0.01, m).unique


def test_report_is_deterministic_and_serialisable():
    m = model(M=16, beta=1.5, h=0.1)
    ap = np.linspace(-0.5, 0.7, 16)
    r1 = kv.kac_global_minimizers(ap, 1.0, m)
    r2 = kv.kac_global_minimizers(ap, 1.0, m, workers=4)
    assert r1.to_json() == r2.to_json()


# -- uniqueness certificate -----------------------------------------------------

def test_certificate_examples():
    assert kv.short_time_uniqueness(model(M=32, beta=1.0), np.zeros(32), 0.01)
    assert kv.short_time_uniqueness(model(M=32, beta=1.0), np.zeros(32), 0.01).contraction
    assert not kv.short_time_uniqueness(model(M=32, beta=2.0), np.zeros(32), 10.0)
    m0 = model(M=32, beta=0.0, h=0.5)
    for t in (0.01, 1.0, 10.0):
        assert kv.short_time_uniqueness(m0, np.linspace(-1, 1, 32), t).contraction


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.001, 0.005, 0.01]))
def test_certificate_implies_single_critical_profile(seed, t):
    rng = np.random.default_rng(seed)
    m = model(M=16, beta=rng.uniform(0, 2), h=rng.uniform(-1, 1, 16))
    ap = rng.uniform(-1, 1, 16)
    cert = kv.short_time_uniqueness(m, ap, t)
    assert cert
    rep = kv.kac_global_minimizers(ap, t, m)
    assert len(rep.critical_profiles) == 1
    assert np.all(rep.critical_profiles[0].profile.values >= cert.lower - 1e-9)
    assert np.all(rep.critical_profiles[0].profile.values <= cert.upper + 1e-9)


def test_short_time_counterexample_with_strong_field():
    # beta <J> = 2, h = 1, t = 0.01: a constant final profile at the bad point of
    # the matching scalar problem has two global minimisers, and the certificate is off
    m = model(M=16, beta=2.0, h=1.0)
    c = cw.cw_bad_set(0.01, cw.CWModel(2.0, 2.0)).bad_points[0]
    ap = np.full(16, c)
    rep = kv.kac_global_minimizers(ap, 0.01, m, gap_tol=1e-6)
    assert len(rep.global_set) == 2
    assert not kv.short_time_uniqueness(m, ap, 0.01)


# -- selection ------------------------------------------------------------------

def test_selection_picks_the_signed_branch():
    m = model(M=16, beta=2.0)
    rep = kv.kac_global_minimizers(np.zeros(16), 3.0, m)
    sel = kv.selection_probe(rep, m)
    plus = rep.critical_profiles[sel.selected_plus].profile.values
    minus = rep.critical_profiles[sel.selected_minus].profile.values
    assert plus.mean() > 0 > minus.mean()
    assert np.max(np.abs(sel.limit_plus.values - sel.limit_minus.values)) >= 1e-2


def test_selection_needs_several_minimisers():
    m = model(M=16, beta=0.5)
    rep = kv.kac_global_minimizers(np.zeros(16), 1.0, m)
    with pytest.raises(ValueError):
        kv.selection_probe(rep, m)
