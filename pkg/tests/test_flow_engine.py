import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from krflab import cone_certifier as cc
from krflab import flow_engine as fe
from krflab import geometry_models as gm
from krflab.errors import MonitorViolation, PositivityLost
from krflab.tensor_core import HermitianForm


# ---- step


def test_step_keeps_fixed_point():
    s = gm.initial_state(gm.HyperbolicSurface(), 1.0)
    for dt in (1e-3, 0.1, 1.0):
        assert fe.step(s, dt).data == 1.0


def test_step_flat_torus_local_error():
    s = fe.step(gm.initial_state(gm.FlatTorus(), 1.0), 0.1)
    assert s.t == pytest.approx(0.1)
    assert abs(s.data - math.exp(-0.1)) < 0.1**5 / 100


def test_step_past_singular_time_raises():
    s = gm.FlowState(0.69, gm.ProjectiveLine(), oracles.exact_scale(2.0, 2.0, 0.69))
    with pytest.raises(PositivityLost):
        fe.step(s, 0.01)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        fe.step(gm.initial_state(gm.FlatTorus()), 0.0)


def test_grid_step_preserves_flat_solution():
    s = fe.step(gm.initial_state(gm.TorusGrid(16)), 1e-3)
    assert np.allclose(s.metric(), math.exp(-1e-3), rtol=1e-14, atol=0)
    assert np.allclose(s.data, gm.homogeneous_potential(1e-3), atol=1e-15)


def test_grid_step_matches_direct_rk4():
    N, dt = 16, 1e-4
    model = gm.TorusGrid(N)
    phi = gm.cosine_potential(N, 0.005)

    def vel(p, t):
        g = gm.metric_grid(model, p, t)
        return np.log(g) - p

    k1 = vel(phi, 0.0)
    k2 = vel(phi + 0.5 * dt * k1, 0.5 * dt)
    k3 = vel(phi + 0.5 * dt * k2, 0.5 * dt)
    k4 = vel(phi + dt * k3, dt)
    ref = phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out = fe.step(gm.initial_state(model, phi0=phi), dt)
    assert np.allclose(out.data, ref, rtol=0, atol=1e-14)


# ---- run


def test_run_hyperbolic():
    traj = fe.run(gm.HyperbolicSurface(), {"f0": 2.0}, 10.0, 1e-3)
    assert traj.termination.kind == fe.REACHED_T_END
    assert str(traj.termination) == "ReachedTEnd"
    assert traj.final_time == pytest.approx(10.0, abs=1e-12)
    assert abs(traj.scale[-1] - (1 + math.exp(-10))) < 1e-8
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj.reports) == len(traj.states) == len(traj.times)
    assert all(r.all_pass for r in traj.reports[:5])


def test_run_projective_line_singular_time():
    traj = fe.run(gm.ProjectiveLine(), {"f0": 2.0}, 2.0, 1e-5, mode=fe.EXPLORE)
    assert traj.termination.kind == fe.SINGULAR_AT
    assert abs(traj.termination.t - math.log(2)) < 1e-4
    assert str(traj.termination).startswith("SingularAt(")


@pytest.mark.parametrize("f0", [0.5, 2.0, 6.0])
def test_singular_time_matches_maximal_time(f0):
    traj = fe.integrate(gm.ProjectiveLine(), {"f0": f0}, 5.0, 1e-3)
    lat = cc.P1()
    T = cc.maximal_time(cc.CohomClass([2 * math.pi * f0], lat), cc.canonical_class(lat))
    assert traj.termination.t == pytest.approx(T, abs=1e-6)
    assert T == pytest.approx(oracles.p1_singular_time(f0), rel=1e-14)


def test_run_flat_torus_trace_saturates_bound():
    traj = fe.run(gm.FlatTorus(2), {"f0": 1.0}, 5.0, 1e-2)
    tr = traj.monitors["trace"]
    assert tr.name == "trace_nef"
    assert np.abs(tr.margins).max() < 1e-8 * tr.bound.max()


def test_run_rejects_bad_arguments():
    with pytest.raises(ValueError):
        fe.run(gm.FlatTorus(), {}, -1.0, 1e-2)
    with pytest.raises(ValueError):
        fe.run(gm.FlatTorus(), {}, 1.0, 1e-2, mode="lenient")


def test_run_lands_exactly_on_t_end():
    traj = fe.integrate(gm.FlatTorus(), {}, 1.0, 0.03)
    assert traj.final_time == 1.0
    # the tail is split evenly rather than leaving a sliver
    assert np.diff(traj.times).min() > 0.01


# ---- RK4 order


def _global_error(model, f0, dt, t_end=1.0):
    traj = fe.integrate(model, {"f0": f0}, t_end, dt)
    return abs(traj.scale[-1] - oracles.exact_scale(model.ricci_constant, f0, t_end))


@pytest.mark.parametrize("model,f0", [(gm.FlatTorus(), 1.0), (gm.HyperbolicSurface(), 2.0),
                                      (gm.ProjectiveLine(), 4.0)])
def test_rk4_order(model, f0):
    e = [_global_error(model, f0, dt) for dt in (1e-2, 5e-3, 2.5e-3)]
    rates = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all((rates > 3.8) & (rates < 4.2))


# ---- finite differences


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.1, max_value=1.0), min_size=4, max_size=4),
       st.integers(min_value=0, max_value=4))
def test_derivative_weights_match_polyfit(gaps, center):
    x = np.concatenate([[0.0], np.cumsum(gaps)])
    W = fe.derivative_weights(x, np.array(center))
    assert np.allclose(W, fe._weights_scalar(list(x), center), rtol=1e-10, atol=1e-10)
    rng = np.random.default_rng(center)
    v = rng.standard_normal(5)
    assert W @ v == pytest.approx(oracles.fd_derivative(x, v, center), rel=1e-8, abs=1e-8)


def test_time_derivative_is_exact_on_quartics():
    t = np.sort(np.random.default_rng(0).uniform(0, 2, 30))
    v = 1 + t - 2 * t**2 + 0.5 * t**3 - 0.25 * t**4
    dv = 1 - 4 * t + 1.5 * t**2 - t**3
    assert np.allclose(fe.time_derivative(t, v), dv, atol=1e-8)


def test_time_derivative_needs_three_samples():
    with pytest.raises(ValueError):
        fe.time_derivative([0.0, 1.0], [0.0, 1.0])


# ---- monitors


def test_nef_monitor_hyperbolic_has_strict_margin():
    traj = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 5.0, 1e-2)
    res = fe.monitor_trace_nef(traj)
    f = np.array([oracles.exact_scale(-1.0, 2.0, t) for t in traj.times])
    assert np.allclose(res.margins, np.exp(traj.times) / 2.0 - 1.0 / f, atol=1e-9)
    assert res.margins[1:].min() > 0


def test_ample_monitor_constants():
    t1 = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 20.0, 1e-2)
    r1 = fe.monitor_trace_ample(t1, kappa=1.0)
    assert r1.constant == 1.0 and r1.passed
    assert 1.0 - t1.max_trace[-1] < 1e-8
    t2 = fe.integrate(gm.HyperbolicSurface(), {"f0": 0.25}, 5.0, 1e-2)
    r2 = fe.monitor_trace_ample(t2, kappa=1.0)
    assert r2.constant == 4.0 and r2.passed
    assert t2.max_trace[0] == 4.0 and np.all(np.diff(t2.max_trace) < 0)


def test_ample_monitor_kappa_zero_falls_back():
    traj = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 1.0, 1e-2)
    assert fe.monitor_trace_ample(traj, kappa=0.0).name == "trace_nef"
    assert fe.ample_constant(1, 1e-6, 1.0) == pytest.approx(1e6)


def test_trace_monitor_against_other_reference():
    traj = fe.integrate(gm.FlatTorus(2), {"f0": 1.0}, 1.0, 1e-2)
    gh = HermitianForm.diag([2.0, 3.0])
    res = fe.monitor_trace_nef(traj, omega_hat=gh)
    assert res.passed
    assert np.abs(res.margins).max() < 1e-9 * res.bound.max()


def test_strict_monitor_raises():
    # kappa = 4 overstates the curvature bound, so C = 1/2 is too small
    traj = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 1.0, 1e-2)
    with pytest.raises(MonitorViolation) as err:
        fe.monitor_trace_ample(traj, kappa=4.0, strict=True)
    assert err.value.t == traj.times[1]


@pytest.mark.parametrize("model,f0", [(gm.FlatTorus(), 1.0), (gm.HyperbolicSurface(), 2.0),
                                      (gm.HyperbolicSurface(), 0.25)])
def test_schwarz_equality_cases(model, f0):
    traj = fe.integrate(model, {"f0": f0}, 10.0, 1e-3)
    hi, lo, _ = fe.schwarz_residuals(traj)
    assert np.abs(hi).max() < 1e-8


def test_schwarz_grid_small_perturbation():
    N = 32
    phi = gm.cosine_potential(N, 0.1 * gm.cosine_positivity_threshold(N))
    traj = fe.run(gm.TorusGrid(N), {"phi0": phi}, 0.5, 1e-3)
    res = traj.monitors["schwarz"]
    assert res.passed
    assert (-res.margins).max() < (1.0 / N) ** 2


def test_volume_and_sandwich_examples():
    hyp = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 10.0, 1e-2)
    r = fe.monitor_volume_and_sandwich(hyp)
    assert r.extra["C_prime"][-1] == 2.0
    assert r.extra["C"][-1] == pytest.approx(1.0, abs=1e-4)
    assert not r.extra["degenerate"]
    flat = fe.integrate(gm.FlatTorus(), {"f0": 1.5}, 3.0, 1e-2)
    r = fe.monitor_volume_and_sandwich(flat)
    assert r.extra["C_prime"][-1] == 1.5
    assert r.extra["C"][-1] == pytest.approx(math.exp(3.0) / 1.5, rel=1e-8)
    p1 = fe.integrate(gm.ProjectiveLine(), {"f0": 2.0}, 1.0, 1e-4)
    assert fe.monitor_volume_and_sandwich(p1).extra["degenerate"]


def test_volume_ceiling_violation():
    traj = fe.integrate(gm.HyperbolicSurface(), {"f0": 4.0}, 1.0, 1e-2)
    assert not fe.monitor_volume_and_sandwich(traj, ceiling=3.0).passed


def test_ke_residual_examples():
    model = gm.HyperbolicSurface()
    assert fe.ke_residual(gm.initial_state(model, 1.0)) == 0.0
    s = gm.FlowState(3.0, model, gm.exact_solution(model, 2.0, 3.0))
    assert fe.ke_residual(s) == pytest.approx(math.exp(-3), rel=1e-12)
    with pytest.raises(ValueError):
        fe.ke_residual(gm.initial_state(gm.FlatTorus()))


def test_ke_decay_rate():
    traj = fe.integrate(gm.HyperbolicSurface(), {"f0": 2.0}, 10.0, 1e-3)
    assert fe.fit_decay_rate(traj.times, fe.ke_residuals(traj)) == pytest.approx(-1.0, abs=0.01)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.1, max_value=8.0))
def test_hyperbolic_runs_pass_every_monitor(f0):
    traj = fe.run(gm.HyperbolicSurface(), {"f0": f0}, 5.0, 1e-2)
    assert all(r.passed for r in traj.monitors.values())
    assert all(traj.reports.columns["all_pass"])


# ---- modes


def test_test_mode_raises_with_trajectory():
    cfg = fe.MonitorConfig(volume_ceiling=3.0)
    with pytest.raises(MonitorViolation) as err:
        fe.run(gm.HyperbolicSurface(), {"f0": 4.0}, 1.0, 1e-2, monitors=cfg)
    assert err.value.trajectory.termination.kind == fe.REACHED_T_END


def test_explore_mode_warns():
    cfg = fe.MonitorConfig(volume_ceiling=3.0)
    with pytest.warns(fe.MonitorWarning):
        traj = fe.run(gm.HyperbolicSurface(), {"f0": 4.0}, 1.0, 1e-2, monitors=cfg, mode=fe.EXPLORE)
    assert not traj.reports[0].all_pass


def test_passing_run_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fe.run(gm.FlatTorus(), {}, 1.0, 1e-2, mode=fe.EXPLORE)


def test_summary_fields():
    traj = fe.run(gm.HyperbolicSurface(), {"f0": 2.0}, 10.0, 1e-3)
    s = fe.summary(traj)
    assert s["termination"] == "ReachedTEnd" and s["T"] is None and s["all_pass"]
    assert s["decay_rates"]["ke_residual"] == pytest.approx(-1.0, abs=0.01)
    assert s["monitors"]["trace"]["constant"] == 1.0
