import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnlab.barriers import (BarrierError, BarrierSpec, BarrierTemplate, FrozenTrajectory,
                            assemble_barrier, calibrate_delta, check_ordering, delta_sensitivity,
                            gap_time, h_flow, h_flow_cosine, layer_bounds, moving_layer,
                            moving_layer_K, moving_layer_supersolution, residual_field,
                            residual_tolerance, three_tail_bound)
from pnlab.evolution import build_initial, physical_grid
from pnlab.layer import exact_layer_values
from pnlab.nonlocal_core import Profile, TailModel
from pnlab.particles import ParticleConfig, integrate_particles
from pnlab.potential import make_potential

EPS = 0.05


def test_single_layer_residual_vanishes(exact):
    tp = BarrierTemplate("single", EPS, (0.1,), exact)
    rep = residual_field(tp.spec(0.0))
    assert np.max(np.abs(rep.field)) <= residual_tolerance(EPS, 0.5)
    assert calibrate_delta(tp)[0] == 0.0
    v = assemble_barrier(tp.spec(0.0), 0.3)
    assert np.allclose(v.values, exact_layer_values((v.x - 0.1) / EPS), atol=1e-12)


def test_two_upper_components(exact):
    spec = BarrierTemplate("two_upper", EPS, (-0.5, 0.5), exact).spec(0.3)
    shift = EPS * 0.3
    v = assemble_barrier(spec, 0.0)
    assert v(np.array([-1e6]))[0] == pytest.approx(shift, abs=1e-6)
    t = 0.005
    x = spec.trajectory.positions_at(t)
    mid, th = x.mean(), x[1] - x[0]
    central = 2 * exact_layer_values(th / (2 * EPS)) - 1 + shift
    assert assemble_barrier(spec, t)(np.array([mid]))[0] == pytest.approx(central, abs=1e-12)


def test_spec_validation(exact):
    traj, _ = integrate_particles(ParticleConfig((-0.5, 0.5)), 1.0)
    with pytest.raises(ValueError):
        BarrierSpec("two_lower", EPS, 0.0, traj, exact)
    with pytest.raises(ValueError):
        BarrierSpec("two_upper", EPS, 1.5, traj, exact)
    with pytest.raises(ValueError):
        BarrierSpec("three_upper", EPS, 0.0, traj, exact)
    with pytest.raises(ValueError):
        BarrierSpec("two_hat", EPS, 0.0, traj, exact)
    with pytest.raises(ValueError):
        BarrierSpec("two_upper", EPS, 0.1, traj, exact)
    with pytest.raises(ValueError):
        BarrierSpec("single", EPS, 0.0, traj, exact)


def test_outside_trajectory_window(exact):
    spec = BarrierTemplate("two_upper", EPS, (-0.5, 0.5), exact).spec(0.0)
    with pytest.raises(BarrierError):
        assemble_barrier(spec, 10.0)
    late = spec.trajectory.t_end * 0.999
    with pytest.raises(BarrierError):
        residual_field(spec, times=[late])


def test_delta_zero_deficit_decreases(exact):
    mins = [residual_field(BarrierTemplate("two_upper", e, (-0.5, 0.5), exact).spec(0.0)).min
            for e in (0.1, 0.05)]
    assert mins[0] < mins[1] < 0
    assert mins[0] == pytest.approx(-3.94, abs=0.01)


def test_calibration_cap(exact):
    with pytest.raises(BarrierError, match="exceeds 1"):
        calibrate_delta(BarrierTemplate("two_upper", 0.1, (-0.5, 0.5), exact))


def test_delta_sensitivity(exact):
    tp = BarrierTemplate("two_upper", 0.1, (-0.5, 0.5), exact)
    assert delta_sensitivity(tp, 0.0, 0.05) > 0.5
    with pytest.raises(ValueError):
        delta_sensitivity(tp, 0.05, 0.0)


def test_gap_time_marks_theta(exact):
    spec = BarrierTemplate("two_upper", EPS, (-0.5, 0.5), exact).spec(0.0)
    theta = EPS ** 0.4
    T1 = gap_time(spec, theta)
    assert np.diff(spec.trajectory.positions_at(T1))[0] == pytest.approx(theta, abs=1e-10)
    rep = residual_field(spec, theta, n_times=3)
    assert rep.window[1] < T1 and rep.as_dict()["n_times"] == 3


def test_check_ordering(exact):
    g = physical_grid(EPS)
    a = build_initial("two", EPS, [-0.5, 0.5], exact, g)
    assert check_ordering(a, a) == (True, 0.0, pytest.approx(a.x[0]))
    b = Profile(g, a.values + 1e-3, a.tail)
    assert check_ordering(a, b)[0] and not check_ordering(b, a)[0]
    other = build_initial("two", EPS, [-0.5, 0.5], exact, physical_grid(EPS, half_width=3.0))
    with pytest.raises(ValueError):
        check_ordering(a, other)


def test_three_tail_bound_stable(exact):
    C = [three_tail_bound(exact, e, e ** 0.4) for e in (0.1, 0.05, 0.025)]
    assert C == pytest.approx([0.3704, 0.4328, 0.4681], abs=1e-4)
    assert all(abs(b / a - 1) <= 0.2 for a, b in zip(C, C[1:]))


def test_h_flow_closed_form_and_bounds():
    W = make_potential()
    assert h_flow(0.1, 1.0, W) == pytest.approx(np.arctan(np.tan(0.1 * np.pi) / np.e) / np.pi,
                                                abs=1e-12)
    assert np.all(h_flow(0.0, [0.0, 1.0, 5.0], W) == 0.0)
    tau = np.linspace(0, 5, 51)
    for xi in (0.05, 0.1, 0.2):
        h = h_flow(xi, tau, W)
        assert np.max(np.abs(h - h_flow_cosine(xi, tau))) <= 1e-10
        assert np.all(h > 0) and np.all(h <= xi * np.exp(-tau / 2))
    with pytest.raises(ValueError):
        h_flow(0.6, 1.0, W)
    with pytest.raises(ValueError):
        h_flow(0.1, -1.0, W)


@settings(max_examples=30, deadline=None)
@given(xi=st.floats(-0.5, 0.5), tau=st.floats(0.0, 8.0))
def test_h_flow_cosine_property(xi, tau):
    h = h_flow(xi, [tau, tau + 1.0], make_potential())
    assert np.allclose(h, h_flow_cosine(xi, np.array([tau, tau + 1.0])), atol=1e-9)


def test_moving_layer_constants(exact):
    c, C = layer_bounds(exact)
    assert c == pytest.approx(0.0920, abs=1e-4) and C == 1.0
    assert moving_layer_K(exact, EPS) == pytest.approx(9.0067, abs=1e-3)


def test_moving_layer_supersolution(exact):
    rep, K = moving_layer_supersolution(exact, EPS, 0.05)
    assert rep.min >= -residual_tolerance(EPS, 0.5)
    rep0, _ = moving_layer_supersolution(exact, EPS, 0.0)
    assert np.max(np.abs(rep0.field)) <= residual_tolerance(EPS, 0.5)
    with pytest.raises(ValueError):
        moving_layer_supersolution(exact, EPS, 0.05, mu=0.5)
    with pytest.raises(ValueError):
        moving_layer_supersolution(exact, EPS, 0.05, K=K / 2)


def test_moving_layer_long_time_limit(exact):
    g = physical_grid(EPS)
    rho, y, K = 0.05, 0.1, 9.0
    late = moving_layer(exact, EPS, rho, y, 0.25, K, g)(10.0)
    assert np.allclose(late.values, exact_layer_values((g.x - y + K * rho) / EPS), atol=1e-12)


def test_frozen_trajectory():
    f = FrozenTrajectory(0.3)
    assert f.positions_at(1.0)[0] == 0.3 and f.velocities_at(1.0)[0] == 0.0
