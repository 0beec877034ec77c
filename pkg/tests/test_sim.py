"""Tests for the embedded RK45 integrator, events, and faults."""

import math

import pytest

from canardctl.core import PhasePoint, ScaledLevel
from canardctl.errors import (
    ExponentOverflowError,
    StepLimitError,
    StepUnderflowError,
)
from canardctl.models import Derivative
from canardctl.sim import (
    ConvergenceReport,
    Event,
    IntegratorConfig,
    Trajectory,
    Watcher,
    convergence_metrics,
    integrate,
    integrate_vector,
)


def _no_u(p):
    return 0.0


def test_exponential_decay_accuracy():
    traj = integrate(
        lambda p, u: Derivative(-p.x, 0.0),
        _no_u,
        PhasePoint(1.0, 0.0),
        (0.0, 5.0),
        IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12),
    )
    assert traj.final_time == 5.0
    assert traj.final_state.x == pytest.approx(math.exp(-5.0), rel=1e-8)


def test_harmonic_oscillator_section_events():
    # x'' = -x from (1, 0): x = cos t, zero down-crossings at pi/2 + 2k pi
    traj = integrate(
        lambda p, u: Derivative(p.y, -p.x),
        _no_u,
        PhasePoint(1.0, 0.0),
        (0.0, 10.0),
        IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12),
        watchers=[Watcher("section-crossing", lambda p: p.x, "down")],
    )
    downs = traj.events_of("section-crossing")
    assert len(downs) == 2
    assert downs[0].time == pytest.approx(math.pi / 2, abs=1e-8)
    assert downs[1].time == pytest.approx(math.pi / 2 + 2 * math.pi, abs=1e-8)
    assert downs[0].state.y == pytest.approx(-1.0, abs=1e-7)


def test_linear_crossing_time_localization():
    traj = integrate(
        lambda p, u: Derivative(1.0, 0.0),
        _no_u,
        PhasePoint(-1.0, 0.0),
        (0.0, 3.0),
        watchers=[Watcher("section-crossing", lambda p: p.x, "up")],
    )
    ev = traj.events_of("section-crossing")[0]
    assert ev.time == pytest.approx(1.0, abs=1e-9)


def test_set_entry_exit_disc():
    # straight line through the unit disc around the origin
    ind = lambda p: 1.0 - (p.x * p.x + p.y * p.y)
    traj = integrate(
        lambda p, u: Derivative(1.0, 0.0),
        _no_u,
        PhasePoint(-2.0, 0.0),
        (0.0, 4.0),
        watchers=[Watcher("set-entry", ind), Watcher("set-exit", ind)],
    )
    entry = traj.events_of("set-entry")[0]
    exit_ = traj.events_of("set-exit")[0]
    assert entry.time == pytest.approx(1.0, abs=1e-8)
    assert exit_.time == pytest.approx(3.0, abs=1e-8)
    assert entry.direction == "enter" and exit_.direction == "exit"


def test_terminal_level_convergence_truncates():
    # |x| decays like e^-t from 1; threshold 1e-4 is hit at t = ln(1e4)
    thr = 1e-4
    traj = integrate(
        lambda p, u: Derivative(-p.x, 0.0),
        _no_u,
        PhasePoint(1.0, 0.0),
        (0.0, 50.0),
        watchers=[Watcher("level-convergence", lambda p: thr - abs(p.x), terminal=True)],
    )
    assert traj.final_time == pytest.approx(math.log(1e4), rel=1e-6)
    assert traj.events[-1].kind == "level-convergence"
    assert traj.final_time < 50.0
    assert len(traj.times) == len(traj.states) == len(traj.controls)


def test_controller_overflow_becomes_fault_event():
    def u(p):
        if p.x > 2.0:
            raise ExponentOverflowError("c2*y/eps - E", 900.0)
        return 0.0

    traj = integrate(
        lambda p, uval: Derivative(1.0, 0.0), u, PhasePoint(0.0, 0.0), (0.0, 10.0)
    )
    assert traj.events[-1].kind == "overflow-fault"
    assert traj.final_time < 10.0
    assert all(math.isfinite(p.x) for p in traj.states)


def test_finite_time_blowup_raises_stiffness_fault():
    with pytest.raises(StepUnderflowError) as exc:
        integrate(
            lambda p, u: Derivative(1.0 + p.x * p.x, 0.0),
            _no_u,
            PhasePoint(0.0, 0.0),
            (0.0, 3.0),
        )
    partial = exc.value.trajectory
    assert partial is not None and len(partial) > 1
    assert partial.final_time < 3.0


def test_step_limit_raises():
    with pytest.raises(StepLimitError):
        integrate(
            lambda p, u: Derivative(p.y, -p.x),
            _no_u,
            PhasePoint(1.0, 0.0),
            (0.0, 1000.0),
            IntegratorConfig(max_steps=50),
        )


def test_determinism_bitwise():
    def run():
        return integrate(
            lambda p, u: Derivative(p.y, -p.x + u),
            lambda p: -0.1 * p.y,
            PhasePoint(1.0, 0.5),
            (0.0, 20.0),
        )

    a, b = run(), run()
    assert a.times == b.times
    assert a.states == b.states
    assert a.controls == b.controls


def test_controls_recorded_at_accepted_points():
    traj = integrate(
        lambda p, u: Derivative(-p.x + u, 0.0),
        lambda p: 0.5 * p.x,
        PhasePoint(1.0, 0.0),
        (0.0, 1.0),
    )
    for p, c in zip(traj.states, traj.controls):
        assert c == 0.5 * p.x


def test_integrate_vector_three_components():
    # r' = 0.5 r e x, e' = -e^2 x, x' = 0 with x = 1: e(t) = e0/(1 + e0 t)
    def fun(t, s):
        r, e, x = s
        return (0.5 * r * e * x, -e * e * x, 0.0)

    times, states, events, status = integrate_vector(fun, (1.0, 1.0, 1.0), (0.0, 4.0))
    assert status == "ok"
    r, e, x = states[-1]
    assert e == pytest.approx(1.0 / 5.0, rel=1e-7)
    # r grows like (1 + e0 t)^(1/2)
    assert r == pytest.approx(math.sqrt(5.0), rel=1e-7)


def test_config_validation():
    with pytest.raises(Exception):
        IntegratorConfig(rel_tol=-1.0)
    with pytest.raises(Exception):
        IntegratorConfig(min_step=1.0, max_step=0.5)
    with pytest.raises(Exception):
        IntegratorConfig(max_steps=0)


def test_convergence_metrics_relative_threshold():
    # at x = 0 the h = 0 residual is (y + eps/2) / (2 eps), zero on y = -eps/2
    eps = 0.01
    level = ScaledLevel(0.0)
    ys = [0.4, 0.2, 0.1, 0.01, -0.00498, -0.0051]
    states = tuple(PhasePoint(0.0, y) for y in ys)
    times = tuple(float(i) for i in range(len(ys)))
    traj = Trajectory(times, states, tuple(0.0 for _ in ys))
    rep = convergence_metrics(traj, eps, level, threshold=1e-3, relative=True)
    assert isinstance(rep, ConvergenceReport)
    assert rep.initial == pytest.approx((0.4 + 0.005) / 0.02)
    # cut is 1e-3 * 20.25; first satisfied at t = 4 where the residual is 1e-3
    assert rep.time_below == 4.0
    assert rep.terminal == pytest.approx((-0.0051 + 0.005) / 0.02)
