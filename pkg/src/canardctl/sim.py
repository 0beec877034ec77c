"""Adaptive explicit integration with event detection and fault capture.

The integrator is a Dormand-Prince 5(4) embedded pair with PI step-size
control and the matching quartic dense-output interpolant.  An explicit
method is deliberate: trajectories either stay on controller-tamed slow
manifolds, where moderate steps are accurate, or jump along fast fibers,
where small steps are wanted anyway; a step-size collapse below ``min_step``
is reported as a stiffness fault carrying the partial trajectory instead of
being hidden by an implicit solver.

The controller is evaluated at every stage point.  A typed exponent overflow
raised by a controller, or a non-finite control value, terminates the run
with a terminal ``overflow-fault`` event at the last accepted state.  Events
requested through watchers are localized on the dense output by bisection to
1e-10 * max(1, |t|) in time.  Integration is deterministic: identical inputs
produce bitwise-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import PhasePoint, ScaledLevel, eval_level_term
from .errors import (
    DomainError,
    ExponentOverflowError,
    IntegrationError,
    StepLimitError,
    StepUnderflowError,
)
from .models import Derivative

__all__ = [
    "IntegratorConfig",
    "Event",
    "Watcher",
    "Trajectory",
    "ConvergenceReport",
    "integrate",
    "integrate_vector",
    "convergence_metrics",
]

# Dormand-Prince 5(4) tableau, FSAL form: the 5th-order weights are the last
# stage row, the 7th stage sits at the step end and seeds the next step.
_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_E = (
    71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
    -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)
_D = (
    -12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0,
)

_SAFE = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_FAC_MIN = 0.2   # smallest allowed step shrink ratio per step
_FAC_MAX = 10.0  # largest allowed step growth ratio per step

_EVENT_TIME_TOL = 1e-10


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and step bounds of the embedded pair."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 10.0
    min_step: float = 1e-12
    max_steps: int = 1_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "min_step"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")
        if self.min_step >= self.max_step:
            raise DomainError("min_step must be smaller than max_step")
        if self.max_steps <= 0:
            raise DomainError("max_steps must be positive")


@dataclass(frozen=True)
class Event:
    """A localized occurrence along a trajectory."""

    kind: str
    time: float
    state: tuple
    direction: str


@dataclass(frozen=True)
class Watcher:
    """Scalar event function watched for crossings at accepted steps.

    kinds: ``section-crossing`` fires on sign changes of ``fn`` filtered by
    ``direction`` (up / down / any); ``set-entry`` and ``set-exit`` expect an
    inside-positive indicator and fire on entering / leaving; a
    ``level-convergence`` watcher expects (threshold - |residual|) and fires
    when it becomes nonnegative.  Terminal watchers truncate the trajectory
    at the event.
    """

    kind: str
    fn: Callable
    direction: str = "any"
    terminal: bool = False


@dataclass(frozen=True)
class Trajectory:
    """Accepted integration points, per-point control values, and events."""

    times: tuple
    states: tuple
    controls: tuple
    events: tuple = ()

    def __post_init__(self):
        if not (len(self.times) == len(self.states) == len(self.controls)):
            raise DomainError("times, states and controls must align")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return self.times[-1]

    @property
    def final_state(self):
        return self.states[-1]

    def events_of(self, kind: str) -> tuple:
        return tuple(ev for ev in self.events if ev.kind == kind)


def _rms(values: Sequence[float]) -> float:
    return math.sqrt(sum(v * v for v in values) / len(values))


def _initial_step(fun, t0, y0, f0, t1, cfg, pack):
    # standard two-probe starting-step heuristic, fully deterministic
    sc = [cfg.abs_tol + cfg.rel_tol * abs(v) for v in y0]
    d0 = _rms([v / s for v, s in zip(y0, sc)])
    d1 = _rms([v / s for v, s in zip(f0, sc)])
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t1 - t0, cfg.max_step)
    y1 = pack(tuple(v + h0 * d for v, d in zip(y0, f0)))
    f1 = fun(t0 + h0, y1)
    d2 = _rms([(b - a) / s for a, b, s in zip(f0, f1, sc)]) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, t1 - t0, cfg.max_step)


def _dense_eval(theta, h, y_old, rcont):
    th1 = 1.0 - theta
    return tuple(
        rc1 + theta * (rc2 + th1 * (rc3 + theta * (rc4 + th1 * rc5)))
        for rc1, rc2, rc3, rc4, rc5 in zip(*rcont)
    )


def _crossing(kind: str, direction: str, g_old: float, g_new: float):
    """Return the event direction string if (g_old, g_new) is a crossing."""
    up = g_old < 0.0 <= g_new
    down = g_old > 0.0 >= g_new
    if kind == "section-crossing":
        if up and direction in ("up", "any"):
            return "up"
        if down and direction in ("down", "any"):
            return "down"
        return None
    if kind == "set-entry":
        return "enter" if up else None
    if kind == "set-exit":
        return "exit" if down else None
    if kind == "level-convergence":
        return "converged" if up else None
    raise DomainError(f"unknown watcher kind {kind!r}")


def _locate(crossed, h, t_old):
    """Bisect theta in (0, 1] for the first point past a dense-output crossing."""
    lo, hi = 0.0, 1.0
    tol = _EVENT_TIME_TOL * max(1.0, abs(t_old) + h)
    while (hi - lo) * h > tol:
        mid = 0.5 * (lo + hi)
        if crossed(mid):
            hi = mid
        else:
            lo = mid
    return hi


class _Engine:
    """One integration run over a tuple state; collects points and events."""

    def __init__(self, fun, y0, t_span, cfg, watchers, pack):
        self.fun = fun
        self.cfg = cfg
        self.watchers = tuple(watchers)
        self.pack = pack
        self.t0, self.t1 = t_span
        if not (math.isfinite(self.t0) and math.isfinite(self.t1) and self.t1 > self.t0):
            raise DomainError(f"bad t_span {t_span!r}")
        for v in y0:
            if not math.isfinite(v):
                raise DomainError(f"non-finite initial state {y0!r}")
        self.y = pack(y0)
        self.t = self.t0
        self.times = [self.t0]
        self.states = [self.y]
        self.events = []
        self.status = "ok"

    def run(self):
        fun, cfg, pack = self.fun, self.cfg, self.pack
        n = len(self.y)
        try:
            f_now = fun(self.t, self.y)
            h = _initial_step(fun, self.t, self.y, f_now, self.t1, cfg, pack)
        except (ExponentOverflowError, IntegrationError):
            self._fault()
            return self
        g_now = [w.fn(self.y) for w in self.watchers]
        facold = 1e-4
        just_rejected = False
        nsteps = 0

        while self.t < self.t1:
            if nsteps >= cfg.max_steps:
                self.status = "step-limit"
                return self
            h = min(h, cfg.max_step)
            clamped = h > self.t1 - self.t
            if clamped:
                h = self.t1 - self.t

            ks = [f_now]
            try:
                for s in range(6):
                    ts = self.t + _C[s] * h
                    ys = pack(tuple(
                        self.y[i] + h * sum(_A[s][j] * ks[j][i] for j in range(s + 1))
                        for i in range(n)
                    ))
                    ks.append(fun(ts, ys))
            except (ExponentOverflowError, IntegrationError):
                self._fault()
                return self
            nsteps += 1
            y_new = ys  # stage 6 lands on the 5th-order solution at t + h
            k7 = ks[6]

            sc = [
                cfg.abs_tol + cfg.rel_tol * max(abs(self.y[i]), abs(y_new[i]))
                for i in range(n)
            ]
            err = _rms([
                h * sum(_E[j] * ks[j][i] for j in range(7)) / sc[i]
                for i in range(n)
            ])
            if not math.isfinite(err):
                err = 10.0

            if err > 1.0:
                h *= max(_FAC_MIN, _SAFE / err ** _EXPO1)
                if h < cfg.min_step:
                    self.status = "step-underflow"
                    return self
                just_rejected = True
                continue

            # accepted: dense output then event sweep
            rcont = self._rcont(h, ks, k7, y_new, n)
            fired = self._sweep_events(h, rcont, g_now, y_new)
            terminal = next((f for f in fired if f[2].terminal), None)
            if terminal is not None:
                theta, direction, watcher = terminal
                t_ev = self.t + theta * h
                y_ev = pack(_dense_eval(theta, h, self.y, rcont))
                for th, dr, w in fired:
                    if th <= theta:
                        self.events.append(
                            Event(w.kind, self.t + th * h,
                                  pack(_dense_eval(th, h, self.y, rcont)), dr)
                        )
                self.t, self.y = t_ev, y_ev
                self.times.append(self.t)
                self.states.append(self.y)
                return self
            for th, dr, w in fired:
                self.events.append(
                    Event(w.kind, self.t + th * h,
                          pack(_dense_eval(th, h, self.y, rcont)), dr)
                )

            self.t = self.t1 if clamped else self.t + h
            self.y = y_new
            self.times.append(self.t)
            self.states.append(self.y)
            f_now = k7
            g_now = [w.fn(self.y) for w in self.watchers]

            facold = max(err, 1e-4)
            fac = err ** _EXPO1 / facold ** _BETA
            scale = _SAFE / fac if fac > 0.0 else _FAC_MAX
            scale = min(_FAC_MAX, max(_FAC_MIN, scale))
            if just_rejected:
                scale = min(1.0, scale)
                just_rejected = False
            if not clamped:
                h *= scale
                if h < cfg.min_step and self.t < self.t1:
                    self.status = "step-underflow"
                    return self
        return self

    def _rcont(self, h, ks, k7, y_new, n):
        rc1 = self.y
        rc2 = tuple(y_new[i] - self.y[i] for i in range(n))
        rc3 = tuple(h * ks[0][i] - rc2[i] for i in range(n))
        rc4 = tuple(rc2[i] - h * k7[i] - rc3[i] for i in range(n))
        rc5 = tuple(h * sum(_D[j] * ks[j][i] for j in range(7)) for i in range(n))
        return (rc1, rc2, rc3, rc4, rc5)

    def _sweep_events(self, h, rcont, g_now, y_new):
        fired = []
        for idx, w in enumerate(self.watchers):
            g_old = g_now[idx]
            g_new = w.fn(y_new)
            direction = _crossing(w.kind, w.direction, g_old, g_new)
            if direction is None:
                continue
            upward = direction in ("up", "enter", "converged")

            def crossed(theta, w=w, upward=upward):
                g = w.fn(self.pack(_dense_eval(theta, h, self.y, rcont)))
                return g >= 0.0 if upward else g <= 0.0

            theta = _locate(crossed, h, self.t)
            fired.append((theta, direction, w))
        fired.sort(key=lambda f: f[0])
        return fired

    def _fault(self):
        self.events.append(
            Event("overflow-fault", self.t, self.y, "fault")
        )
        self.status = "overflow-fault"


def integrate_vector(fun, y0, t_span, cfg=None, watchers=()):
    """Integrate y' = fun(t, y) over a tuple state.

    Returns (times, states, events, status); raising on faults is left to
    the caller, which knows what the state components mean.
    """
    cfg = cfg or IntegratorConfig()
    eng = _Engine(fun, tuple(y0), t_span, cfg, watchers, tuple).run()
    return eng.times, eng.states, eng.events, eng.status


def integrate(rhs, u, start, t_span, cfg=None, watchers=()):
    """Integrate a controlled planar field, recording control at accepted steps.

    ``rhs(p, u_value) -> Derivative`` supplies the field, ``u(p) -> float``
    the feedback.  The feedback is evaluated at every internal stage; a typed
    exponent overflow or non-finite control value ends the run with a
    terminal ``overflow-fault`` event.  Step-size collapse raises
    :class:`StepUnderflowError` and an exhausted step budget raises
    :class:`StepLimitError`, both carrying the partial trajectory.
    """
    cfg = cfg or IntegratorConfig()

    def fun(t, p):
        d = rhs(p, u(p))
        return (d[0], d[1])

    def pack(vals):
        return PhasePoint(vals[0], vals[1])

    eng = _Engine(fun, tuple(start), t_span, cfg, watchers, pack).run()

    def control_at(p):
        try:
            return u(p)
        except (ExponentOverflowError, IntegrationError):
            return math.nan  # fault record; the matching fault event is present

    controls = tuple(control_at(p) for p in eng.states)
    traj = Trajectory(tuple(eng.times), tuple(eng.states), controls, tuple(eng.events))
    if eng.status == "step-underflow":
        raise StepUnderflowError(
            f"step size collapsed below min_step = {cfg.min_step:g} at t = {eng.t:.6g}",
            traj,
        )
    if eng.status == "step-limit":
        raise StepLimitError(
            f"max_steps = {cfg.max_steps} exhausted at t = {eng.t:.6g}", traj
        )
    return traj


@dataclass(frozen=True)
class ConvergenceReport:
    """Scaled-level residual along a trajectory and its convergence moment."""

    residuals: tuple
    initial: float
    terminal: float
    time_below: float | None
    threshold: float


def convergence_metrics(
    traj: Trajectory,
    eps: float,
    level: ScaledLevel,
    c2: float = 2.0,
    threshold: float = 1e-3,
    relative: bool = True,
) -> ConvergenceReport:
    """Residual time series exp(c2*y/eps)(H - h) over a planar trajectory.

    With the default c2 = 2 the evaluation carries no large exponentials and
    is safe along any finite trajectory; overflowing points (possible after a
    fault) report an infinite residual.  ``time_below`` is the first accepted
    time where |residual| falls at or below the threshold, interpreted as a
    fraction of the initial residual when ``relative`` is set.
    """
    res = []
    for p in traj.states:
        try:
            res.append(eval_level_term(p, eps, c2, level))
        except ExponentOverflowError:
            res.append(math.inf)
    initial = res[0]
    cut = threshold * abs(initial) if relative else threshold
    t_below = None
    for t, r in zip(traj.times, res):
        if abs(r) <= cut:
            t_below = t
            break
    return ConvergenceReport(tuple(res), initial, res[-1], t_below, cut)
