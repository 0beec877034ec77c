"""Loop classification and the mixed-mode oscillation supervisor.

A loop is the stretch of a van der Pol trajectory between consecutive
entries into a small disc around the canard point; every cycle, headed or
not, transits that neighborhood along the attracting left branch, which
makes the disc a section that does not care what the previous loop did.
A loop whose maximal x exceeds the landing threshold jumped to the right
branch (large amplitude); otherwise it turned back at the canard height
(small amplitude).

The supervisor integrates the composite controller one loop at a time and
rewrites (x_star, y_h) between loops.  Switches happen exactly at the
disc-entry event, so the new parameters are in force before the trajectory
reaches either activation neighborhood and the blend never sees a
parameter step while a bump is live.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

from .controllers import NeighborhoodParams, composite_u
from .core import ControllerGains, PhasePoint
from .errors import ConfigError, IntegrationError, PatternDeviationError
from .models import vdp_rhs
from .sim import IntegratorConfig, Trajectory, Watcher, integrate

__all__ = [
    "DISC_RADIUS",
    "LAO_THRESHOLD",
    "LoopLabel",
    "MmoSegment",
    "MmoPattern",
    "classify_loops",
    "run_pattern",
]

# section disc around the canard point
DISC_RADIUS = 0.25

# strictly between the upper fold x = 2 and the leftmost right-branch
# landing abscissa ~2.6: separates "jumped right" from "grazed the fold"
LAO_THRESHOLD = 2.2

# generous wall-clock-free ceiling on one loop's duration at eps ~ 0.01;
# a loop that has not closed within this horizon is reported, not awaited
_LOOP_TIME_BUDGET = 2000.0

_UPPER_FOLD_Y = 4.0 / 3.0

# default entry point: on the attracting left branch, above the disc
_DEFAULT_START = PhasePoint(-1.0, 0.6)


@dataclass(frozen=True)
class LoopLabel:
    """Classification record for one completed loop."""

    label: str
    t_start: float
    t_end: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if self.label not in ("SAO", "LAO"):
            raise ConfigError(f"label must be 'SAO' or 'LAO', got {self.label!r}")
        if not self.t_start < self.t_end:
            raise ConfigError(
                f"loop interval must be increasing, got "
                f"[{self.t_start!r}, {self.t_end!r}]")


class MmoSegment(NamedTuple):
    count: int
    label: str
    y_h: float
    x_star: float


@dataclass(frozen=True)
class MmoPattern:
    """Requested loop sequence, segment by segment.

    Each segment demands `count` loops of one kind at one canard height;
    the sign of x_star enforces the kind (negative steers left of the
    repelling branch, so the canard has no head).  repeat=None means the
    pattern recurs indefinitely and only makes sense for a caller that
    imposes its own loop budget.
    """

    segments: Tuple[MmoSegment, ...]
    repeat: Optional[int] = 1

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("pattern needs at least one segment")
        object.__setattr__(self, "segments", tuple(
            MmoSegment(*s) for s in self.segments))
        for seg in self.segments:
            if seg.count < 1:
                raise ConfigError(f"segment count must be >= 1, got {seg.count!r}")
            if seg.label not in ("SAO", "LAO"):
                raise ConfigError(
                    f"segment label must be 'SAO' or 'LAO', got {seg.label!r}")
            if not 0.0 < seg.y_h <= _UPPER_FOLD_Y:
                raise ConfigError(
                    f"segment y_h must lie in (0, 4/3], got {seg.y_h!r}")
            if seg.label == "SAO" and not seg.x_star < 0.0:
                raise ConfigError(
                    f"SAO segments need x_star < 0, got {seg.x_star!r}")
            if seg.label == "LAO" and not seg.x_star > 0.0:
                raise ConfigError(
                    f"LAO segments need x_star > 0, got {seg.x_star!r}")
            if seg.label == "SAO" and seg.y_h >= _UPPER_FOLD_Y:
                raise ConfigError(
                    f"SAO segments need y_h < 4/3, got {seg.y_h!r}")
        if self.repeat is not None and self.repeat < 1:
            raise ConfigError(f"repeat must be >= 1 or None, got {self.repeat!r}")

    @classmethod
    def parse(cls, text: str, repeat: Optional[int] = 1) -> "MmoPattern":
        """Parse the compact form "3L:0.75:0.01,4S:1.25:-0.01"."""
        segments = []
        for chunk in text.split(","):
            m = re.fullmatch(
                r"\s*(\d+)([SL]):([^:]+):([^:]+)\s*", chunk)
            if m is None:
                raise ConfigError(f"malformed pattern segment {chunk!r}")
            count = int(m.group(1))
            label = "SAO" if m.group(2) == "S" else "LAO"
            try:
                y_h = float(m.group(3))
                x_star = float(m.group(4))
            except ValueError as exc:
                raise ConfigError(f"malformed number in segment {chunk!r}") from exc
            segments.append(MmoSegment(count, label, y_h, x_star))
        return cls(tuple(segments), repeat)

    def compact(self) -> str:
        """Inverse of parse (repeat is carried separately)."""
        return ",".join(
            f"{s.count}{s.label[0]}:{s.y_h:g}:{s.x_star:g}"
            for s in self.segments)

    def loop_schedule(self) -> List[MmoSegment]:
        """Per-loop parameter list for one full repetition cycle."""
        out: List[MmoSegment] = []
        for seg in self.segments:
            out.extend(MmoSegment(1, seg.label, seg.y_h, seg.x_star)
                       for _ in range(seg.count))
        return out


def _inside_disc(p: Sequence[float]) -> bool:
    return p[0] * p[0] + p[1] * p[1] < DISC_RADIUS * DISC_RADIUS


def classify_loops(traj: Trajectory) -> List[LoopLabel]:
    """Split a trajectory at disc entries and label each complete loop."""
    entries = [
        i for i in range(1, len(traj.states))
        if _inside_disc(traj.states[i]) and not _inside_disc(traj.states[i - 1])
    ]
    loops = []
    for a, b in zip(entries, entries[1:]):
        seg = traj.states[a:b + 1]
        max_x = max(p[0] for p in seg)
        max_y = max(p[1] for p in seg)
        label = "LAO" if max_x > LAO_THRESHOLD else "SAO"
        loops.append(LoopLabel(label, traj.times[a], traj.times[b], max_x, max_y))
    return loops


def _disc_watcher() -> Watcher:
    return Watcher(
        "set-entry",
        lambda p: DISC_RADIUS * DISC_RADIUS - p[0] * p[0] - p[1] * p[1],
        terminal=True,
    )


def run_pattern(
    pattern: MmoPattern,
    eps: float,
    gains: ControllerGains,
    nbhd: NeighborhoodParams,
    cfg: Optional[IntegratorConfig] = None,
    start: PhasePoint = _DEFAULT_START,
) -> Tuple[Trajectory, List[LoopLabel]]:
    """Drive the composite controller through a requested loop sequence.

    One integrate() call per loop, each ending at the terminal disc-entry
    event; the parameters for the next loop are installed at that state,
    strictly inside the disc.  Raises PatternDeviationError the moment a
    completed loop contradicts its segment's label, carrying the labels
    achieved so far and the stitched trajectory.
    """
    if pattern.repeat is None:
        raise ConfigError("run_pattern needs a finite repeat count")
    cfg = cfg or IntegratorConfig()
    schedule: List[MmoSegment] = []
    for _ in range(pattern.repeat):
        schedule.extend(pattern.loop_schedule())

    times: List[float] = []
    states: List[PhasePoint] = []
    controls: List[float] = []
    events = []
    labels: List[LoopLabel] = []

    def run_chunk(seg: MmoSegment, t0: float, p0: PhasePoint) -> Trajectory:
        seg_gains = replace(gains, x_star=seg.x_star)
        seg_nbhd = replace(nbhd, y_h=seg.y_h)

        def u(p: PhasePoint) -> float:
            return composite_u(p, eps, seg_gains, seg_nbhd)

        traj = integrate(
            lambda p, uval: vdp_rhs(p, eps, uval),
            u, p0, (t0, t0 + _LOOP_TIME_BUDGET), cfg,
            watchers=[_disc_watcher()],
        )
        if not traj.events_of("set-entry"):
            raise IntegrationError(
                f"loop did not close within {_LOOP_TIME_BUDGET} time units",
                traj)
        return traj

    def append_chunk(traj: Trajectory) -> None:
        skip = 1 if times else 0  # junction state equals the previous tail
        times.extend(traj.times[skip:])
        states.extend(traj.states[skip:])
        controls.extend(traj.controls[skip:])
        events.extend(traj.events)

    def stitched() -> Trajectory:
        return Trajectory(tuple(times), tuple(states), tuple(controls),
                          tuple(events))

    # preamble: reach the section once under the first loop's parameters
    chunk = run_chunk(schedule[0], 0.0, start)
    append_chunk(chunk)

    for seg in schedule:
        t0, p0 = times[-1], states[-1]
        chunk = run_chunk(seg, t0, p0)
        append_chunk(chunk)
        max_x = max(p[0] for p in chunk.states)
        max_y = max(p[1] for p in chunk.states)
        got = "LAO" if max_x > LAO_THRESHOLD else "SAO"
        loop = LoopLabel(got, t0, times[-1], max_x, max_y)
        if got != seg.label:
            raise PatternDeviationError(seg.label, got,
                                        [lb.label for lb in labels],
                                        stitched())
        labels.append(loop)

    return stitched(), labels
