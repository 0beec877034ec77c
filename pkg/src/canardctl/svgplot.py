"""Deterministic SVG emission for phase portraits and control time series.

Plotting is hand-rolled on purpose: the figures double as regression
fixtures, so the emitted file must be a pure function of its inputs.  No
timestamps, no generated ids, no library version drift; coordinates are
formatted to fixed precision and every element is written in a fixed
order.  Output is SVG 1.1 with nothing external referenced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

from .controllers import NeighborhoodParams
from .sim import Trajectory

__all__ = [
    "CriticalManifold",
    "ReferenceCycle",
    "NeighborhoodShading",
    "emit_svg",
    "emit_phase_svg",
    "emit_timeseries_svg",
]

# canvas geometry, pixels
_W, _H = 720, 540
_ML, _MR, _MT, _MB = 62, 16, 16, 46

_TRAJ_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b",
                "#e377c2", "#17becf", "#bcbd22")


@dataclass(frozen=True)
class CriticalManifold:
    """Dashed overlay y = x^2 (fold) or y = x^2 - x^3/3 (vdp)."""

    system: str = "fold"

    def curve(self, x: float) -> float:
        if self.system == "fold":
            return x * x
        if self.system == "vdp":
            return x * x - x ** 3 / 3.0
        raise ValueError(f"unknown system {self.system!r}")


@dataclass(frozen=True)
class ReferenceCycle:
    """Dashed overlay tracing a target periodic orbit, given as points."""

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points",
                           tuple((float(p[0]), float(p[1])) for p in self.points))


@dataclass(frozen=True)
class NeighborhoodShading:
    """Shaded controller-activation regions N1 (branch tube) and N2 (fold box)."""

    nbhd: NeighborhoodParams


def _fmt(v: float) -> str:
    # fixed sub-pixel precision keeps the byte stream reproducible
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _num(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def _ticks(lo: float, hi: float) -> list[float]:
    """1-2-5 tick positions covering [lo, hi] with 3 to 8 lines."""
    span = hi - lo
    if not (math.isfinite(span) and span > 0.0):
        return [lo]
    raw = span / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0)), key=lambda m: abs(m * mag - raw)) * mag
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


class _Bounds:
    def __init__(self):
        self.x_lo = math.inf
        self.x_hi = -math.inf
        self.y_lo = math.inf
        self.y_hi = -math.inf

    def add(self, x: float, y: float) -> None:
        if math.isfinite(x) and math.isfinite(y):
            self.x_lo = min(self.x_lo, x)
            self.x_hi = max(self.x_hi, x)
            self.y_lo = min(self.y_lo, y)
            self.y_hi = max(self.y_hi, y)

    def padded(self, frac: float = 0.06) -> Tuple[float, float, float, float]:
        if not math.isfinite(self.x_lo):
            return (-1.0, 1.0, -1.0, 1.0)
        dx = (self.x_hi - self.x_lo) or 1.0
        dy = (self.y_hi - self.y_lo) or 1.0
        return (self.x_lo - frac * dx, self.x_hi + frac * dx,
                self.y_lo - frac * dy, self.y_hi + frac * dy)


class _Mapper:
    def __init__(self, box: Tuple[float, float, float, float]):
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = box
        self.sx = (_W - _ML - _MR) / (self.x_hi - self.x_lo)
        self.sy = (_H - _MT - _MB) / (self.y_hi - self.y_lo)

    def px(self, x: float) -> float:
        return _ML + (x - self.x_lo) * self.sx

    def py(self, y: float) -> float:
        return _H - _MB - (y - self.y_lo) * self.sy

    def pt(self, x: float, y: float) -> str:
        return f"{_fmt(self.px(x))},{_fmt(self.py(y))}"


def _polyline_points(m: _Mapper, pts: Iterable[Tuple[float, float]]) -> list[str]:
    """Point strings split into runs at non-finite samples."""
    runs: list[str] = []
    cur: list[str] = []
    for x, y in pts:
        if math.isfinite(x) and math.isfinite(y):
            cur.append(m.pt(x, y))
        elif cur:
            runs.append(" ".join(cur))
            cur = []
    if cur:
        runs.append(" ".join(cur))
    return runs


def _thin(seq: Sequence, cap: int = 4000) -> list:
    if len(seq) <= cap:
        return list(seq)
    stride = -(-len(seq) // cap)
    out = list(seq[::stride])
    if out[-1] is not seq[-1]:
        out.append(seq[-1])
    return out


def _emit_polyline(out: list[str], m: _Mapper, pts, cls: str, color: str,
                   dashed: bool = False, width: float = 1.3) -> None:
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    for run in _polyline_points(m, pts):
        out.append(
            f'<polyline class="{cls}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}"{dash} points="{run}"/>'
        )


def _n1_polygons(nbhd: NeighborhoodParams) -> list[list[Tuple[float, float]]]:
    """Branch-tube region as polygons between the clipped offset curves."""
    xs = [i * 2.0 / 256 for i in range(257)]
    polys: list[list[Tuple[float, float]]] = []
    lower_run: list[Tuple[float, float]] = []
    upper_run: list[Tuple[float, float]] = []

    def flush():
        if len(lower_run) >= 2:
            polys.append(lower_run + upper_run[::-1])
        lower_run.clear()
        upper_run.clear()

    for x in xs:
        f = x * x - x ** 3 / 3.0
        lo = max(f - nbhd.beta1, nbhd.y_min)
        hi = min(f + nbhd.beta1, nbhd.y_h)
        if lo < hi:
            lower_run.append((x, lo))
            upper_run.append((x, hi))
        else:
            flush()
    flush()
    return polys


def _n2_polygon(nbhd: NeighborhoodParams) -> list[Tuple[float, float]]:
    xs = [-nbhd.x_min + i * (nbhd.x_max + nbhd.x_min) / 128 for i in range(129)]
    lower = [(x, x * x - nbhd.beta2) for x in xs]
    upper = [(x, x * x + nbhd.beta2) for x in xs]
    return lower + upper[::-1]


def _svg_head(out: list[str]) -> None:
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">'
    )
    out.append(f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>')
    out.append(
        f'<defs><clipPath id="plot-area"><rect x="{_ML}" y="{_MT}" '
        f'width="{_W - _ML - _MR}" height="{_H - _MT - _MB}"/></clipPath></defs>'
    )


def _axes(out: list[str], m: _Mapper, x_label: str, y_label: str) -> None:
    out.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#404040" stroke-width="1"/>'
    )
    font = 'font-family="Menlo, Consolas, monospace" font-size="11" fill="#404040"'
    for t in _ticks(m.x_lo, m.x_hi):
        px = m.px(t)
        out.append(f'<line x1="{_fmt(px)}" y1="{_H - _MB}" x2="{_fmt(px)}" '
                   f'y2="{_H - _MB + 5}" stroke="#404040" stroke-width="1"/>')
        out.append(f'<line x1="{_fmt(px)}" y1="{_MT}" x2="{_fmt(px)}" '
                   f'y2="{_H - _MB}" stroke="#e0e0e0" stroke-width="0.6"/>')
        out.append(f'<text x="{_fmt(px)}" y="{_H - _MB + 18}" {font} '
                   f'text-anchor="middle">{_num(t)}</text>')
    for t in _ticks(m.y_lo, m.y_hi):
        py = m.py(t)
        out.append(f'<line x1="{_ML - 5}" y1="{_fmt(py)}" x2="{_ML}" '
                   f'y2="{_fmt(py)}" stroke="#404040" stroke-width="1"/>')
        out.append(f'<line x1="{_ML}" y1="{_fmt(py)}" x2="{_W - _MR}" '
                   f'y2="{_fmt(py)}" stroke="#e0e0e0" stroke-width="0.6"/>')
        out.append(f'<text x="{_ML - 8}" y="{_fmt(py + 3.5)}" {font} '
                   f'text-anchor="end">{_num(t)}</text>')
    out.append(f'<text x="{_fmt((_ML + _W - _MR) / 2)}" y="{_H - 8}" {font} '
               f'text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="14" y="{_fmt((_MT + _H - _MB) / 2)}" {font} '
               f'text-anchor="middle" transform="rotate(-90 14 '
               f'{_fmt((_MT + _H - _MB) / 2)})">{y_label}</text>')


def emit_phase_svg(trajs: Sequence[Trajectory], overlays: Iterable, path,
                   x_label: str = "x", y_label: str = "y") -> None:
    """Write a phase portrait of one or more trajectories plus overlays.

    Draw order is shading, grid/axes backdrop, dashed overlays, then the
    trajectories, so the data always sits on top.
    """
    overlays = list(overlays)
    bounds = _Bounds()
    for traj in trajs:
        for p in traj.states:
            bounds.add(p[0], p[1])
    for ov in overlays:
        if isinstance(ov, ReferenceCycle):
            for x, y in ov.points:
                bounds.add(x, y)
        elif isinstance(ov, NeighborhoodShading):
            bounds.add(-ov.nbhd.x_min, 0.0)
            bounds.add(2.0, ov.nbhd.y_h + ov.nbhd.beta1)
    m = _Mapper(bounds.padded())

    out: list[str] = []
    _svg_head(out)
    out.append('<g clip-path="url(#plot-area)">')
    for ov in overlays:
        if isinstance(ov, NeighborhoodShading):
            for poly in _n1_polygons(ov.nbhd):
                pts = " ".join(m.pt(x, y) for x, y in poly)
                out.append(f'<polygon class="region-n1" fill="#2ca02c" '
                           f'fill-opacity="0.18" stroke="none" points="{pts}"/>')
            pts = " ".join(m.pt(x, y) for x, y in _n2_polygon(ov.nbhd))
            out.append(f'<polygon class="region-n2" fill="#d62728" '
                       f'fill-opacity="0.18" stroke="none" points="{pts}"/>')
    out.append("</g>")
    _axes(out, m, x_label, y_label)
    out.append('<g clip-path="url(#plot-area)">')
    for ov in overlays:
        if isinstance(ov, CriticalManifold):
            xs = [m.x_lo + i * (m.x_hi - m.x_lo) / 256 for i in range(257)]
            _emit_polyline(out, m, [(x, ov.curve(x)) for x in xs],
                           "overlay-critical-manifold", "#808080", dashed=True)
        elif isinstance(ov, ReferenceCycle):
            _emit_polyline(out, m, ov.points,
                           "overlay-reference-cycle", "#808080", dashed=True)
    for i, traj in enumerate(trajs):
        pts = [(p[0], p[1]) for p in _thin(traj.states)]
        _emit_polyline(out, m, pts, "traj",
                       _TRAJ_COLORS[i % len(_TRAJ_COLORS)])
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def emit_svg(traj: Trajectory, overlays: Iterable, path) -> None:
    """Phase portrait of a single trajectory; see :func:`emit_phase_svg`."""
    if len(traj) == 0:
        raise ValueError("cannot plot an empty trajectory")
    emit_phase_svg([traj], overlays, path)


def emit_timeseries_svg(traj: Trajectory, path, label: str = "u") -> None:
    """Write the control signal of a trajectory against time.

    Non-finite control samples (fault records) break the polyline instead
    of being drawn.
    """
    if len(traj) == 0:
        raise ValueError("cannot plot an empty trajectory")
    bounds = _Bounds()
    for t, u in zip(traj.times, traj.controls):
        bounds.add(t, u)
    m = _Mapper(bounds.padded())
    out: list[str] = []
    _svg_head(out)
    _axes(out, m, "t", label)
    out.append('<g clip-path="url(#plot-area)">')
    pairs = _thin(list(zip(traj.times, traj.controls)))
    _emit_polyline(out, m, pairs, "series", "#1f77b4")
    out.append("</g>")
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
