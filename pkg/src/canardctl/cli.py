"""`canard-ctl`: experiment runner, verification entry point, MMO front-end.

Each experiment id maps to one registered runner that reproduces a standard
closed-loop simulation at desk scale.  A run writes four artifacts into its
output directory: trajectory.csv (t, x, y, u at 17 significant digits,
re-parseable to the bit), metrics.json (the fully resolved configuration
plus the numbers the run was made for), and phase.svg / controller.svg.

Exit codes: 0 success, 2 validation error or unwritable output, 3
integration fault, 4 pattern deviation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .blowup import ChartPointK1, ChartPointK2, k1_vdp_field, k2_field
from .controllers import (
    K1Domain,
    default_neighborhoods,
    fast_u,
    k1_chart_phi1,
    k1_vdp_mu,
    k2_mu,
    lyapunov_L2,
    slow_u,
)
from .core import (
    ControllerGains,
    PhasePoint,
    ScaledLevel,
    SystemParams,
    eval_H2,
)
from .errors import (
    ConfigError,
    DomainError,
    ExponentOverflowError,
    IntegrationError,
    PatternDeviationError,
    SingularConfigurationError,
    StepUnderflowError,
)
from .mmo import MmoPattern, classify_loops, run_pattern
from .models import (
    Derivative,
    fold_rhs,
    parabolic_shear_terms,
    quadratic_gap_phi2,
    zero_terms,
)
from .sim import IntegratorConfig, Trajectory, Watcher, convergence_metrics, integrate, integrate_vector
from .svgplot import (
    CriticalManifold,
    NeighborhoodShading,
    ReferenceCycle,
    emit_phase_svg,
    emit_timeseries_svg,
)
from .verify import run_verification

__all__ = ["ExperimentConfig", "run_experiment", "main"]

_SEED = 20260822

# parameter glossary: every accepted key and the block it configures
_PARAM_KEYS: Dict[str, str] = {
    "eps": "system", "alpha": "system",
    "c1": "gains", "c2": "gains", "k1": "gains", "x_star": "gains", "K": "gains",
    "h0": "level", "E": "level",
    "beta1": "nbhd", "beta2": "nbhd", "x_min": "nbhd", "x_max": "nbhd",
    "y_min": "nbhd", "y_h": "nbhd", "inner_margin": "nbhd",
    "rel_tol": "integ", "abs_tol": "integ", "max_step": "integ",
    "min_step": "integ", "max_steps": "integ",
    "t_end": "extra", "pattern": "extra", "repeat": "extra", "weights": "extra",
}
_STR_KEYS = {"pattern", "weights"}
_INT_KEYS = {"repeat", "max_steps"}

_DEFAULT_OUTPUTS = {
    "trajectory": "trajectory.csv",
    "metrics": "metrics.json",
    "phase": "phase.svg",
    "controller": "controller.svg",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment with its flattened parameter block."""

    experiment: str
    params: Dict[str, object] = field(default_factory=dict)
    initial_conditions: Tuple[PhasePoint, ...] = ()
    outputs: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in _RUNNERS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; "
                f"registered: {', '.join(sorted(_RUNNERS))}")
        if "h" in self.params:
            raise ConfigError(
                "raw 'h' rejected: supply the level as (h0, E) with "
                "h = h0*exp(-E); a literal h underflows silently")
        for key, value in self.params.items():
            if key not in _PARAM_KEYS:
                raise ConfigError(f"unknown parameter {key!r}")
            if key in _STR_KEYS:
                if not isinstance(value, str):
                    raise ConfigError(f"parameter {key!r} must be a string")
            elif key in _INT_KEYS:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"parameter {key!r} must be an integer")
            else:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"parameter {key!r} must be a number")
                if not math.isfinite(float(value)):
                    raise ConfigError(f"parameter {key!r} must be finite")
        object.__setattr__(
            self, "initial_conditions",
            tuple(PhasePoint(float(p[0]), float(p[1]))
                  for p in self.initial_conditions))
        for p in self.initial_conditions:
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise ConfigError(f"non-finite initial condition {p!r}")
        for key, value in self.outputs.items():
            if key not in _DEFAULT_OUTPUTS:
                raise ConfigError(f"unknown output slot {key!r}")
            if not isinstance(value, str) or not value:
                raise ConfigError(f"output {key!r} must name a file")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict) or "experiment" not in raw:
            raise ConfigError(f"config {path} must be an object with 'experiment'")
        unknown = set(raw) - {"experiment", "params", "initial_conditions", "outputs"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)!r}")
        try:
            ics = [(p[0], p[1]) for p in raw.get("initial_conditions", [])]
        except (TypeError, IndexError) as exc:
            raise ConfigError("initial_conditions must be [x, y] pairs") from exc
        return cls(
            experiment=raw["experiment"],
            params=dict(raw.get("params", {})),
            initial_conditions=tuple(ics),
            outputs=dict(raw.get("outputs", {})),
        )

    def with_overrides(self, overrides: Dict[str, object]) -> "ExperimentConfig":
        merged = dict(self.params)
        merged.update(overrides)
        return ExperimentConfig(self.experiment, merged,
                                self.initial_conditions, self.outputs)


class _Blocks:
    """Parameter blocks constructed from the merged experiment parameters."""

    def __init__(self, eff: Dict[str, object]):
        self.eff = eff
        self.params = SystemParams(float(eff["eps"]), float(eff.get("alpha", 0.0)))
        self.gains = ControllerGains(
            c1=float(eff.get("c1", 1.0)),
            c2=float(eff.get("c2", 2.0)),
            k1=float(eff.get("k1", 0.0)),
            x_star=float(eff.get("x_star", 0.0)),
            K=float(eff.get("K", 1.0)),
        )
        self.level = ScaledLevel(float(eff.get("h0", 0.0)), float(eff.get("E", 0.0)))
        self.integ = IntegratorConfig(
            rel_tol=float(eff.get("rel_tol", 1e-8)),
            abs_tol=float(eff.get("abs_tol", 1e-10)),
            max_step=float(eff.get("max_step", 10.0)),
            min_step=float(eff.get("min_step", 1e-12)),
            max_steps=int(eff.get("max_steps", 1_000_000)),
        )

    def neighborhoods(self) -> NeighborhoodParams:
        eff = self.eff
        base = default_neighborhoods(self.params.eps, float(eff.get("y_h", 1.25)))
        kwargs = {}
        for name in ("beta1", "beta2", "x_min", "x_max", "y_min", "inner_margin"):
            if name in eff:
                kwargs[name] = float(eff[name])
        if not kwargs:
            return base
        from dataclasses import replace
        return replace(base, **kwargs)


def _merge_defaults(cfg: ExperimentConfig, defaults: Dict[str, object]) -> Dict[str, object]:
    eff = dict(defaults)
    eff.update(cfg.params)
    return eff


# reference-cycle tracing --------------------------------------------------

def _bisect(g: Callable[[float], float], lo: float, hi: float) -> float:
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0.0) == (glo > 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _cycle_curve(level: ScaledLevel, eps: float, alpha: float = 0.0,
                 y_top_cap: float = 2.5, n: int = 240) -> Tuple[Tuple[float, float], ...]:
    """Points tracing {H = h}: xhat^2 = y + eps/2 - 2 eps h0 exp(2y/eps - E).

    The same formula serves the central chart with eps = 1.  For the
    maximal canard (h = 0) the curve is the unbounded parabola, truncated
    at the cap.
    """

    def sq(y: float) -> float:
        base = y + 0.5 * eps
        if level.h0 == 0.0:
            return base
        e = 2.0 * y / eps - level.E
        if e > 700.0:
            return -math.inf
        return base - 2.0 * eps * level.h0 * math.exp(e)

    y_bot = _bisect(sq, -0.5 * eps, 0.0) if sq(0.0) > 0.0 else -0.5 * eps
    if level.h0 > 0.0:
        hi = y_bot + eps
        while sq(hi) > 0.0 and hi < y_top_cap:
            hi = min(2.0 * hi + eps, y_top_cap + 1.0)
        y_top = _bisect(sq, y_bot + 0.25 * eps, hi) if sq(hi) <= 0.0 else y_top_cap
    else:
        y_top = y_top_cap
    right, left = [], []
    for i in range(n + 1):
        y = y_bot + (y_top - y_bot) * i / n
        s = sq(y)
        if s < 0.0:
            continue
        r = math.sqrt(s)
        right.append((alpha + r, y))
        left.append((alpha - r, y))
    return tuple(right + left[::-1] + right[:1])


# artifact writers ---------------------------------------------------------

def _write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "u"])
        for t, p, u in zip(traj.times, traj.states, traj.controls):
            w.writerow([f"{t:.17g}", f"{p[0]:.17g}", f"{p[1]:.17g}", f"{u:.17g}"])


def read_trajectory_csv(path) -> Tuple[Tuple[float, float, float, float], ...]:
    """Parse a trajectory.csv back into (t, x, y, u) rows at full precision."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "x", "y", "u"]:
        raise ConfigError(f"{path} is not a trajectory file")
    return tuple(tuple(float(v) for v in row) for row in rows[1:])


def _event_records(traj: Trajectory) -> List[Dict[str, object]]:
    return [
        {"kind": ev.kind, "time": ev.time, "direction": ev.direction,
         "state": list(ev.state)}
        for ev in traj.events
    ]


def _write_metrics(path, cfg: ExperimentConfig, eff: Dict[str, object],
                   results: Dict[str, object], status: str = "ok") -> None:
    doc = {
        "experiment": cfg.experiment,
        "config": {
            "experiment": cfg.experiment,
            "params": {k: eff[k] for k in sorted(eff)},
            "initial_conditions": [[p.x, p.y] for p in cfg.initial_conditions],
            "outputs": {**_DEFAULT_OUTPUTS, **cfg.outputs},
        },
        "results": results,
        "status": status,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_paths(cfg: ExperimentConfig, outdir: Path) -> Dict[str, Path]:
    names = {**_DEFAULT_OUTPUTS, **cfg.outputs}
    return {slot: outdir / name for slot, name in names.items()}


# experiment runners -------------------------------------------------------

def _convergence_results(traj: Trajectory, eps: float, level: ScaledLevel) -> Dict[str, object]:
    rep = convergence_metrics(traj, eps, level)
    return {
        "residual_initial": rep.initial,
        "residual_terminal": rep.terminal,
        "residual_threshold": rep.threshold,
        "time_below": rep.time_below,
    }


def _section_gap(traj: Trajectory) -> Tuple[List[float], Optional[float]]:
    """Return times of section returns and the widest consecutive state gap."""
    hits = traj.events_of("section-crossing")
    times = [ev.time for ev in hits]
    gap = None
    for a, b in zip(hits, hits[1:]):
        d = math.hypot(b.state[0] - a.state[0], b.state[1] - a.state[1])
        gap = d if gap is None else max(gap, d)
    return times, gap


def _run_fold(cfg: ExperimentConfig, outdir: Path, channel: str) -> int:
    if channel == "fast":
        defaults = {"eps": 0.01, "alpha": -0.1, "c1": 1.0, "c2": 2.0,
                    "h0": 0.25, "E": 400.0, "t_end": 1400.0}
        default_ic = PhasePoint(0.2, 0.3)
    else:
        # slow actuation only brakes or boosts the climb, so its transverse
        # contraction at c2 = 2 is c1*sqrt(eps)/4 and must beat the layer
        # repulsion 2*x along the canard ascent; a low stored cycle keeps
        # that repulsion small and the gain affordable
        defaults = {"eps": 0.01, "alpha": -0.1, "c1": 60.0, "c2": 2.0,
                    "h0": 0.25, "E": 60.0, "t_end": 600.0}
        default_ic = PhasePoint(0.45, 0.25)
    eff = _merge_defaults(cfg, defaults)
    blocks = _Blocks(eff)
    params, gains, level = blocks.params, blocks.gains, blocks.level
    ics = cfg.initial_conditions or (default_ic,)
    hot = zero_terms()
    # fast actuation relocates the fold to x = alpha; slow actuation cancels
    # the detuning instead and leaves the canard point at the origin
    center = params.alpha if channel == "fast" else 0.0

    def u(p: PhasePoint) -> float:
        if channel == "fast":
            return fast_u(p, params, gains, level)
        return slow_u(p, params, gains, level)

    # once per revolution: the cycle crosses the frame center moving right
    # on its lower arc
    section = Watcher("section-crossing", lambda p: p.x - center,
                      direction="up")
    trajs = []
    for ic in ics:
        trajs.append(integrate(
            lambda p, uval: fold_rhs(p, params, hot, uval, channel=channel),
            u, ic, (0.0, float(eff["t_end"])), blocks.integ, watchers=[section]))

    primary = trajs[0]
    framed = Trajectory(
        primary.times,
        tuple(PhasePoint(p.x - center, p.y) for p in primary.states),
        primary.controls, primary.events)
    results: Dict[str, object] = _convergence_results(framed, params.eps, level)
    times, gap = _section_gap(primary)
    results["section_return_times"] = times
    results["max_return_gap"] = gap
    results["overflow_events"] = len(primary.events_of("overflow-fault"))

    paths = _out_paths(cfg, outdir)
    _write_trajectory_csv(paths["trajectory"], primary)
    cycle = _cycle_curve(level, params.eps, center)
    emit_phase_svg(trajs, [CriticalManifold("fold"), ReferenceCycle(cycle)],
                   paths["phase"])
    emit_timeseries_svg(primary, paths["controller"])
    _write_metrics(paths["metrics"], cfg, eff, results)
    print(f"{cfg.experiment}: terminal residual {results['residual_terminal']:.3g}, "
          f"{len(times)} section returns")
    return 0


def _run_fold_fast(cfg: ExperimentConfig, outdir: Path) -> int:
    return _run_fold(cfg, outdir, "fast")


def _run_fold_slow(cfg: ExperimentConfig, outdir: Path) -> int:
    return _run_fold(cfg, outdir, "slow")


def _run_fold_fast_hot(cfg: ExperimentConfig, outdir: Path) -> int:
    """Shear-perturbed plant, with and without the compensating term.

    At these gains both runs converge; the correction's job shows in the
    controller trace and in the chart-level necessity demo (k2-hot), where
    the cancellation is exact.  At c1 <= 3 the plain loop loses the cycle
    outright and the run records the fault.
    """
    defaults = {"eps": 0.01, "alpha": 0.0, "c1": 5.0, "c2": 2.0,
                "h0": 0.25, "E": 400.0, "t_end": 700.0}
    eff = _merge_defaults(cfg, defaults)
    blocks = _Blocks(eff)
    params, gains, level = blocks.params, blocks.gains, blocks.level
    ic = (cfg.initial_conditions or (PhasePoint(0.2, 0.3),))[0]
    hot = parabolic_shear_terms(100.0)
    span = (0.0, float(eff["t_end"]))

    def run(compensate: bool):
        def u(p: PhasePoint) -> float:
            return fast_u(p, params, gains, level,
                          phi_hat=hot.phi_hat if compensate else None)

        try:
            traj = integrate(
                lambda p, uval: fold_rhs(p, params, hot, uval),
                u, ic, span, blocks.integ)
            status = "overflow-fault" if traj.events_of("overflow-fault") else "ok"
        except StepUnderflowError as exc:
            traj, status = exc.trajectory, "step-underflow"
        except IntegrationError as exc:
            traj, status = exc.trajectory, "step-limit"
        return traj, status

    comp, comp_status = run(True)
    plain, plain_status = run(False)
    if comp_status != "ok":
        raise IntegrationError(
            f"compensated run faulted ({comp_status}); nothing to demonstrate",
            comp)

    plain_block: Dict[str, object] = {"status": plain_status,
                                      "final_time": plain.final_time if plain else None}
    if plain_status == "ok":
        plain_block.update(_convergence_results(plain, params.eps, level))
    results = {
        "compensated": {**_convergence_results(comp, params.eps, level),
                        "status": comp_status},
        "plain": plain_block,
    }
    paths = _out_paths(cfg, outdir)
    _write_trajectory_csv(paths["trajectory"], comp)
    if plain is not None:
        _write_trajectory_csv(outdir / "plain.csv", plain)
    cycle = _cycle_curve(level, params.eps, params.alpha)
    emit_phase_svg([comp] + ([plain] if plain else []),
                   [CriticalManifold("fold"), ReferenceCycle(cycle)],
                   paths["phase"])
    emit_timeseries_svg(comp, paths["controller"])
    _write_metrics(paths["metrics"], cfg, eff, results)
    print(f"fold-fast-hot: compensated terminal residual "
          f"{results['compensated']['residual_terminal']:.3g}; "
          f"plain run {plain_status}")
    return 0


def _chart_ics(count: int, seed_shift: int = 0) -> Tuple[PhasePoint, ...]:
    """Deterministic chart-plane samples with |x2|, |y2| <= 3, off the origin."""
    rng = random.Random(_SEED + seed_shift)
    out = []
    while len(out) < count:
        x2, y2 = rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)
        if abs(x2) + abs(y2) >= 0.1:
            out.append(PhasePoint(x2, y2))
    return tuple(out)


# shear-run starts: inside the region 1 + r2*phi2 > 0 where the slow flow
# keeps its direction; below y2 = x2^2 - 1 the compensated loop has a
# spurious stable equilibrium on that locus and the stability lemma is void
_SHEAR_ICS = (PhasePoint(0.5, 0.5), PhasePoint(-1.0, 1.0), PhasePoint(2.0, 3.2),
              PhasePoint(-1.5, 1.8), PhasePoint(1.0, 0.8))


def _run_k2_family(cfg: ExperimentConfig, outdir: Path, with_shear: bool) -> int:
    """Central-chart runs; eps enters only through r2 = sqrt(eps)."""
    defaults = ({"eps": 1.0, "alpha": 1.0, "c1": 10.0, "c2": 2.0,
                 "h0": 1e-16, "E": 0.0, "t_end": 60.0}
                if with_shear else
                {"eps": 0.0, "alpha": 1.0, "c1": 1.0, "c2": 2.0,
                 "h0": 1e-16, "E": 0.0, "t_end": 500.0})
    eff = _merge_defaults(cfg, defaults)
    blocks = _Blocks(eff)
    gains = blocks.gains
    r2 = math.sqrt(float(eff["eps"]))
    alpha2 = float(eff.get("alpha", 0.0))
    h = blocks.level.value
    ics = cfg.initial_conditions or (_SHEAR_ICS if with_shear else _chart_ics(10))
    span = (0.0, float(eff["t_end"]))

    g2 = (lambda r, x2, y2, a2: x2 * quadratic_gap_phi2(r, x2, y2, a2)) \
        if with_shear else None

    def rhs_factory(mu_fn):
        def rhs(p: PhasePoint, mu: float) -> Derivative:
            d = k2_field(ChartPointK2(r2, p.x, p.y, alpha2), g2=g2, mu2=mu)
            return Derivative(d[0], d[1])
        return rhs

    def mu_factory(phi2):
        def mu(p: PhasePoint) -> float:
            return k2_mu(ChartPointK2(r2, p.x, p.y, alpha2), gains, h, phi2=phi2)
        return mu

    stop = Watcher("level-convergence",
                   lambda p: 1e-7 - abs(eval_H2(p.x, p.y) - h), terminal=True)

    def run_ic(ic: PhasePoint, phi2, watched: bool):
        u = mu_factory(phi2)
        try:
            traj = integrate(rhs_factory(u), u, ic, span, blocks.integ,
                             watchers=[stop] if watched else [])
            status = "overflow-fault" if traj.events_of("overflow-fault") else "ok"
        except StepUnderflowError as exc:
            traj, status = exc.trajectory, "diverged"
        except IntegrationError as exc:
            traj, status = exc.trajectory, "step-limit"
        gap = math.inf
        if traj is not None and len(traj):
            p = traj.final_state
            try:
                gap = abs(eval_H2(p[0], p[1]) - h)
            except ExponentOverflowError:
                gap = math.inf
        return traj, status, gap

    t0 = time.perf_counter()
    results: Dict[str, object] = {}
    phi2 = quadratic_gap_phi2 if with_shear else None
    per_ic = []
    trajs = []
    for ic in ics:
        traj, status, gap = run_ic(ic, phi2, watched=True)
        hits = traj.events_of("level-convergence") if traj is not None else ()
        max_rise = 0.0
        prev = None
        for p in traj.states:
            l2, _ = lyapunov_L2(ChartPointK2(r2, p[0], p[1], alpha2), gains, h)
            if prev is not None:
                max_rise = max(max_rise, l2 - prev)
            prev = l2
        per_ic.append({
            "ic": [ic.x, ic.y],
            "status": status,
            "terminal_h_gap": gap,
            "converged_at": hits[0].time if hits else None,
            "max_l2_increase": max_rise,
        })
        trajs.append(traj)
    results["per_ic"] = per_ic
    results["max_terminal_h_gap"] = max(r["terminal_h_gap"] for r in per_ic)
    results["runtime_s"] = round(time.perf_counter() - t0, 3)

    if with_shear:
        plain = []
        plain_trajs = []
        for ic in ics:
            traj, status, gap = run_ic(ic, None, watched=False)
            plain.append({"ic": [ic.x, ic.y], "status": status,
                          "terminal_h_gap": gap})
            if traj is not None:
                plain_trajs.append(traj)
        results["plain_per_ic"] = plain
        results["plain_worst_h_gap"] = max(r["terminal_h_gap"] for r in plain)
        paths = _out_paths(cfg, outdir)
        emit_phase_svg(plain_trajs, [ReferenceCycle(_cycle_curve(blocks.level, 1.0))],
                       outdir / "phase-plain.svg", x_label="x2", y_label="y2")
    else:
        paths = _out_paths(cfg, outdir)

    _write_trajectory_csv(paths["trajectory"], trajs[0])
    emit_phase_svg(trajs, [ReferenceCycle(_cycle_curve(blocks.level, 1.0))],
                   paths["phase"], x_label="x2", y_label="y2")
    emit_timeseries_svg(trajs[0], paths["controller"], label="mu2")
    _write_metrics(paths["metrics"], cfg, eff, results)
    print(f"{cfg.experiment}: worst terminal |H2 - h| = "
          f"{results['max_terminal_h_gap']:.3g} over {len(ics)} starts "
          f"({results['runtime_s']}s)")
    return 0


def _run_k2(cfg: ExperimentConfig, outdir: Path) -> int:
    return _run_k2_family(cfg, outdir, with_shear=False)


def _run_k2_hot(cfg: ExperimentConfig, outdir: Path) -> int:
    return _run_k2_family(cfg, outdir, with_shear=True)


def _run_k1_vdp(cfg: ExperimentConfig, outdir: Path) -> int:
    """Entry-chart wedge transport: a grid on the entry section contracts
    onto the shifted branch before it exits at r1 = rho1."""
    defaults = {"eps": 0.01, "c1": 1.0, "c2": 2.0, "k1": 1.0,
                "x_star": -0.01, "t_end": 6000.0}
    eff = _merge_defaults(cfg, defaults)
    blocks = _Blocks(eff)
    gains = blocks.gains
    dom = K1Domain()
    exit_section = Watcher("section-crossing", lambda s: s[0] - dom.rho1,
                           direction="up", terminal=True)

    def fun(t, s):
        cp = ChartPointK1(s[0], s[1], s[2])
        mu = k1_vdp_mu(cp, gains, k1_chart_phi1)
        d = k1_vdp_field(cp, mu)
        return (d[0], d[2], d[1])  # field reports (r1', eps1', x1')

    r1_grid = [0.05 + i * (dom.rho1_tilde - 0.05) / 4 for i in range(5)]
    exit_x1, exit_t, blown = [], [], []
    x1_initial = []
    for r1 in r1_grid:
        center = gains.x_star + k1_chart_phi1(r1, dom.delta1)
        for j in range(5):
            x1 = center - dom.sigma1 + j * dom.sigma1 / 2
            x1_initial.append(x1)
            times, states, events, status = integrate_vector(
                fun, (r1, x1, dom.delta1), (0.0, float(eff["t_end"])),
                blocks.integ, watchers=[exit_section])
            hits = [ev for ev in events if ev.kind == "section-crossing"]
            if not hits:
                raise IntegrationError(
                    f"grid point (r1={r1:.3g}, x1={x1:.3g}) never reached "
                    f"the exit section r1 = {dom.rho1}")
            exit_x1.append(hits[0].state[1])
            exit_t.append(hits[0].time)
            if len(blown) < 5:
                pts = tuple(PhasePoint(s[0] * s[1], s[0] * s[0]) for s in states)
                us = tuple(s[0] * s[0] * k1_vdp_mu(
                    ChartPointK1(s[0], s[1], s[2]), gains, k1_chart_phi1)
                    for s in states)
                blown.append(Trajectory(tuple(times), pts, us))

    spread0 = max(x1_initial) - min(x1_initial)
    spread1 = max(exit_x1) - min(exit_x1)
    results = {
        "grid_r1": r1_grid,
        "initial_x1_spread": spread0,
        "exit_x1_spread": spread1,
        "contraction_ratio": spread1 / spread0,
        "exit_times": exit_t,
    }
    paths = _out_paths(cfg, outdir)
    _write_trajectory_csv(paths["trajectory"], blown[0])
    emit_phase_svg(blown, [CriticalManifold("vdp")], paths["phase"])
    emit_timeseries_svg(blown[0], paths["controller"])
    _write_metrics(paths["metrics"], cfg, eff, results)
    print(f"k1-vdp: exit x1 spread {spread1:.3g} "
          f"({100 * results['contraction_ratio']:.2f}% of initial)")
    return 0


def _run_vdp_pattern(cfg: ExperimentConfig, outdir: Path,
                     pattern: MmoPattern, eff: Dict[str, object]) -> int:
    blocks = _Blocks(eff)
    nbhd = blocks.neighborhoods()
    start = (cfg.initial_conditions or (PhasePoint(-1.0, 0.6),))[0]
    try:
        traj, loops = run_pattern(pattern, blocks.params.eps, blocks.gains,
                                  nbhd, blocks.integ, start)
    except PatternDeviationError as exc:
        # leave the diagnostics behind before reporting the deviation
        paths = _out_paths(cfg, outdir)
        if exc.trajectory is not None:
            _write_trajectory_csv(paths["trajectory"], exc.trajectory)
            emit_phase_svg([exc.trajectory],
                           [CriticalManifold("vdp"), NeighborhoodShading(nbhd)],
                           paths["phase"])
            emit_timeseries_svg(exc.trajectory, paths["controller"])
        _write_metrics(paths["metrics"], cfg, eff, {
            "achieved": list(exc.achieved),
            "expected": exc.expected, "got": exc.got,
        }, status="pattern-deviation")
        raise

    labels = "".join(lb.label[0] for lb in loops)
    agreed = [lb.label for lb in classify_loops(traj)]
    results = {
        "labels": labels,
        "loops": [{"label": lb.label, "t_start": lb.t_start, "t_end": lb.t_end,
                   "max_x": lb.max_x, "max_y": lb.max_y} for lb in loops],
        "classifier_labels": agreed,
        "pattern": pattern.compact(),
        "repeat": pattern.repeat,
    }
    paths = _out_paths(cfg, outdir)
    _write_trajectory_csv(paths["trajectory"], traj)
    emit_phase_svg([traj], [CriticalManifold("vdp"), NeighborhoodShading(nbhd)],
                   paths["phase"])
    emit_timeseries_svg(traj, paths["controller"])
    _write_metrics(paths["metrics"], cfg, eff, results)
    print(f"{cfg.experiment}: loops {labels}")
    return 0


def _run_vdp_canard(cfg: ExperimentConfig, outdir: Path) -> int:
    defaults = {"eps": 0.01, "c1": 1.0, "c2": 2.0, "k1": 1.0,
                "x_star": -0.01, "y_h": 1.25, "repeat": 1}
    eff = _merge_defaults(cfg, defaults)
    x_star = float(eff["x_star"])
    label = "S" if x_star < 0 else "L"
    pattern = MmoPattern.parse(f"3{label}:{eff['y_h']:g}:{x_star:g}",
                               repeat=int(eff["repeat"]))
    return _run_vdp_pattern(cfg, outdir, pattern, eff)


def _run_vdp_mmo(cfg: ExperimentConfig, outdir: Path) -> int:
    defaults = {"eps": 0.01, "c1": 1.0, "c2": 2.0, "k1": 1.0,
                "pattern": "3L:0.75:0.01,4S:1.25:-0.01", "repeat": 1}
    eff = _merge_defaults(cfg, defaults)
    pattern = MmoPattern.parse(str(eff["pattern"]), repeat=int(eff["repeat"]))
    return _run_vdp_pattern(cfg, outdir, pattern, eff)


def _run_verify(cfg: ExperimentConfig, outdir: Path) -> int:
    buf = io.StringIO()
    failures = run_verification(buf)
    text = buf.getvalue()
    sys.stdout.write(text)
    checks = []
    for line in text.splitlines():
        if line.startswith(("PASS", "FAIL")):
            checks.append({"ok": line.startswith("PASS"), "line": line})
    paths = _out_paths(cfg, outdir)
    _write_metrics(paths["metrics"], cfg, dict(cfg.params),
                   {"failures": failures, "checks": checks},
                   status="ok" if failures == 0 else "failed")
    return 0 if failures == 0 else 1


_RUNNERS: Dict[str, Callable[[ExperimentConfig, Path], int]] = {
    "fold-fast": _run_fold_fast,
    "fold-fast-hot": _run_fold_fast_hot,
    "fold-slow": _run_fold_slow,
    "k2": _run_k2,
    "k2-hot": _run_k2_hot,
    "k1-vdp": _run_k1_vdp,
    "vdp-canard": _run_vdp_canard,
    "vdp-mmo": _run_vdp_mmo,
    "verify": _run_verify,
}


def run_experiment(cfg: ExperimentConfig, outdir) -> int:
    """Run one experiment, writing artifacts into outdir; returns exit code."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory {outdir} is not writable: {exc}",
              file=sys.stderr)
        return 2
    try:
        return _RUNNERS[cfg.experiment](cfg, outdir)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PatternDeviationError as exc:
        print(f"pattern deviation: {exc}", file=sys.stderr)
        return 4
    except (IntegrationError, ExponentOverflowError,
            SingularConfigurationError) as exc:
        print(f"integration fault: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: cannot write artifacts: {exc}", file=sys.stderr)
        return 2


# command line -------------------------------------------------------------

_OVERRIDE_FLOAT = ("eps", "alpha", "c1", "c2", "h0", "E", "x_star", "y_h",
                   "k1", "K", "t_end")


def _add_override_flags(sub: argparse.ArgumentParser) -> None:
    grp = sub.add_argument_group("parameter overrides")
    for name in _OVERRIDE_FLOAT:
        grp.add_argument(f"--{name}", type=float, default=None)
    grp.add_argument("--pattern", type=str, default=None)
    grp.add_argument("--repeat", type=int, default=None)
    grp.add_argument("--weights", type=str, default=None)


def _collect_overrides(args: argparse.Namespace) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for name in _OVERRIDE_FLOAT + ("pattern", "repeat", "weights"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    return out


def _run_one(job: Tuple[str, str, Dict[str, object]]) -> Tuple[str, int]:
    path, outdir, overrides = job
    try:
        cfg = ExperimentConfig.from_file(path).with_overrides(overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return path, 2
    return path, run_experiment(cfg, outdir)


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = _collect_overrides(args)
    base = Path(args.out) if args.out else Path("out")
    jobs: List[Tuple[str, str, Dict[str, object]]] = []
    if len(args.config) == 1:
        jobs.append((args.config[0], str(base), overrides))
    else:
        stems = [Path(c).stem for c in args.config]
        if len(set(stems)) != len(stems):
            print("error: batch configs must have distinct file stems "
                  "(each gets its own output directory)", file=sys.stderr)
            return 2
        jobs = [(c, str(base / s), overrides) for c, s in zip(args.config, stems)]

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    worst = 0
    for (path, code), (_, outdir, _o) in zip(outcomes, jobs):
        print(f"{path}: exit {code} ({outdir})")
        worst = max(worst, code)
    return worst


def _cmd_verify(args: argparse.Namespace) -> int:
    return 0 if run_verification() == 0 else 1


def _cmd_mmo(args: argparse.Namespace) -> int:
    params: Dict[str, object] = {"pattern": args.pattern}
    for name in ("eps", "c1", "k1", "repeat"):
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    try:
        cfg = ExperimentConfig("vdp-mmo", params)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg, Path(args.out))


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="canard-ctl",
        description="Closed-loop canard-cycle experiments for planar "
                    "fast-slow systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run experiment configs")
    run_p.add_argument("config", nargs="+", help="experiment config JSON file(s)")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for batch runs")
    run_p.add_argument("--out", default=None,
                       help="output directory (batch: one subdirectory per config)")
    _add_override_flags(run_p)
    run_p.set_defaults(fn=_cmd_run)

    ver_p = sub.add_parser("verify", help="run the invariant suite")
    ver_p.set_defaults(fn=_cmd_verify)

    mmo_p = sub.add_parser("mmo", help="drive an MMO pattern directly")
    mmo_p.add_argument("--pattern", required=True,
                       help='compact pattern, e.g. "3L:0.75:0.01,4S:1.25:-0.01"')
    mmo_p.add_argument("--eps", type=float, default=None)
    mmo_p.add_argument("--c1", type=float, default=None)
    mmo_p.add_argument("--k1", type=float, default=None)
    mmo_p.add_argument("--repeat", type=int, default=None)
    mmo_p.add_argument("--out", default="out-mmo")
    mmo_p.set_defaults(fn=_cmd_mmo)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
