"""Feedback laws that stabilize canard cycles.

Two one-parameter families act near the fold: a fast-channel law that feeds
the conserved-level error back through the fast equation and a slow-channel
law that does the same through the slow equation.  Their chart-K2 ancestor
(`k2_mu`) and its Lyapunov certificate (`lyapunov_L2`) are exposed for the
scaled system.  For the van der Pol oscillator the fold-local law is combined
with a centre-manifold controller that pins the repelling slow branch
(`k1_vdp_mu` in the entry chart, blown down inside `composite_u`), localized
by C2 bump functions subordinate to two overlapping neighborhoods.

All evaluations are pure functions of the state and frozen parameter blocks;
closures returned by helpers capture only immutable data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

from .blowup import ChartPointK1, ChartPointK2
from .core import (
    EXP_GUARD,
    ControllerGains,
    PhasePoint,
    ScaledLevel,
    SystemParams,
    _require_eps,
    _require_finite,
    eval_H2,
    eval_level_term,
)
from .errors import (
    DomainError,
    ExponentOverflowError,
    IntegrationError,
    SingularConfigurationError,
)
from .models import vdp_rhs
from .sim import IntegratorConfig, Watcher, integrate

__all__ = [
    "NeighborhoodParams",
    "K1Domain",
    "SlowManifoldGraph",
    "default_neighborhoods",
    "fast_u",
    "slow_u",
    "c2_bound",
    "k2_mu",
    "lyapunov_L2",
    "vdp_slow_manifold_phi",
    "k1_chart_phi1",
    "bump_psi",
    "k1_vdp_mu",
    "composite_u",
]

# upper fold of the van der Pol critical manifold: the repelling branch
# x in (0, 2) exists for cubic heights y in (0, 4/3)
_UPPER_FOLD_Y = 4.0 / 3.0

# widest transition band a bump inequality may spend on easing in and out;
# wide box constraints would otherwise soften the bump over O(1) distances
_MAX_BAND = 0.15


@dataclass(frozen=True)
class NeighborhoodParams:
    """Geometry of the two controller-activation neighborhoods.

    N1 tubes the repelling branch of the critical manifold between heights
    y_min and y_h; N2 boxes the fold parabola.  beta1/beta2 are the tube
    half-widths measured through the defining residuals, x_min/x_max bound
    N2 horizontally, and inner_margin is the fraction of each transition
    band on which the bump has already reached its plateau.
    """

    beta1: float = 0.15
    beta2: float = 0.15
    x_min: float = 0.3
    x_max: float = 0.3
    y_min: float = 0.02
    y_h: float = 1.25
    inner_margin: float = 0.5

    def __post_init__(self):
        _require_finite(beta1=self.beta1, beta2=self.beta2, x_min=self.x_min,
                        x_max=self.x_max, y_min=self.y_min, y_h=self.y_h,
                        inner_margin=self.inner_margin)
        for name in ("beta1", "beta2", "x_min", "x_max", "y_min"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not self.y_min < self.y_h:
            raise DomainError(
                f"y_min < y_h required, got {self.y_min!r} >= {self.y_h!r}")
        if self.y_h > _UPPER_FOLD_Y:
            raise DomainError(
                f"y_h must not exceed {_UPPER_FOLD_Y!r}, got {self.y_h!r}")
        if not 0.0 < self.inner_margin < 1.0:
            raise DomainError(
                f"inner_margin must lie in (0, 1), got {self.inner_margin!r}")


def default_neighborhoods(eps: float, y_h: float = 1.25) -> NeighborhoodParams:
    """Standard activation geometry with the floor y_min = 2*eps.

    The floor keeps the slow manifold within O(eps) of the critical branch
    on the whole of N1 while excluding the fold point itself.
    """
    _require_eps(eps)
    return NeighborhoodParams(y_min=2.0 * eps, y_h=y_h)


# rho1 ceiling: the repelling equilibrium curve in the entry chart exists
# only up to r1 = 2/sqrt(3); the tighter ceiling is where it stays attracting
_RHO1_MAX = 2.0 / math.sqrt(3.0)
_RHO1_STABLE = (3.0 - math.sqrt(3.0)) / math.sqrt(3.0)


@dataclass(frozen=True)
class K1Domain:
    """Entry-chart box and sections for the centre-manifold controller.

    The flow enters through {eps1 = delta1} and exits through {r1 = rho1};
    the transported rectangle has half-height sigma1 around the closed-loop
    branch and radial extent rho1_tilde.
    """

    rho1: float = 0.6
    delta1: float = 0.1
    sigma1: float = 0.1
    rho1_tilde: float = 0.25

    def __post_init__(self):
        _require_finite(rho1=self.rho1, delta1=self.delta1,
                        sigma1=self.sigma1, rho1_tilde=self.rho1_tilde)
        if not 0.0 < self.rho1 < _RHO1_MAX:
            raise DomainError(
                f"rho1 must lie in (0, 2/sqrt(3)), got {self.rho1!r}")
        if self.delta1 <= 0.0:
            raise DomainError(f"delta1 must be > 0, got {self.delta1!r}")
        if self.sigma1 <= 0.0:
            raise DomainError(f"sigma1 must be > 0, got {self.sigma1!r}")
        if not 0.0 < self.rho1_tilde < self.rho1:
            raise DomainError(
                f"rho1_tilde must lie in (0, rho1), got {self.rho1_tilde!r}")

    @property
    def exit_branch_attracting(self) -> bool:
        """Whether the exit section sits on the attracting part of the branch."""
        return self.rho1 < _RHO1_STABLE


@dataclass(frozen=True)
class SlowManifoldGraph:
    """Graph x = phi(y, eps) of the repelling slow manifold over [lo, hi]."""

    phi: Callable[[float, float], float]
    domain: Tuple[float, float]

    def __post_init__(self):
        lo, hi = self.domain
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DomainError(f"domain must be a finite interval, got {self.domain!r}")

    def __call__(self, y: float, eps: float) -> float:
        return self.phi(y, eps)

    @classmethod
    def from_neighborhoods(cls, nbhd: NeighborhoodParams) -> "SlowManifoldGraph":
        return cls(
            phi=lambda y, eps: vdp_slow_manifold_phi(y, eps, nbhd),
            domain=(nbhd.y_min, nbhd.y_h),
        )


def fast_u(p: PhasePoint, params: SystemParams, gains: ControllerGains,
           level: ScaledLevel, phi_hat=None) -> float:
    """Fast-channel canard controller.

    Feeds the stored-level error back along the fast direction; the linear
    part -2*alpha*xh - alpha**2 recenters the fold at the bifurcation value.
    When the plant carries a known shear perturbation g = x*phi_hat, passing
    phi_hat appends the exact cancellation term.
    """
    _require_eps(params.eps)
    eps = params.eps
    xh = p.x - params.alpha
    term = eval_level_term(PhasePoint(xh, p.y), eps, gains.c2, level)
    u = -2.0 * params.alpha * xh - params.alpha ** 2 \
        + gains.c1 * xh * math.sqrt(eps) * term
    if phi_hat is not None:
        u -= math.sqrt(eps) * (p.y - xh * xh) * phi_hat(p.x, p.y, eps, params.alpha)
    return u


def slow_u(p: PhasePoint, params: SystemParams, gains: ControllerGains,
           level: ScaledLevel) -> float:
    """Slow-channel canard controller.

    The factor (y - x**2) vanishes on the critical manifold, so the slow
    equation is unchanged where the reduced flow already lives.
    """
    _require_eps(params.eps)
    eps = params.eps
    term = eval_level_term(p, eps, gains.c2, level)
    return params.alpha + gains.c1 * (p.y - p.x * p.x) / math.sqrt(eps) * term


def c2_bound(channel: str, eps: float, y: float, K: float) -> float:
    """Largest admissible exponential weight at height y.

    Beyond this value of c2 the controller magnitude is no longer uniformly
    bounded along the canard up to height y.  The slow channel tolerates a
    slightly larger weight (5/2 vs 3/2 prefactor).
    """
    if channel == "fast":
        factor = 1.5
    elif channel == "slow":
        factor = 2.5
    else:
        raise DomainError(f"channel must be 'fast' or 'slow', got {channel!r}")
    for name, value in (("eps", eps), ("y", y), ("K", K)):
        if not (math.isfinite(value) and value > 0.0):
            raise DomainError(f"{name} must be > 0, got {value!r}")
    return 2.0 + factor * (eps / y) * math.log(K * eps / y)


def k2_mu(p: ChartPointK2, gains: ControllerGains, level_h: float,
          phi2=None) -> float:
    """Level-stabilizing controller in the central chart.

    Implements -2*a2*x2 - a2**2 + c1*x2*exp(c2*y2)*(H2 - h) with the
    exponentials combined per term: exp(c2*y2)*H2 collapses to
    exp((c2-2)*y2) times a polynomial, so only the h-term ever carries the
    raw c2*y2 exponent.  An O(r2) shear g2 = x2*phi2 is cancelled by the
    optional phi2 correction.
    """
    _require_finite(r2=p.r2, x2=p.x2, y2=p.y2, alpha2=p.alpha2,
                    level_h=level_h)
    e1 = (gains.c2 - 2.0) * p.y2
    if e1 > EXP_GUARD:
        raise ExponentOverflowError("(c2-2)*y2", e1)
    level_term = math.exp(e1) * 0.5 * (p.y2 - p.x2 * p.x2 + 0.5)
    if level_h != 0.0:
        e2 = gains.c2 * p.y2
        if e2 > EXP_GUARD:
            raise ExponentOverflowError("c2*y2", e2)
        level_term -= level_h * math.exp(e2)
    mu = -2.0 * p.alpha2 * p.x2 - p.alpha2 ** 2 + gains.c1 * p.x2 * level_term
    if phi2 is not None:
        mu -= (p.y2 - p.x2 * p.x2) * p.r2 * phi2(p.r2, p.x2, p.y2, p.alpha2)
    return mu


def lyapunov_L2(p: ChartPointK2, gains: ControllerGains,
                level_h: float) -> Tuple[float, float]:
    """Level-error Lyapunov function and its closed-loop decay rate.

    Returns (L2, L2_rate) with L2 = (H2 - h)**2 / 2.  The rate is
    nonpositive for every state and every c2; it vanishes exactly on the
    target level set and on the axis {x2 = 0}.
    """
    _require_finite(x2=p.x2, y2=p.y2, level_h=level_h)
    ht = eval_H2(p.x2, p.y2) - level_h
    l2 = 0.5 * ht * ht
    # diagnostic: clamp instead of raising so the rate stays plottable
    e = min((gains.c2 - 2.0) * p.y2, EXP_GUARD)
    rate = -gains.c1 * p.x2 * p.x2 * math.exp(e) * ht * ht
    return l2, rate


def _phi0(y: float) -> float:
    """Root of x**2 - x**3/3 = y on the repelling branch 0 < x < 2.

    Closed-form trigonometric root of the depressed cubic, polished by two
    Newton steps; near y = 0 the arccos argument loses precision, so a
    square-root series seeds Newton instead.
    """
    if not 0.0 <= y <= _UPPER_FOLD_Y:
        raise DomainError(
            f"height must lie in [0, 4/3] for a repelling-branch root, got {y!r}")
    if y == 0.0:
        return 0.0
    if y < 1e-3:
        x = math.sqrt(y) + y / 6.0
    else:
        q = 3.0 * y - 2.0
        a = max(-1.0, min(1.0, -0.5 * q))
        x = 1.0 + 2.0 * math.cos(math.acos(a) / 3.0 - 2.0 * math.pi / 3.0)
    for _ in range(2):
        fx = 2.0 * x - x * x
        if fx == 0.0:
            break
        x -= (x * x - x ** 3 / 3.0 - y) / fx
    return x


def _phi1_corr(y: float) -> float:
    """First-order height coefficient phi0 / (2*phi0 - phi0**2)**2."""
    p0 = _phi0(y)
    fx = 2.0 * p0 - p0 * p0
    if fx == 0.0:
        raise SingularConfigurationError(
            f"slow branch loses hyperbolicity at height {y!r}")
    return p0 / (fx * fx)


def _phi_refined(y: float, eps: float) -> float:
    """Backward-time refinement of the slow-manifold graph.

    Seeds on the critical branch above the target height and integrates the
    time-reversed layer-plus-drift flow down to it; reversing time turns
    the repelling branch into an attractor, so the seed error contracts at
    the rate of the transverse eigenvalue.  The ceiling keeps the seed away
    from the upper fold where that rate degenerates.
    """
    y_seed = min(y + 0.35, 1.31)
    if y_seed <= y:
        return _phi0(y) + eps * _phi1_corr(y)
    start = PhasePoint(_phi0(y_seed), y_seed)

    def rhs(p, u):
        d = vdp_rhs(p, eps, u)
        return (-d.dx, -d.dy)

    traj = integrate(
        rhs, lambda p: 0.0, start,
        (0.0, 20.0 + 4.0 * (y_seed - y) / (eps * max(0.05, math.sqrt(y)))),
        IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12),
        watchers=[Watcher("section-crossing", lambda p: p.y - y,
                          direction="down", terminal=True)],
    )
    hits = traj.events_of("section-crossing")
    if not hits:
        raise IntegrationError(
            f"backward refinement never reached height {y!r}", traj)
    return hits[-1].state.x


def vdp_slow_manifold_phi(y: float, eps: float, nbhd: NeighborhoodParams,
                          refine: bool = False) -> float:
    """Graph x = phi(y, eps) of the repelling slow manifold.

    First-order expansion phi0(y) + eps*phi0/(2*phi0 - phi0**2)**2 about the
    critical branch; with refine=True the value is instead obtained by
    backward-time integration, which resolves the manifold beyond first
    order at the cost of an ODE solve per call.
    """
    _require_finite(y=y, eps=eps)
    if eps < 0.0:
        raise DomainError(f"eps must be >= 0, got {eps!r}")
    if not nbhd.y_min <= y <= nbhd.y_h:
        raise DomainError(
            f"height {y!r} outside the graph domain "
            f"[{nbhd.y_min!r}, {nbhd.y_h!r}]")
    if refine and eps > 0.0:
        return _phi_refined(y, eps)
    return _phi0(y) + eps * _phi1_corr(y)


def k1_chart_phi1(r1: float, eps1: float) -> float:
    """Entry-chart graph x1 = phi1(r1, eps1) of the repelling slow branch.

    Blow-down sends {x1 = phi1} to {x = sqrt(y)*phi1} with y = r1**2 and
    eps = r1**2*eps1, so phi1 = phi(r1**2, r1**2*eps1)/r1 away from r1 = 0
    and extends to the centre-branch root sqrt(1 + eps1/2) on {r1 = 0}.
    """
    _require_finite(r1=r1, eps1=eps1)
    if r1 < 0.0 or eps1 < 0.0:
        raise DomainError(f"chart coordinates must be >= 0, got r1={r1!r}, "
                          f"eps1={eps1!r}")
    if r1 >= _RHO1_MAX:
        raise DomainError(
            f"r1 must stay below 2/sqrt(3) on the repelling branch, got {r1!r}")
    if r1 < 1e-8:
        return math.sqrt(1.0 + 0.5 * eps1)
    y = r1 * r1
    return (_phi0(y) + y * eps1 * _phi1_corr(y)) / r1


def _smoothstep(t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _window(v: float, lo: float, hi: float, margin: float) -> float:
    """C2 plateau window for the scalar constraint lo < v < hi."""
    if v <= lo or v >= hi:
        return 0.0
    band = (1.0 - margin) * min(0.5 * (hi - lo), _MAX_BAND)
    s = 1.0
    if v < lo + band:
        s = _smoothstep((v - lo) / band)
    elif v > hi - band:
        s = _smoothstep((hi - v) / band)
    return s


def bump_psi(p: PhasePoint, region: str, nbhd: NeighborhoodParams) -> float:
    """C2 bump localizing a controller to one activation neighborhood.

    One quintic-smoothstep window per defining inequality, multiplied; the
    product is 1 on the margin-shrunk interior and 0 outside the region.
    """
    x, y = p
    if region == "N1":
        g = -y + x * x - x ** 3 / 3.0
        return (_window(g, -nbhd.beta1, nbhd.beta1, nbhd.inner_margin)
                * _window(x, 0.0, 2.0, nbhd.inner_margin)
                * _window(y, nbhd.y_min, nbhd.y_h, nbhd.inner_margin))
    if region == "N2":
        g = -y + x * x
        return (_window(g, -nbhd.beta2, nbhd.beta2, nbhd.inner_margin)
                * _window(x, -nbhd.x_min, nbhd.x_max, nbhd.inner_margin))
    raise DomainError(f"region must be 'N1' or 'N2', got {region!r}")


def _f1(r1: float, eps1: float, x1: float) -> float:
    return -1.0 + x1 * x1 - 0.5 * x1 * x1 * eps1 - r1 * x1 ** 3 / 3.0


def k1_vdp_mu(p: ChartPointK1, gains: ControllerGains,
              phi1: Callable[[float, float], float]) -> float:
    """Centre-manifold controller in the entry chart.

    Reverses the layer direction, recenters it at the offset x_star, and
    adds the invariance plus variational correction that pins the graph
    {x1 = x_star + phi1} as an exponentially attracting centre manifold
    with transverse rate -(2*phi1 + k1).
    """
    _require_finite(r1=p.r1, x1=p.x1, eps1=p.eps1)
    ph = phi1(p.r1, p.eps1)
    if abs(ph) < 1e-12:
        raise SingularConfigurationError(
            "phi1 vanishes at the fold; the invariance correction divides by it")
    xs = gains.x_star
    v = ((2.0 * ph + xs) / ph * _f1(p.r1, p.eps1, ph)
         - (p.eps1 * ph + p.r1 * ph * ph + gains.k1) * (p.x1 - xs - ph))
    return -_f1(p.r1, p.eps1, p.x1) - _f1(p.r1, p.eps1, p.x1 - xs) + v


def _vdp_u1(p: PhasePoint, eps: float, gains: ControllerGains,
            nbhd: NeighborhoodParams) -> float:
    """Blow-down of the entry-chart controller to original coordinates."""
    x, y = p
    phi = vdp_slow_manifold_phi(y, eps, nbhd)
    sy = math.sqrt(y)
    xs = gains.x_star * sy

    def f_shift(shift: float) -> float:
        d = x - shift
        return -y + d * d - d * d * eps / (2.0 * y) - d ** 3 / 3.0

    v1 = ((2.0 * phi + xs) / phi
          * (-y + phi * phi - eps / (2.0 * y) * phi * phi - phi ** 3 / 3.0)
          - (eps / y * phi + sy * phi * phi + gains.k1 * sy) * (x - phi - xs))
    return -f_shift(0.0) - f_shift(xs) + v1


def _vdp_u2(p: PhasePoint, eps: float, gains: ControllerGains) -> float:
    """Fold-local law: the h = 0, c2 = 2 fast controller in closed form."""
    return gains.c1 * p.x / math.sqrt(eps) * (p.y - p.x * p.x + 0.5 * eps)


def composite_u(p: PhasePoint, eps: float, gains: ControllerGains,
                nbhd: NeighborhoodParams, weights: str = "normalized") -> float:
    """Blend of the branch-pinning and fold-local controllers.

    paper_literal uses fixed half weights, so the authority drops to half
    where only one bump is active.  normalized restores full single-bump
    authority while agreeing with the half-weight mean on the overlap
    plateau; the envelope factor (s - psi1*psi2)/s with s = psi1 + psi2
    keeps the blend C2 where a support boundary is crossed.
    """
    _require_eps(eps)
    psi1 = bump_psi(p, "N1", nbhd)
    psi2 = bump_psi(p, "N2", nbhd)
    if psi1 == 0.0 and psi2 == 0.0:
        return 0.0
    u1 = _vdp_u1(p, eps, gains, nbhd) if psi1 > 0.0 else 0.0
    u2 = _vdp_u2(p, eps, gains) if psi2 > 0.0 else 0.0
    if weights == "paper_literal":
        return 0.5 * psi1 * u1 + 0.5 * psi2 * u2
    if weights == "normalized":
        s = psi1 + psi2
        return (psi1 * u1 + psi2 * u2) * (s - psi1 * psi2) / s
    raise DomainError(
        f"weights must be 'paper_literal' or 'normalized', got {weights!r}")
