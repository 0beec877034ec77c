"""Vector fields: fold normal form with higher-order terms, and van der Pol.

Both systems are written in the fast time scale,

    fold:  x' = -y + x^2 + f~(x, y, eps, alpha) + u_fast
           y' = eps (x - alpha + g~(x, y, eps, alpha) + u_slow)

    vdp:   x' = -y + x^2 - x^3/3 + u
           y' = eps x

with exactly one of u_fast/u_slow active, selected by the actuation channel.
The higher-order closures carry whatever smooth remainder the application
needs; the fold control laws additionally require the shifted slow remainder
to factor as g^(x^, y, eps, alpha) = x^ * phi^, and callers supplying
``phi_hat`` assert that factorization themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .core import PhasePoint, SystemParams
from .errors import DomainError, IntegrationError

__all__ = [
    "Derivative",
    "HigherOrderTerms",
    "zero_terms",
    "parabolic_shear_terms",
    "quadratic_gap_phi2",
    "fold_rhs",
    "vdp_rhs",
    "critical_residual",
]

HotFn = Callable[[float, float, float, float], float]


class Derivative(NamedTuple):
    """Phase-space velocity (dx, dy)."""

    dx: float
    dy: float


@dataclass(frozen=True)
class HigherOrderTerms:
    """Smooth remainders of the fold normal form.

    ``f_tilde`` and ``g_tilde`` take (x, y, eps, alpha) and perturb the fast
    and slow equations.  ``phi_hat``, when present, takes (x^, y, eps, alpha)
    with x^ = x - alpha and must satisfy g~(x, y, .) = x^ * phi_hat(x^, y, .);
    the compensating controllers consume it directly.
    """

    f_tilde: HotFn
    g_tilde: HotFn
    phi_hat: Callable[[float, float, float, float], float] | None = None


def _zero(x: float, y: float, eps: float, alpha: float) -> float:
    return 0.0


def zero_terms() -> HigherOrderTerms:
    """The plain normal form: no higher-order remainders."""
    return HigherOrderTerms(_zero, _zero)


def parabolic_shear_terms(gain: float = 100.0) -> HigherOrderTerms:
    """Slow-equation coupling g~ = gain * x * (y - x^2), f~ = 0.

    The factorization g~ = x * phi_hat with phi_hat = gain * (y - x^2)
    holds at alpha = 0 only, which is the configuration this preset is
    meant for.
    """

    def g_tilde(x: float, y: float, eps: float, alpha: float) -> float:
        return gain * x * (y - x * x)

    def phi_hat(xh: float, y: float, eps: float, alpha: float) -> float:
        return gain * (y - xh * xh)

    return HigherOrderTerms(_zero, g_tilde, phi_hat)


def quadratic_gap_phi2(r2: float, x2: float, y2: float, alpha2: float) -> float:
    """Chart-level slow remainder factor phi2 = y2 - x2^2."""
    return y2 - x2 * x2


def fold_rhs(
    p: PhasePoint,
    params: SystemParams,
    hot: HigherOrderTerms,
    u: float,
    channel: str = "fast",
) -> Derivative:
    """Fold normal form velocity with the control injected on one channel."""
    if not math.isfinite(u):
        raise IntegrationError(f"non-finite control value {u!r}")
    x, y = p
    eps, alpha = params.eps, params.alpha
    ft = hot.f_tilde(x, y, eps, alpha)
    gt = hot.g_tilde(x, y, eps, alpha)
    if channel == "fast":
        return Derivative(-y + x * x + ft + u, eps * (x - alpha + gt))
    if channel == "slow":
        return Derivative(-y + x * x + ft, eps * (x - alpha + gt + u))
    raise DomainError(f"unknown actuation channel {channel!r}")


def vdp_rhs(p: PhasePoint, eps: float, u: float) -> Derivative:
    """Van der Pol velocity in Lienard form with fast-channel control."""
    if not math.isfinite(u):
        raise IntegrationError(f"non-finite control value {u!r}")
    x, y = p
    return Derivative(-y + x * x - x ** 3 / 3.0 + u, eps * x)


def critical_residual(system: str, p: PhasePoint) -> float:
    """Fast-equation residual f(x, y, 0) of the uncontrolled layer problem.

    Zero exactly on the critical manifold of the selected model.
    """
    x, y = p
    if system == "fold":
        return -y + x * x
    if system == "vdp":
        return -y + x * x - x ** 3 / 3.0
    raise DomainError(f"unknown system {system!r}")
