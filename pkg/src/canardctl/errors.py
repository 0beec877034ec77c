"""Exception types shared across the package.

Numerical guards raise typed errors instead of returning inf/nan so that the
integrator can convert them into fault events and the CLI can map them onto
exit codes.
"""

from __future__ import annotations

__all__ = [
    "DomainError",
    "ExponentOverflowError",
    "SingularConfigurationError",
    "ExtrapolationError",
    "IntegrationError",
    "StepUnderflowError",
    "StepLimitError",
    "PatternDeviationError",
    "ConfigError",
]


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ExponentOverflowError(ArithmeticError):
    """An exponent left the safe range for exp() before exponentiation.

    Carries the symbolic name of the offending exponent and its value; the
    guard trips at |exponent| > 700, below the IEEE double limit of ~709.
    """

    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(
            f"exponent {name} = {value:.6g} exceeds the safe range (700)"
        )


class SingularConfigurationError(ValueError):
    """A controller was evaluated at a configuration where it is singular."""


class ExtrapolationError(RuntimeError):
    """A limit extrapolation did not converge; carries the raw sequence."""

    def __init__(self, message: str, values=None):
        self.values = tuple(values) if values is not None else ()
        super().__init__(message)


class IntegrationError(RuntimeError):
    """Integration could not finish; carries the partial trajectory."""

    def __init__(self, message: str, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class StepUnderflowError(IntegrationError):
    """Step control pushed the step below min_step (stiffness fault)."""


class StepLimitError(IntegrationError):
    """The step budget max_steps was exhausted before reaching t_end."""


class PatternDeviationError(RuntimeError):
    """A loop was classified contrary to the requested pattern segment.

    ``achieved`` holds the loop labels realized before the deviation,
    ``expected``/``got`` the label mismatch, ``trajectory`` the run so far.
    """

    def __init__(self, expected: str, got: str, achieved, trajectory=None):
        self.expected = expected
        self.got = got
        self.achieved = tuple(achieved)
        self.trajectory = trajectory
        super().__init__(
            f"loop {len(self.achieved) + 1} classified {got}, "
            f"pattern expects {expected}"
        )


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
