"""Exception hierarchy for the bishadow package.

Every failure mode that carries meaning for the caller gets its own class,
so the CLI can map exceptions onto its exit-code contract and tests can
assert on the precise failure.
"""

from __future__ import annotations


class ShadowingError(Exception):
    """Base class for all bishadow errors."""


class ComponentMismatchError(ShadowingError):
    """Two points that live on different components were compared."""


class RadiusExceededError(ShadowingError):
    """log was requested for a point outside the injectivity ball."""


class OutOfBoxError(ShadowingError):
    """exp produced a point outside a euclidean-box chart."""


class TubeEscapeError(ShadowingError):
    """An evaluation left the tube on which the lifted maps are defined."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ParameterDomainError(ShadowingError):
    """A constructor or operation was called with out-of-domain parameters."""


class MagnitudeViolationError(ShadowingError):
    """A sampled perturbation displacement exceeded its declared magnitude."""


class DegenerateSplittingError(ShadowingError):
    """The stable/unstable bases do not span, or are numerically singular."""


class CertificationError(ShadowingError):
    """Semi-hyperbolicity certification failed.

    Carries the first violated inequality and the index at which it failed.
    """

    def __init__(self, message: str, index: int | None = None,
                 inequality: str | None = None):
        super().__init__(message)
        self.index = index
        self.inequality = inequality


class InfeasibleConstantsError(ShadowingError):
    """Derived shadowing constants are infeasible for the requested mode.

    ``denominator`` names the non-positive denominator; ``feasible_range``
    (asymptotic mode) reports the rate interval that would be feasible.
    """

    def __init__(self, message: str, denominator: str | None = None,
                 feasible_range: tuple[float, float] | None = None):
        super().__init__(message)
        self.denominator = denominator
        self.feasible_range = feasible_range


class TargetOutOfRangeError(ShadowingError):
    """An unstable inversion target exceeded the certified range."""


class NewtonDivergenceError(ShadowingError):
    """The unstable-block Newton solve failed to converge at some index."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NonConvergenceError(ShadowingError):
    """Fixed-point iteration did not converge.

    ``contraction_log`` holds the observed per-iteration contraction factors.
    """

    def __init__(self, message: str, contraction_log: list[float] | None = None):
        super().__init__(message)
        self.contraction_log = contraction_log or []


class BoundViolationError(ShadowingError):
    """A converged solve violated its advertised norm bound."""


class EnvelopeViolationError(ShadowingError):
    """An iterate or solution left its decay envelope."""

    def __init__(self, message: str, index: int | None = None,
                 band: int | None = None):
        super().__init__(message)
        self.index = index
        self.band = band


class ScheduleExhaustionError(ShadowingError):
    """Window doubling hit its cap before central agreement was reached."""


class EmptyTailError(ShadowingError):
    """A tail statistic was requested on a window with no tail indices."""


class SingularSystemError(ShadowingError):
    """The oracle's stacked linear system was singular."""


class ConfigError(ShadowingError):
    """An experiment config failed to parse or validate."""


class PreconditionError(ShadowingError):
    """Measured inputs violate a documented precondition of the solve mode."""
