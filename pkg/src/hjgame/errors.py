"""Exception types shared across the package.

The CLI maps these onto its exit-code contract, so every failure mode that
can reach a command handler needs a distinct class here.
"""


class HJGameError(Exception):
    """Base class for all package errors."""


class SpecError(HJGameError):
    """Invalid game specification (config validation failures)."""


class NonIncreasingBreakpoints(SpecError):
    pass


class ZeroSlopePair(SpecError):
    pass


class NonFiniteEntry(SpecError):
    pass


class LengthMismatch(SpecError):
    """Slope list length must be one more than the breakpoint count."""


class DomainViolation(HJGameError):
    """Eigendirection map evaluated outside its ratio-sign domain."""


class IntegrationError(HJGameError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class InvalidStopConditions(IntegrationError):
    pass


class AnchorOutOfRange(HJGameError):
    pass


class ConstructionError(HJGameError):
    """A solution builder could not complete its construction."""


class RegimeMismatch(ConstructionError):
    pass


class DatumOutsideFamily(ConstructionError):
    pass


class ConvergenceFailure(ConstructionError):
    pass


class InvariantBoxViolation(ConstructionError):
    """Numerical escape from a positively invariant region; signals an
    integration fault, not a property of the game."""


class NoIntersection(ConstructionError):
    """The two manifold arcs required by the periodic construction do not
    cross; the construction is conditional on this crossing."""


class VerificationError(HJGameError):
    pass


class InvalidHorizon(VerificationError):
    pass


class InvalidGrid(VerificationError):
    pass


class EmptyTrajectory(VerificationError):
    pass


class WindowEscape(VerificationError):
    """Closed-loop state left the profiled window and no tail description
    extends the feedback there."""


class NonConvergence(VerificationError):
    pass
