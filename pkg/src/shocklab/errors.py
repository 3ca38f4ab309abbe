"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors are 2 (argparse),
NonConvergenceError is 3, WindowViolationError is 4, tolerance failures
are reported through experiment results rather than exceptions.
"""


class ShockLabError(Exception):
    """Base class for all package-specific errors."""


class WindowViolationError(ShockLabError):
    """The dynamics touched a guard cell: the truncation window was too small.

    Carries the partially built trajectories (with their violation flag set)
    so callers can inspect how far the run got.
    """

    def __init__(self, message, trajectories=None):
        super().__init__(message)
        self.trajectories = trajectories


class CouplingError(ShockLabError):
    """A coupling contract broke (wrong discrepancy count or location)."""


class NonConvergenceError(ShockLabError):
    """A numerical routine could not certify its declared tolerance."""
