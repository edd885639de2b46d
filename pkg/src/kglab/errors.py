"""Exception types raised across the lab."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all lab errors."""


class NonConvergence(LabError):
    """An iterative solver (eigen, Newton, smoothing) failed to converge."""


class BlowupDetected(LabError):
    """The field amplitude left the admissible range during time stepping.

    Carries the blow-up time and the trajectory recorded so far.
    """

    def __init__(self, message: str, time: float, trajectory=None):
        super().__init__(message)
        self.time = time
        self.trajectory = trajectory


class InsufficientSamples(LabError):
    """Too few samples above the noise floor to test an inequality."""


class ScaleOrderViolation(LabError):
    """Weight scales were requested with ``B >= A`` or without ``1 << B``."""


class BracketFailure(LabError):
    """Bisection endpoints did not exit on opposite sides.

    ``lo`` and ``hi`` hold the ``(exit sign, exit time)`` of both endpoint runs.
    """

    def __init__(self, message: str, lo=None, hi=None):
        super().__init__(message)
        self.lo = lo
        self.hi = hi


class BoundaryContamination(LabError):
    """Radiation reflected at the far boundary reached the analysis window."""


class ConfigError(LabError):
    """Malformed or unknown configuration key."""


class RecipeError(LabError):
    """Failure inside a CLI recipe."""
