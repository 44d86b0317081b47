"""Exception hierarchy.

Physics aborts (the run itself broke down) derive from :class:`PhysicsAbort`;
the CLI maps those to exit code 1 and everything in :class:`ConfigError` to 2.
"""

from __future__ import annotations


class MHDContactError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MHDContactError, ValueError):
    """Malformed case description or invalid parameter."""


class DerivativeBudgetExceeded(MHDContactError, ValueError):
    """More derivatives requested than the grid can resolve."""


class InsufficientHistory(MHDContactError):
    """The history ring is too short for the requested time derivative."""


class PhysicsAbort(MHDContactError):
    """The Lagrangian description or a positivity bound broke down."""


class SingularMap(PhysicsAbort):
    """|det grad eta| fell below the abort threshold somewhere."""


class NonPositivePressure(PhysicsAbort):
    """Density or pressure dropped below the abort threshold."""


class DegenerateTangent(PhysicsAbort):
    """|d_1 eta| vanished, so the interface frame is undefined."""


class TransversalityLost(PhysicsAbort):
    """The normal component of the magnetic field is too small."""


class SingularBoundaryMatrix(PhysicsAbort):
    """det E fell below threshold while building correctors."""


class EllipticSolveFailure(PhysicsAbort):
    """A per-mode elliptic solve produced non-finite values."""


class CflViolation(PhysicsAbort):
    """Requested time step exceeds the stability bound."""
