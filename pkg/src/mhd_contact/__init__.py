"""Two-phase ideal MHD contact discontinuities in Lagrangian coordinates.

The package evolves the flow map of a compressible two-phase plasma whose
interface is a contact discontinuity, using a vanishing-viscosity
approximation, and provides the diagnostics used to check the structural
identities of that system.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .constitutive import ReferenceData, check_prop1, check_prop2_jumps, reconstruct  # noqa: E402
from .errors import ConfigError, MHDContactError, PhysicsAbort  # noqa: E402
from .grid import Phase, SlabGrid  # noqa: E402
from .integrator import SolverState, StepConfig, ViscousIntegrator  # noqa: E402

__all__ = [
    "ConfigError",
    "MHDContactError",
    "Phase",
    "PhysicsAbort",
    "ReferenceData",
    "SlabGrid",
    "SolverState",
    "StepConfig",
    "ViscousIntegrator",
    "check_prop1",
    "check_prop2_jumps",
    "reconstruct",
]
