"""Stationary points, quantum spectra and level-density singularities of
constrained classical systems, with the u(3) boson model as worked example."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (  # noqa: E402
    ConstrainedSystem,
    Constraint,
    DegenerateConstraint,
    ScalarField,
    StationaryPoint,
    classify_singularity,
)
from .solver import SolverConfig, scan_parameter, solve_stationary  # noqa: E402
from .u3 import U3Params, u3_system  # noqa: E402

__all__ = [
    "ConstrainedSystem",
    "Constraint",
    "DegenerateConstraint",
    "ScalarField",
    "SolverConfig",
    "StationaryPoint",
    "U3Params",
    "__version__",
    "classify_singularity",
    "scan_parameter",
    "solve_stationary",
    "u3_system",
]
