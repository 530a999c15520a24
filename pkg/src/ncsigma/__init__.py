"""Numerical sigma models on the noncommutative torus.

Twisted-series algebra ``A_theta``, Heisenberg bimodules with their
constant-curvature connections, Gaussian instanton projections and a
gradient-flow relaxation of the action.
"""

__version__ = "0.1.0"

from .algebra import TwistedSeries, adjoint, multiply, norm_estimate, purify, trace
from .conformal import ConformalStructure
from .errors import (BasisError, ChargeError, ConvergenceError, DegenerateError, InputError,
                     IntegrabilityError, InvertibilityError, NCSigmaError, ParameterError,
                     TruncationError, WindowError)
from .flow import FlowConfig, relax
from .instanton import InstantonConfig, build_instanton, build_projection, moduli_scan
from .module import GaussPolySection, ModuleGeometry, geometry_from_theta, theta_of_alpha
from .sigma import ProjectionReport, action, bp_gap, charge, projection_report

__all__ = [
    "__version__",
    "TwistedSeries", "adjoint", "multiply", "norm_estimate", "purify", "trace",
    "ConformalStructure",
    "BasisError", "ChargeError", "ConvergenceError", "DegenerateError", "InputError",
    "IntegrabilityError", "InvertibilityError", "NCSigmaError", "ParameterError",
    "TruncationError", "WindowError",
    "FlowConfig", "relax",
    "InstantonConfig", "build_instanton", "build_projection", "moduli_scan",
    "GaussPolySection", "ModuleGeometry", "geometry_from_theta", "theta_of_alpha",
    "ProjectionReport", "action", "bp_gap", "charge", "projection_report",
]
