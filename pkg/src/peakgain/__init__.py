"""Certified peak-to-peak gain bounds and reachable-set ellipsoids for
discrete-time linear systems with structured uncertainty.

The package certifies, via semidefinite programming, upper bounds on the
worst-case peak-to-peak gain of an uncertain plant, and outer ellipsoidal
approximations of its reachable set under peak-bounded disturbances. A
simulation oracle provides independent lower bounds and falsification-style
soundness checks for every certificate.
"""

from .engine import (
    GainCertificate,
    ReachCertificate,
    certify_gain,
    l1_bracket,
    lambda_line_search,
    maximize_volume,
    reach_rho_search,
    rho_line_search,
)
from .errors import PeakgainError
from .oracle import (
    DeltaRealization,
    empirical_gain,
    gain_soundness_check,
    reach_containment_check,
    simulate,
)
from .solver import SolveOptions
from .systems import Plant, augment, basis_filter, make_plant
from .uncertainty import UncertaintySpec, multiplier_class_for

__version__ = "0.1.0"

__all__ = [
    "DeltaRealization",
    "GainCertificate",
    "PeakgainError",
    "Plant",
    "ReachCertificate",
    "SolveOptions",
    "UncertaintySpec",
    "augment",
    "basis_filter",
    "certify_gain",
    "empirical_gain",
    "gain_soundness_check",
    "l1_bracket",
    "lambda_line_search",
    "make_plant",
    "maximize_volume",
    "multiplier_class_for",
    "reach_containment_check",
    "reach_rho_search",
    "rho_line_search",
    "simulate",
    "__version__",
]
