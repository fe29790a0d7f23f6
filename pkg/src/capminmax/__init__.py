"""Discrete capillary min-max laboratory.

Meshed surface pairs in convex containers, the capillarity energy and its
gradient flow, plane sweepouts with a min-max relaxation, variational
diagnostics (density ratios, stability spectrum, blow-ups) and a
capillary free-boundary graph solver.
"""

__version__ = "0.1.0"

from .domain import ConvexDomain
from .energy import capillarity_energy, energy_gradient, energy_report
from .errors import CapillaryError, ConfigError
from .surface import SurfacePair, build_disk_cap

__all__ = ["ConvexDomain", "SurfacePair", "build_disk_cap", "capillarity_energy",
           "energy_gradient", "energy_report", "CapillaryError", "ConfigError", "__version__"]
