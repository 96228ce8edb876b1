"""Explosion, random time change and absolute continuity of diffusions.

Simulation and integral tests for ``MP(a, b)``: explosion verdicts, the
clock ``T = int f(X) ds`` and its inverse, Girsanov densities and the
uniform-integrability check of price processes.
"""

from .coeffs import CoefficientField, ScalarField
from .sde import PathSample, PathStatus, SimConfig, simulate_path, simulate_paths
from .verdict import Outcome, Verdict

__version__ = "0.1.0"

__all__ = ["CoefficientField", "ScalarField", "PathSample", "PathStatus", "SimConfig", "simulate_path",
           "simulate_paths", "Outcome", "Verdict", "__version__"]
