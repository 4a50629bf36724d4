"""Continuously observed quantum delta-kicked rotor: trajectories, ensembles and references."""

__version__ = "0.1.0"

from .core import Grid, Moments, NumericalGuardError, SimParams, Wavefunction, make_grid  # noqa: E402,F401
