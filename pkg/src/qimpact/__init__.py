"""Quantum impact oscillators: propagation, chaos diagnostics, OTOCs, QLE."""

__version__ = "0.1.0"

from .errors import QImpactError  # noqa: F401
from .lattice import Grid, PotentialSpec, Variant, WaveState, build_grid, gaussian_packet  # noqa: F401
