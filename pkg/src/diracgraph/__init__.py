"""Spectra of periodic Dirac quantum graphs.

Secular equations for comb, ladder and necklace (loop) lattices, band
spectra over the Bloch flux, zero sets on the phase torus and the
probability that a random wavenumber lies in the spectrum.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bands import BandSet, CrossingEvent, compute_bands, detect_crossings, export_bands, load_bands
from .cells import CellSpec, comb_cell, ladder_cell, loop_cell, star_cell
from .core import assemble_cell_system, energy, gamma, plane_wave, skew_form_residual
from .errors import (
    AssemblyError,
    DomainError,
    NonConvergenceError,
    NotAnEigenvalueError,
    ShapeError,
    UnsupportedReductionError,
)
from .secular import SecularSystem, StarSecularSystem, alpha_polynomial, find_roots_k, secular_value
from .torus import (
    TorusPoint,
    ZeroCurve,
    empirical_spectrum_fraction,
    membership,
    octant_reduction_check,
    phi,
    probability,
    zero_set_curves,
)

__all__ = [
    "AssemblyError",
    "BandSet",
    "CellSpec",
    "CrossingEvent",
    "DomainError",
    "NonConvergenceError",
    "NotAnEigenvalueError",
    "SecularSystem",
    "ShapeError",
    "StarSecularSystem",
    "TorusPoint",
    "UnsupportedReductionError",
    "ZeroCurve",
    "alpha_polynomial",
    "assemble_cell_system",
    "comb_cell",
    "compute_bands",
    "detect_crossings",
    "empirical_spectrum_fraction",
    "energy",
    "export_bands",
    "find_roots_k",
    "gamma",
    "ladder_cell",
    "load_bands",
    "loop_cell",
    "membership",
    "octant_reduction_check",
    "phi",
    "plane_wave",
    "probability",
    "secular_value",
    "skew_form_residual",
    "star_cell",
    "zero_set_curves",
]
