"""Simulation and analysis toolkit for single-molecule ESR-STM spectra.

Spin model of a ligand radical coupled to a Tb ion, synthetic ESR-STM
spectra, RF-line calibration at constant junction amplitude, and the fits
that recover g, the zero-field intercept and the linewidth.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CONST,
    AnalysisError,
    DomainError,
    NumericError,
    Spectrum,
    energy_of_frequency,
    energy_resolution,
    make_spectrum,
)
from .spinham import SpinSystemConfig, build_hamiltonian, eigh, esr_lines, zeeman_line  # noqa: E402

__all__ = [
    "CONST",
    "AnalysisError",
    "DomainError",
    "NumericError",
    "Spectrum",
    "SpinSystemConfig",
    "build_hamiltonian",
    "eigh",
    "energy_of_frequency",
    "energy_resolution",
    "esr_lines",
    "make_spectrum",
    "zeeman_line",
    "__version__",
]
