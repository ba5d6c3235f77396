"""Physical constants, energy/frequency conversion and the spectrum container.

All frequencies are kept in Hz, fields in tesla, currents in ampere.
GHz only shows up at the I/O boundary (CSV/JSON/CLI).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np


class DomainError(ValueError):
    """Input outside the domain of an operation."""


class NumericError(ArithmeticError):
    """A numerical routine failed to converge."""


class AnalysisError(RuntimeError):
    """An analysis step could not produce a meaningful result."""


@dataclass(frozen=True)
class PhysConstants:
    """CODATA 2018 exact/recommended values."""

    h: float = 6.62607015e-34  # J s
    mu_B: float = 9.2740100783e-24  # J/T
    e: float = 1.602176634e-19  # J/eV
    k_B: float = 1.380649e-23  # J/K

    @property
    def mu_B_over_h(self) -> float:
        """Bohr magneton over Planck constant in GHz/T."""
        return self.mu_B / self.h * 1e-9

    @property
    def h_eV(self) -> float:
        return self.h / self.e


CONST = PhysConstants()

# Hz per tesla for g = 1
MUB_OVER_H_HZ = CONST.mu_B / CONST.h


def _check_frequency(f) -> np.ndarray:
    arr = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("frequency must be finite")
    if np.any(arr < 0):
        raise DomainError("frequency must be non-negative")
    return arr


def energy_of_frequency(f):
    """Photon energy ``h f`` in joule. Accepts scalars or arrays."""
    arr = _check_frequency(f)
    out = CONST.h * arr
    return float(out) if out.ndim == 0 else out


def energy_of_frequency_ev(f):
    """Same as :func:`energy_of_frequency` but in eV."""
    arr = _check_frequency(f)
    out = CONST.h * arr / CONST.e
    return float(out) if out.ndim == 0 else out


def frequency_of_energy(E):
    """Inverse of :func:`energy_of_frequency` (joule in, Hz out)."""
    arr = np.asarray(E, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("energy must be finite")
    out = arr / CONST.h
    return float(out) if out.ndim == 0 else out


def energy_resolution(linewidth_hz: float) -> dict[str, float]:
    """Energy resolution of a line of full width ``linewidth_hz``.

    Both readings are reported because a quoted "linewidth" can mean the
    full or the half width at half maximum.
    """
    fwhm_ev = energy_of_frequency_ev(linewidth_hz)
    return {
        "linewidth_hz": float(linewidth_hz),
        "fwhm_neV": fwhm_ev * 1e9,
        "hwhm_neV": fwhm_ev * 0.5e9,
    }


@dataclass(frozen=True)
class Spectrum:
    """A sampled ESR trace: RF frequency (Hz) against induced current ΔI (A).

    ``meta`` carries acquisition settings (b_set_t, position, v_dc, i_set,
    v_rf, seed, ...). The arrays are made read-only on construction.
    """

    freqs: np.ndarray
    values: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=float)
        values = np.array(self.values, dtype=float)
        if freqs.ndim != 1 or values.shape != freqs.shape:
            raise DomainError("freqs and values must be 1-D arrays of equal length")
        if len(freqs) < 2:
            raise DomainError("a spectrum needs at least two samples")
        if not np.all(np.isfinite(freqs)) or np.any(freqs < 0):
            raise DomainError("frequencies must be finite and non-negative")
        if np.any(np.diff(freqs) <= 0):
            raise DomainError("frequencies must be strictly increasing")
        freqs.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __len__(self) -> int:
        return len(self.freqs)

    @property
    def step(self) -> float:
        return float(np.median(np.diff(self.freqs)))

    def with_values(self, values, **meta) -> "Spectrum":
        """New spectrum on the same grid with replaced values (and extra meta)."""
        return Spectrum(self.freqs, values, {**self.meta, **meta})


def make_spectrum(freq_range: tuple[float, float], n_points: int, meta=None) -> Spectrum:
    """Zero-valued spectrum on a uniform grid including both endpoints."""
    f_lo, f_hi = (float(v) for v in freq_range)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
        raise DomainError("frequency range must be finite")
    if n_points < 2:
        raise DomainError("n_points must be >= 2")
    if not f_hi > f_lo:
        raise DomainError(f"frequency range must be increasing, got ({f_lo}, {f_hi})")
    freqs = np.linspace(f_lo, f_hi, int(n_points))
    return Spectrum(freqs, np.zeros_like(freqs), meta or {})
