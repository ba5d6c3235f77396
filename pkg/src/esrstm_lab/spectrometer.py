"""Synthetic ESR-STM spectra.

A resonance of the radical shows up as a Lorentzian bump in the RF-induced
tunnel current ΔI. Its height scales with the tip polarization and with the
radical spin density under the tip; its position follows the spin model at
the effective field ``B_set + delta_B_hyst + B_tip``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .core import DomainError, Spectrum
from .spinham import SpinSystemConfig, esr_lines, zeeman_line

F_MOD = 431.0  # Hz, RF chopping frequency of the lock-in scheme
HYSTERESIS_BOUND = 0.010  # T


@dataclass(frozen=True)
class Phenomenological:
    A_peak: float = 0.3e-12  # A
    gamma: float = 55e6  # Hz, FWHM
    kind: Literal["phenomenological"] = field(default="phenomenological", init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be > 0")


@dataclass(frozen=True)
class Bloch:
    """Continuous-wave Bloch steady state; ``omega`` is the Rabi rate in rad/s."""

    omega: float
    T1: float
    T2: float
    A_peak: float = 0.3e-12
    kind: Literal["bloch"] = field(default="bloch", init=False)

    def __post_init__(self):
        if not (self.omega > 0 and self.T1 > 0 and self.T2 > 0):
            raise DomainError("omega, T1, T2 must be > 0")


@dataclass(frozen=True)
class JunctionConfig:
    I_set: float = 10e-12
    V_DC: float = -0.100
    V_RF: float = 0.010
    eta: float = 1.0
    B_tip: float = 0.020
    delta_B_hyst: float = 0.0
    lineshape: Phenomenological | Bloch = field(default_factory=Phenomenological)
    baseline: float = 0.0

    def __post_init__(self):
        if not abs(self.eta) <= 1:
            raise DomainError("|eta| must be <= 1")
        if not abs(self.delta_B_hyst) <= HYSTERESIS_BOUND + 1e-15:
            raise DomainError(f"|delta_B_hyst| must be <= {HYSTERESIS_BOUND} T")
        if not math.isfinite(self.B_tip):
            raise DomainError("B_tip must be finite")

    def peak(self) -> tuple[float, float]:
        """Amplitude (A) and FWHM (Hz) of the lineshape at unit weight."""
        ls = self.lineshape
        if isinstance(ls, Bloch):
            bp = bloch_peak(ls.omega, ls.T1, ls.T2)
            return ls.A_peak * bp["saturation"], bp["gamma"]
        return ls.A_peak, ls.gamma


@dataclass(frozen=True)
class MoleculeMap:
    """Ring-shaped radical density with eight lobes, lengths in nm."""

    center: tuple[float, float] = (0.0, 0.0)
    r0: float = 0.45
    w: float = 0.1
    n_lobes: int = 8
    depth: float = 0.5
    angle: float = 0.0  # rad, azimuth of the first lobe

    def __post_init__(self):
        if not (self.r0 >= 0 and self.w > 0):
            raise DomainError("r0 must be >= 0 and w > 0")
        if not 0 <= self.depth <= 1:
            raise DomainError("modulation depth must lie in [0, 1]")

    def lobe(self, k: int = 0) -> tuple[float, float]:
        """Position of lobe ``k`` on the ring."""
        th = self.angle + 2 * math.pi * k / self.n_lobes
        return (self.center[0] + self.r0 * math.cos(th), self.center[1] + self.r0 * math.sin(th))

    def resolve(self, pos) -> tuple[float, float]:
        """Turn a label (``center``, ``lobe``, ``lobeK``, ``between``) or ``(x, y)`` into nm."""
        if isinstance(pos, str):
            label = pos.strip().lower()
            if label == "center":
                return tuple(self.center)
            if label == "between":
                th = self.angle + math.pi / self.n_lobes
                return (self.center[0] + self.r0 * math.cos(th), self.center[1] + self.r0 * math.sin(th))
            if label.startswith("lobe"):
                rest = label[4:]
                if rest and not rest.isdigit():
                    raise DomainError(f"unknown position {pos!r}")
                return self.lobe(int(rest) if rest else 0)
            try:
                x, y = (float(v) for v in label.split(","))
            except ValueError:
                raise DomainError(f"unknown position {pos!r}") from None
            return (x, y)
        x, y = pos
        return (float(x), float(y))


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.03e-12  # A
    seed: int = 42

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError("sigma must be >= 0")


def lorentzian(f, A, f_r, gamma, baseline=0.0):
    """``baseline + A (gamma/2)^2 / ((f - f_r)^2 + (gamma/2)^2)``; gamma is the FWHM."""
    if not gamma > 0:
        raise DomainError("gamma must be > 0")
    hw2 = (0.5 * gamma) ** 2
    return baseline + A * hw2 / ((np.asarray(f, dtype=float) - f_r) ** 2 + hw2)


def bloch_peak(omega: float, T1: float, T2: float) -> dict[str, float]:
    """Steady-state saturation and power-broadened FWHM (Hz) on resonance."""
    if not (omega > 0 and T1 > 0 and T2 > 0):
        raise DomainError("omega, T1, T2 must be > 0")
    x = omega**2 * T1 * T2
    return {"saturation": x / (1 + x), "gamma": math.sqrt(1 + x) / (math.pi * T2)}


def radical_density(pos, mol: MoleculeMap) -> float:
    """Relative π-radical spin density at ``pos`` (nm), peak value 1 on a lobe."""
    x, y = mol.resolve(pos)
    dx, dy = x - mol.center[0], y - mol.center[1]
    r = math.hypot(dx, dy)
    theta = math.atan2(dy, dx) - mol.angle
    ring = math.exp(-((r - mol.r0) ** 2) / (2 * mol.w**2))
    ang = 1 - mol.depth + mol.depth * math.cos(mol.n_lobes / 2 * theta) ** 2
    return min(max(ring * ang, 0.0), 1.0)


def derive_seed(seed: int, B_set: float, pos: tuple[float, float]) -> np.random.SeedSequence:
    """Per-spectrum random stream keyed by (seed, field, position).

    Order of generation does not matter, so spectra may be synthesized
    concurrently.
    """
    key = [int(round(B_set * 1e9)), int(round(pos[0] * 1e6)), int(round(pos[1] * 1e6))]
    # SeedSequence wants non-negative words
    key = [2 * k if k >= 0 else -2 * k - 1 for k in key]
    return np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key)


def resonances(spin: SpinSystemConfig, B_eff: float, f0: float | None = None,
               temperature: float | None = 0.4) -> list[tuple[float, float]]:
    """(frequency, relative weight) of the lines seen at field ``B_eff``.

    With ``f0`` the closed-form Zeeman line ``g_S (mu_B/h) B + f0`` is used;
    otherwise the spin model is diagonalized and lines are weighted by
    ``intensity/0.25`` times the thermal occupation of their Tb sector.
    """
    if f0 is not None:
        return [(zeeman_line(spin.g_S, f0, B_eff), 1.0)]
    out = []
    for ln in esr_lines(spin, B_eff, temperature=temperature):
        w = ln.intensity / 0.25 * ln.weight
        if w > 1e-6:
            out.append((ln.freq, w))
    return out


def synthesize_spectrum(
    spin: SpinSystemConfig,
    junction: JunctionConfig,
    mol: MoleculeMap,
    pos,
    B_set: float,
    freqs,
    noise: NoiseModel,
    f0: float | None = None,
    temperature: float | None = 0.4,
) -> Spectrum:
    """Simulate one ESR-STM sweep over ``freqs`` (Hz) at commanded field ``B_set``.

    ``f0`` selects the closed-form line (intercept in Hz). Leave it ``None``
    to take line positions from the spin Hamiltonian.
    """
    if not math.isfinite(B_set):
        raise DomainError("B_set must be finite")
    xy = mol.resolve(pos)
    freqs = np.asarray(freqs, dtype=float)
    B_eff = B_set + junction.delta_B_hyst + junction.B_tip
    amp, gamma = junction.peak()
    rho = radical_density(xy, mol)
    values = np.full_like(freqs, junction.baseline)
    for f_r, w in resonances(spin, B_eff, f0, temperature):
        A = amp * junction.eta * rho * w
        if A != 0.0:
            values = values + lorentzian(freqs, A, f_r, gamma)
    if noise.sigma > 0:
        rng = np.random.default_rng(derive_seed(noise.seed, B_set, xy))
        values = values + rng.normal(0.0, noise.sigma, size=freqs.shape)
    meta = {
        "b_set_t": float(B_set),
        "b_eff_t": float(B_eff),
        "position": pos if isinstance(pos, str) else f"{xy[0]:g},{xy[1]:g}",
        "x_nm": xy[0],
        "y_nm": xy[1],
        "v_dc": junction.V_DC,
        "i_set": junction.I_set,
        "v_rf": junction.V_RF,
        "eta": junction.eta,
        "b_tip_t": junction.B_tip,
        "delta_b_hyst_t": junction.delta_B_hyst,
        "noise_sigma_a": noise.sigma,
        "seed": int(noise.seed),
        "resonance": "closed_form" if f0 is not None else "spin_model",
        "f_mod_hz": F_MOD,
    }
    return Spectrum(freqs, values, meta)


def lockin_output(I_on, I_off) -> float:
    """ΔI from RF-on and RF-off current samples (mean difference)."""
    on = np.asarray(I_on, dtype=float)
    off = np.asarray(I_off, dtype=float)
    if on.shape != off.shape or on.size < 1:
        raise DomainError("on/off traces must be non-empty and of equal length")
    return float(on.mean() - off.mean())


def chopped_current(delta_i: float, n_samples: int, sigma: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Current samples in the RF-on and RF-off halves of the chopping cycle."""
    off = rng.normal(0.0, sigma, n_samples)
    on = delta_i + rng.normal(0.0, sigma, n_samples)
    return on, off


def junction_to_dict(j: JunctionConfig) -> dict:
    d = asdict(j)
    d["lineshape"] = {"kind": j.lineshape.kind, **{k: v for k, v in asdict(j.lineshape).items() if k != "kind"}}
    return d
