"""RF line transmission and the constant-amplitude calibration protocol.

The protocol, step by step:

1. dI/dV of a surface-state step with RF off and on; the arcsine
   broadening of the on-trace gives the junction amplitude V_RF at one
   reference frequency and source power (:func:`estimate_vrf`).
2. A power sweep at the reference frequency fixes the amplitude scale
   ``V_RF = k 10^(P/20)`` (:func:`power_sweep_scale`).
3. A frequency sweep at constant power, read out through the rectified
   current at the step onset, gives the relative transmission
   (:func:`measure_transmission`).
4. The source power schedule that flattens V_RF follows
   (:func:`compensate`) and is checked on an offset grid
   (:func:`verify_flatness`).

:class:`RFBench` plays the instrument: it holds the true line, I-V curve
and coupling constant and produces what the protocol would measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .core import AnalysisError, DomainError
from .fitkit import FitResult, fit_arcsine_step
from .rectify import (IVCurve, arcsine_average, broadened_didv, invert_rectified,
                      rectified_current)

F_REF = 19e9  # Hz
P_REF = -5.0  # dBm
VRF_REF = 0.025  # V at (F_REF, P_REF)
P_SWEEP_CONST = 5.0  # dBm
BAND = (18e9, 25e9)


def db_to_amplitude(p_dbm):
    """sqrt(mW) amplitude factor of a power in dBm."""
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 20.0)


def sweep_grid(band: tuple[float, float], step: float) -> np.ndarray:
    """Uniform grid over ``band`` that contains both endpoints."""
    lo, hi = band
    if not (hi > lo and step > 0):
        raise DomainError("band must be increasing and step > 0")
    n = int(round((hi - lo) / step))
    return np.linspace(lo, hi, max(n, 1) + 1)


@dataclass(frozen=True)
class TransmissionModel:
    """Voltage transmission of the RF line.

    Parametric form (in dB): ``-slope (f - f_start)/GHz + ripple/2 sin(2π (f - f_start)/period + phase)``
    with ``ripple`` the peak-to-peak size. Passing ``table_f``/``table_t``
    switches to linear interpolation of tabulated linear transmission.
    """

    slope_db_per_ghz: float = 1.0
    ripple_db: float = 10.0
    ripple_period: float = 0.7e9
    phase: float = 0.0
    f_start: float = 18e9
    support: tuple[float, float] = (1e9, 40e9)
    table_f: tuple[float, ...] | None = None
    table_t: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.table_f is not None:
            f = np.asarray(self.table_f, dtype=float)
            t = np.asarray(self.table_t, dtype=float)
            if f.shape != t.shape or len(f) < 2:
                raise DomainError("tabulated transmission needs matching arrays of length >= 2")
            if np.any(np.diff(f) <= 0):
                raise DomainError("tabulated frequencies must be strictly increasing")
            if np.any(~(t > 0)):
                raise DomainError("tabulated transmission must be > 0")
            object.__setattr__(self, "support", (float(f[0]), float(f[-1])))
        elif not self.ripple_period > 0:
            raise DomainError("ripple_period must be > 0")

    @classmethod
    def tabulated(cls, freqs, t_linear) -> "TransmissionModel":
        return cls(table_f=tuple(map(float, freqs)), table_t=tuple(map(float, t_linear)))

    @classmethod
    def flat(cls) -> "TransmissionModel":
        return cls(slope_db_per_ghz=0.0, ripple_db=0.0)

    @classmethod
    def random(cls, rng, max_slope=2.0, max_ripple=10.0, period=(0.5e9, 2.0e9)) -> "TransmissionModel":
        """Random parametric line with slope in [0, max_slope] dB/GHz and ripple <= max_ripple dB."""
        return cls(
            slope_db_per_ghz=float(rng.uniform(0, max_slope)),
            ripple_db=float(rng.uniform(0, max_ripple)),
            ripple_period=float(rng.uniform(*period)),
            phase=float(rng.uniform(0, 2 * math.pi)),
        )

    @property
    def is_tabulated(self) -> bool:
        return self.table_f is not None

    def covers(self, band) -> bool:
        return self.support[0] <= band[0] and band[1] <= self.support[1]

    def t_linear(self, f):
        f = np.asarray(f, dtype=float)
        if self.is_tabulated:
            return np.interp(f, self.table_f, self.table_t)
        return 10.0 ** (self.t_db(f) / 20.0)

    def t_db(self, f):
        f = np.asarray(f, dtype=float)
        if self.is_tabulated:
            return 20.0 * np.log10(self.t_linear(f))
        x = f - self.f_start
        return (-self.slope_db_per_ghz * x / 1e9
                + 0.5 * self.ripple_db * np.sin(2 * np.pi * x / self.ripple_period + self.phase))


@dataclass(frozen=True)
class PowerTable:
    freqs: np.ndarray
    power_dbm: np.ndarray
    target_vrf: float
    band: tuple[float, float]
    clipped: np.ndarray = None

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        p = np.asarray(self.power_dbm, dtype=float)
        if f.shape != p.shape or np.any(np.diff(f) <= 0):
            raise DomainError("power table frequencies must be strictly increasing")
        c = np.zeros(f.shape, bool) if self.clipped is None else np.asarray(self.clipped, bool)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "power_dbm", p)
        object.__setattr__(self, "clipped", c)

    def power_at(self, f):
        """Source power at ``f`` by linear interpolation in dBm."""
        f = np.asarray(f, dtype=float)
        if np.any(f < self.freqs[0]) or np.any(f > self.freqs[-1]):
            raise DomainError("frequency outside the power table")
        return np.interp(f, self.freqs, self.power_dbm)

    @property
    def any_clipped(self) -> bool:
        return bool(np.any(self.clipped))


@dataclass
class PowerScale:
    """Amplitude scale ``V_RF = k 10^(P/20)`` at the reference frequency."""

    k: float  # V per sqrt(mW), anchored
    gain: float  # lock-in reading per ampere of rectified current
    k_fit: float  # least-squares k from all sweep points
    powers: np.ndarray
    v_rf: np.ndarray  # amplitudes inferred from each sweep point
    max_rel_dev: float

    def vrf(self, p_dbm):
        return self.k * db_to_amplitude(p_dbm)


@dataclass
class TransmissionMeasurement:
    freqs: np.ndarray
    t_rel: np.ndarray
    v_rf: np.ndarray
    v_lockin: np.ndarray
    flagged: np.ndarray

    def as_model(self) -> TransmissionModel:
        return TransmissionModel.tabulated(self.freqs, self.t_rel)


@dataclass
class CalibrationResult:
    k: float
    vrf_fit: FitResult
    scale: PowerScale
    transmission: TransmissionMeasurement
    power_table: PowerTable
    residual_flatness: float
    verify_freqs: np.ndarray = field(repr=False, default=None)
    verify_vrf: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "v_rf_estimate_v": self.vrf_fit.params["V_RF"],
            "v_rf_sigma_v": self.vrf_fit.sigmas["V_RF"],
            "onset_v": self.vrf_fit.params["V0"],
            "k_v_per_sqrt_mw": self.k,
            "k_fit_v_per_sqrt_mw": self.scale.k_fit,
            "target_vrf_v": self.power_table.target_vrf,
            "band_hz": list(self.power_table.band),
            "residual_flatness": self.residual_flatness,
            "clipped_points": int(np.sum(self.power_table.clipped)),
            "flagged_transmission_points": int(np.sum(self.transmission.flagged)),
        }


# --- protocol steps -----------------------------------------------------------

def estimate_vrf(V, didv_off, didv_on) -> FitResult:
    """V_RF (and step parameters) from RF-off/RF-on dI/dV traces over the onset."""
    return fit_arcsine_step(V, didv_on, didv_off)


def power_sweep_scale(powers, v_lockin, anchor: tuple[float, float], iv: IVCurve,
                      v_dc: float) -> PowerScale:
    """Scale from source power to junction amplitude at the reference frequency.

    ``anchor`` is ``(V_RF_known, P_known)`` from :func:`estimate_vrf`, which
    fixes ``k`` exactly. The lock-in gain is then fitted over all sweep
    points through the rectification curve of ``iv`` at ``v_dc``, and each
    reading is converted back to an amplitude for a consistency check.
    """
    P = np.asarray(powers, dtype=float)
    L = np.asarray(v_lockin, dtype=float)
    if len(P) < 3 or L.shape != P.shape:
        raise DomainError("need at least three (power, lock-in) samples")
    order = np.argsort(P)
    P, L = P[order], L[order]
    if np.any(np.diff(L) <= 0):
        raise AnalysisError("lock-in signal does not grow monotonically with source power")
    v_known, p_known = anchor
    k = v_known / float(db_to_amplitude(p_known))
    model_di = rectified_current(iv, v_dc, k * db_to_amplitude(P))
    gain = float(np.sum(L * model_di) / np.sum(model_di**2))
    v_rf = invert_rectified(iv, v_dc, L / gain)
    a = db_to_amplitude(P)
    k_fit = float(np.sum(v_rf * a) / np.sum(a * a))
    dev = float(np.max(np.abs(v_rf / (k * a) - 1)))
    return PowerScale(k, gain, k_fit, P, v_rf, dev)


def measure_transmission(bench: "RFBench", band=BAND, step: float = 2e6, p_const: float = P_SWEEP_CONST,
                         scale: PowerScale | None = None, iv: IVCurve | None = None,
                         v_dc: float | None = None, smooth: float = 150e6,
                         margin: float = 0.2e9) -> TransmissionMeasurement:
    """Relative transmission over ``band`` from a constant-power frequency sweep.

    Each lock-in reading is turned into a junction amplitude through the
    rectification curve of ``iv``; the smoothed amplitudes are normalized to
    their value at the reference frequency, so ``t_rel`` is 1 there.
    Readings below the bench's noise floor are flagged and interpolated
    over. ``smooth`` is the span of a cubic Savitzky-Golay window in Hz
    (0 disables it). The sweep runs ``margin`` beyond each band edge, where the line
    model allows, so the filter does not extrapolate at the edges; the
    extra points are dropped from the result.
    """
    if not bench.line.covers(band):
        raise DomainError("band outside the transmission model's support")
    iv = iv or bench.iv
    v_dc = iv.V0 if v_dc is None else v_dc
    scale = scale or PowerScale(bench.k_true(), bench.gain, bench.k_true(), np.array([]), np.array([]), 0.0)
    f_band = sweep_grid(band, step)
    sup = bench.line.support
    n_lo = int(max(0.0, min(margin, band[0] - sup[0])) // step)
    n_hi = int(max(0.0, min(margin, sup[1] - band[1])) // step)
    st = f_band[1] - f_band[0]
    f = np.concatenate([band[0] - st * np.arange(n_lo, 0, -1), f_band, band[1] + st * np.arange(1, n_hi + 1)])
    L = bench.lockin(f, np.full_like(f, p_const), v_dc)
    flagged = L <= bench.floor
    if np.all(flagged):
        raise AnalysisError("no transmission point above the noise floor")
    v_rf = np.full_like(f, np.nan)
    v_rf[~flagged] = invert_rectified(iv, v_dc, L[~flagged] / scale.gain)
    if np.any(flagged):
        v_rf[flagged] = np.interp(f[flagged], f[~flagged], v_rf[~flagged])
    t_db = 20 * np.log10(np.maximum(v_rf, 1e-300))
    win = int(round(smooth / step)) | 1 if smooth > 0 else 1
    if win > 3 and len(f) > win:
        t_db = savgol_filter(t_db, win, 3, mode="interp")
    # normalize to the (smoothed) reading at the reference frequency
    f_ref = bench.f_ref if band[0] <= bench.f_ref <= band[1] else f[0]
    t_rel = 10 ** ((t_db - np.interp(f_ref, f, t_db)) / 20)
    keep = slice(n_lo, n_lo + len(f_band))
    return TransmissionMeasurement(f_band, t_rel[keep], v_rf[keep], L[keep], flagged[keep])


def compensate(t_rel: TransmissionModel, k: float, target_vrf: float, band=BAND,
               step: float = 10e6, p_max: float = 20.0) -> PowerTable:
    """Source powers that put ``target_vrf`` at the junction across ``band``.

    ``P(f) = 20 log10(target / (k T_rel(f)))``; points above ``p_max`` are
    clipped to it and flagged.
    """
    f = sweep_grid(band, step)
    t = np.asarray(t_rel.t_linear(f), dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("relative transmission must be positive on the band")
    p = 20 * np.log10(target_vrf / (k * t))
    clipped = p > p_max
    return PowerTable(f, np.minimum(p, p_max), float(target_vrf), tuple(band), clipped)


def verify_flatness(bench: "RFBench", table: PowerTable) -> tuple[float, np.ndarray, np.ndarray]:
    """Max ``|V_RF/target - 1|`` on a grid offset by half a table step.

    Uses the bench's true junction amplitude, independent of the grid the
    table was built on.
    """
    f = table.freqs
    fv = 0.5 * (f[:-1] + f[1:])
    v = bench.junction_vrf(fv, table.power_at(fv))
    return float(np.max(np.abs(v / table.target_vrf - 1))), fv, v


def recompensate(bench: "RFBench", table: PowerTable, scale: PowerScale, iv: IVCurve,
                 v_dc: float) -> PowerTable:
    """Measure V_RF through the rectified current while applying ``table`` and correct it."""
    L = bench.lockin(table.freqs, table.power_dbm, v_dc)
    v = invert_rectified(iv, v_dc, L / scale.gain)
    p = table.power_dbm + 20 * np.log10(table.target_vrf / v)
    return PowerTable(table.freqs, p, table.target_vrf, table.band, table.clipped)


# --- simulated instrument -----------------------------------------------------

@dataclass
class RFBench:
    """Ground truth for the calibration: line, surface-state I-V and coupling.

    ``vrf_ref`` is the true junction amplitude at ``(f_ref, p_ref)``.
    ``rel_noise`` is the relative Gaussian noise on every dI/dV sample and
    lock-in reading; ``floor`` is the smallest lock-in reading that counts
    as signal.
    """

    line: TransmissionModel = field(default_factory=TransmissionModel)
    iv: IVCurve = field(default_factory=IVCurve)
    vrf_ref: float = VRF_REF
    f_ref: float = F_REF
    p_ref: float = P_REF
    gain: float = 1.0
    rel_noise: float = 0.0
    floor: float = 0.0
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def k_true(self) -> float:
        """Junction amplitude per sqrt(mW) at the reference frequency."""
        return self.vrf_ref / float(db_to_amplitude(self.p_ref))

    def junction_vrf(self, f, p_dbm):
        k0 = self.k_true() / float(self.line.t_linear(self.f_ref))
        return k0 * self.line.t_linear(f) * db_to_amplitude(p_dbm)

    def _noisy(self, x):
        x = np.asarray(x, dtype=float)
        if self.rel_noise > 0:
            x = x * (1 + self.rel_noise * self.rng.normal(size=x.shape))
        return x

    def didv_traces(self, V, f=None, p_dbm=None):
        """(RF-off, RF-on) dI/dV traces over bias ``V``."""
        f = self.f_ref if f is None else f
        p_dbm = self.p_ref if p_dbm is None else p_dbm
        a = float(self.junction_vrf(f, p_dbm))
        return self._noisy(self.iv.didv(V)), self._noisy(broadened_didv(self.iv, V, a))

    def lockin(self, f, p_dbm, v_dc):
        """Lock-in readings (mean-difference ΔI times gain) at each (f, P)."""
        a = self.junction_vrf(f, p_dbm)
        di = np.asarray(arcsine_average(self.iv, v_dc, a)) - float(self.iv.current(v_dc))
        return self._noisy(self.gain * di)


def default_bias_grid() -> np.ndarray:
    return np.arange(-0.150, 0.010 + 1e-12, 0.0001)


def calibrate(bench: RFBench, target_vrf: float = 0.005, band=BAND, step: float = 10e6,
              powers=(-15.0, -10.0, -5.0, 0.0, 5.0), p_const: float = P_SWEEP_CONST,
              p_max: float = 20.0, V=None, smooth: float = 150e6,
              sweep_step: float = 2e6) -> CalibrationResult:
    """Run the whole constant-amplitude calibration against ``bench``.

    ``sweep_step`` is the spacing of the transmission sweep, ``step`` that of
    the resulting power table.
    """
    if not bench.line.covers(band):
        raise DomainError("band outside the transmission model's support")
    V = default_bias_grid() if V is None else V
    off, on = bench.didv_traces(V)
    fit = estimate_vrf(V, off, on)
    P = fit.params
    iv_fit = IVCurve(c=P["background"], G=P["height"], V0=P["V0"], w=P["width"])
    v_dc = P["V0"]
    pw = np.asarray(powers, dtype=float)
    L = bench.lockin(np.full_like(pw, bench.f_ref), pw, v_dc)
    scale = power_sweep_scale(pw, L, (P["V_RF"], bench.p_ref), iv_fit, v_dc)
    meas = measure_transmission(bench, band, sweep_step, p_const, scale, iv_fit, v_dc, smooth)
    table = compensate(meas.as_model(), scale.k, target_vrf, band, step, p_max)
    flat, fv, vv = verify_flatness(bench, table)
    return CalibrationResult(scale.k, fit, scale, meas, table, flat, fv, vv)

