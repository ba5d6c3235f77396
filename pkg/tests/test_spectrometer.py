import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from esrstm_lab.core import MUB_OVER_H_HZ, DomainError
from esrstm_lab.fitkit import detect_peak, fit_lorentzian
from esrstm_lab.spectrometer import (Bloch, JunctionConfig, MoleculeMap, NoiseModel, bloch_peak, chopped_current,
                                     derive_seed, lockin_output, lorentzian, radical_density, synthesize_spectrum)
from esrstm_lab.spinham import SpinSystemConfig

FREQS = np.linspace(18.0e9, 19.5e9, 301)
SPIN = SpinSystemConfig()
MOL = MoleculeMap()


def junction(**kw):
    kw.setdefault("B_tip", 0.0)
    return JunctionConfig(**kw)


def test_lorentzian_examples():
    assert lorentzian(18.6e9, 0.3e-12, 18.6e9, 55e6) == pytest.approx(0.3e-12)
    assert lorentzian(18.6e9 + 27.5e6, 0.3e-12, 18.6e9, 55e6, 1e-14) == pytest.approx(1e-14 + 0.15e-12)
    assert lorentzian(18.6e9 - 27.5e6, 1.0, 18.6e9, 55e6) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        lorentzian(1.0, 1.0, 1.0, 0.0)


def test_bloch_peak_examples():
    lo = bloch_peak(1e-3, 1e-6, 1e-7)
    assert lo["saturation"] == pytest.approx(1e-19, rel=1e-6)
    assert lo["gamma"] == pytest.approx(1 / (math.pi * 1e-7))
    one = bloch_peak(1e7, 1e-7, 1e-7)
    assert one["saturation"] == pytest.approx(0.5)
    assert one["gamma"] == pytest.approx(math.sqrt(2) / (math.pi * 1e-7))
    assert bloch_peak(math.sqrt(3) * 1e7, 1e-7, 1e-7)["saturation"] == pytest.approx(0.75)
    with pytest.raises(DomainError):
        bloch_peak(0.0, 1.0, 1.0)


def _bloch_rhs(omega, T1, T2, delta):
    def rhs(t, m):
        mx, my, mz = m
        return [delta * my - mx / T2, -delta * mx + omega * mz - my / T2, -omega * my - (mz - 1.0) / T1]
    return rhs


@pytest.mark.parametrize("x", [0.3, 1.0, 3.0, 10.0])
def test_bloch_against_rate_equations(x):
    T1, T2 = 2e-7, 1e-7
    omega = math.sqrt(x / (T1 * T2))
    sol = solve_ivp(_bloch_rhs(omega, T1, T2, 0.0), (0, 60 * T1), [0, 0, 1], rtol=1e-10, atol=1e-12,
                    method="LSODA")
    sat = 1 - sol.y[2, -1]
    ref = bloch_peak(omega, T1, T2)
    assert sat == pytest.approx(ref["saturation"], rel=1e-6)

    # steady-state absorption (My) against detuning; FWHM from the linear steady state
    def my(delta):
        A = np.array([[-1 / T2, delta, 0], [-delta, -1 / T2, omega], [0, -omega, -1 / T1]])
        return np.linalg.solve(A, [0, 0, -1 / T1])[1]

    half = 0.5 * my(0.0)
    d_half = brentq(lambda d: my(d) - half, 0, 100 / T2)
    fwhm_hz = 2 * d_half / (2 * math.pi)
    assert fwhm_hz == pytest.approx(ref["gamma"], rel=1e-8)


def test_radical_density_examples():
    assert radical_density("center", MOL) == pytest.approx(math.exp(-10.125), rel=1e-12)
    assert radical_density("center", MOL) <= 4.1e-5
    assert radical_density("lobe", MOL) == pytest.approx(1.0)
    assert radical_density("between", MoleculeMap(depth=1.0)) == pytest.approx(0.0, abs=1e-15)
    grid = [(x, y) for x in np.linspace(-1, 1, 21) for y in np.linspace(-1, 1, 21)]
    vals = [radical_density(p, MOL) for p in grid]
    assert min(vals) >= 0 and max(vals) <= 1
    with pytest.raises(DomainError):
        MoleculeMap(depth=1.5)
    with pytest.raises(DomainError):
        MOL.resolve("nowhere")
    with pytest.raises(DomainError):
        MOL.resolve("lobeX")


def test_center_density_bound_whenever_ring_is_wide():
    # a ring at least ~3.1 widths out leaves the center below 1%
    for r0, w in [(0.32, 0.1), (0.45, 0.14), (1.0, 0.2)]:
        m = MoleculeMap(r0=r0, w=w)
        assert radical_density("center", m) <= 0.01


def test_junction_validation():
    with pytest.raises(DomainError):
        JunctionConfig(eta=1.5)
    with pytest.raises(DomainError):
        JunctionConfig(delta_B_hyst=0.011)
    JunctionConfig(delta_B_hyst=-0.010)
    amp, gam = JunctionConfig(lineshape=Bloch(1e7, 1e-7, 1e-7)).peak()
    assert amp == pytest.approx(0.15e-12) and gam == pytest.approx(math.sqrt(2) / (math.pi * 1e-7))


def test_synthesize_peak_position():
    s = synthesize_spectrum(SPIN, junction(), MOL, "lobe", 0.650, FREQS, NoiseModel(0.0), f0=1.8e9)
    assert s.freqs[np.argmax(s.values)] == pytest.approx(18.54e9, abs=2.5e6)
    fit = fit_lorentzian(s)
    assert fit["f_r"] == pytest.approx(1.84 * MUB_OVER_H_HZ * 0.650 + 1.8e9, rel=1e-9)
    assert s.meta["b_set_t"] == 0.650 and s.meta["seed"] == 42 and s.meta["position"] == "lobe"
    spin_model = synthesize_spectrum(SPIN, junction(), MOL, "lobe", 0.650, FREQS, NoiseModel(0.0))
    assert np.allclose(spin_model.values, s.values, rtol=1e-6, atol=1e-20)


def test_synthesize_eta_zero_is_noise_only():
    s = synthesize_spectrum(SPIN, junction(eta=0.0), MOL, "lobe", 0.650, FREQS, NoiseModel(0.03e-12, 5))
    noise = synthesize_spectrum(SPIN, junction(eta=0.0), MOL, "center", 0.650, FREQS, NoiseModel(0.03e-12, 5))
    assert detect_peak(s) is None
    assert np.std(s.values) == pytest.approx(0.03e-12, rel=0.15)
    assert not np.array_equal(s.values, noise.values)  # position enters the seed


def test_synthesize_center_contrast():
    lobe = synthesize_spectrum(SPIN, junction(), MOL, "lobe", 0.650, FREQS, NoiseModel(0.0))
    center = synthesize_spectrum(SPIN, junction(), MOL, "center", 0.650, FREQS, NoiseModel(0.0))
    assert center.values.max() <= 0.01 * lobe.values.max()
    assert lobe.values.max() / center.values.max() >= 100


def test_determinism_and_order_independence():
    noise = NoiseModel(0.03e-12, 99)
    a = [synthesize_spectrum(SPIN, junction(), MOL, "lobe", B, FREQS, noise) for B in (0.65, 0.75)]
    b = [synthesize_spectrum(SPIN, junction(), MOL, "lobe", B, FREQS, noise) for B in (0.75, 0.65)][::-1]
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)
    assert derive_seed(1, 0.65, (0.1, -0.2)).entropy == 1


def test_tip_field_equivalence():
    a = synthesize_spectrum(SPIN, JunctionConfig(B_tip=0.020), MOL, "lobe", 0.650, FREQS, NoiseModel(0.0))
    b = synthesize_spectrum(SPIN, JunctionConfig(B_tip=0.0), MOL, "lobe", 0.670, FREQS, NoiseModel(0.0))
    assert np.array_equal(a.values, b.values)


def test_field_shift_moves_peak():
    d = 0.050
    f1 = fit_lorentzian(synthesize_spectrum(SPIN, junction(), MOL, "lobe", 0.650, FREQS + 0.0, NoiseModel()))
    grid2 = FREQS + 1.84 * MUB_OVER_H_HZ * d
    f2 = fit_lorentzian(synthesize_spectrum(SPIN, junction(), MOL, "lobe", 0.700, grid2, NoiseModel()))
    shift = f2["f_r"] - f1["f_r"]
    err = math.hypot(f1.sigmas["f_r"], f2.sigmas["f_r"])
    assert abs(shift - 1.84 * MUB_OVER_H_HZ * d) <= 3 * err


def test_amplitude_linear_in_eta():
    amps = {}
    for eta in (0.25, 0.5, 1.0):
        s = synthesize_spectrum(SPIN, junction(eta=eta), MOL, "lobe", 0.650, FREQS, NoiseModel(0.0))
        amps[eta] = fit_lorentzian(s)["A"]
    for eta in (0.25, 0.5):
        assert amps[eta] / amps[1.0] == pytest.approx(eta, rel=0.01)


def test_lockin_output():
    rng = np.random.default_rng(3)
    off = rng.normal(size=100)
    assert lockin_output(off, off) == 0.0
    assert lockin_output(off + 0.3e-12, off) == pytest.approx(0.3e-12)
    with pytest.raises(DomainError):
        lockin_output([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        lockin_output([], [])


def test_lockin_clt_bound():
    sigma, n, truth = 1e-12, 10_000, 0.3e-12
    for seed in range(20):
        on, off = chopped_current(truth, n, sigma, np.random.default_rng(seed))
        assert abs(lockin_output(on, off) - truth) <= 3 * sigma / 100 * math.sqrt(2)
