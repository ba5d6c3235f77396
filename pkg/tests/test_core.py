import math
import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from esrstm_lab.core import (CONST, MUB_OVER_H_HZ, DomainError, Spectrum, energy_of_frequency,
                             energy_of_frequency_ev, energy_resolution, frequency_of_energy, make_spectrum)


def test_constants_are_codata_2018():
    assert CONST.h == 6.62607015e-34
    assert CONST.mu_B == 9.2740100783e-24
    assert CONST.e == 1.602176634e-19
    assert CONST.mu_B_over_h == pytest.approx(13.996244936, rel=1e-9)
    assert MUB_OVER_H_HZ == pytest.approx(13.996244936e9, rel=1e-9)


def test_constants_immutable():
    with pytest.raises(dataclasses.FrozenInstanceError):
        CONST.h = 1.0


def test_energy_of_frequency_examples():
    assert energy_of_frequency(0.0) == 0.0
    assert energy_of_frequency_ev(55e6) * 1e9 == pytest.approx(227.46, abs=0.01)
    assert energy_of_frequency_ev(27.5e6) * 1e9 == pytest.approx(113.73, abs=0.01)
    assert energy_of_frequency(1e9) == CONST.h * 1e9


def test_energy_resolution_report():
    r = energy_resolution(55e6)
    assert round(r["fwhm_neV"]) == 227
    assert round(r["hwhm_neV"]) == 114


@pytest.mark.parametrize("bad", [math.nan, math.inf, -1.0])
def test_energy_of_frequency_rejects(bad):
    with pytest.raises(DomainError):
        energy_of_frequency(bad)


@given(st.floats(0, 1e12), st.floats(0, 100))
def test_energy_linear(f, a):
    assert energy_of_frequency(a * f) == pytest.approx(a * energy_of_frequency(f), rel=1e-12, abs=1e-300)


@given(st.floats(1e-3, 1e13))
def test_energy_round_trip(f):
    assert frequency_of_energy(energy_of_frequency(f)) == pytest.approx(f, rel=1e-12)


def test_make_spectrum_grid():
    s = make_spectrum((18.0e9, 19.5e9), 301)
    assert len(s) == 301
    assert s.step == pytest.approx(5e6)
    assert s.freqs[0] == 18.0e9 and s.freqs[-1] == 19.5e9
    assert np.all(s.values == 0)
    two = make_spectrum((18e9, 25e9), 2)
    assert list(two.freqs) == [18e9, 25e9]


@pytest.mark.parametrize("rng,n", [((19e9, 18e9), 10), ((18e9, 19e9), 1), ((18e9, math.inf), 5)])
def test_make_spectrum_rejects(rng, n):
    with pytest.raises(DomainError):
        make_spectrum(rng, n)


def test_spectrum_is_immutable():
    s = make_spectrum((1e9, 2e9), 5, {"seed": 1})
    with pytest.raises(ValueError):
        s.values[0] = 1.0
    with pytest.raises(TypeError):
        s.meta["seed"] = 2
    t = s.with_values(np.ones(5), position="lobe")
    assert s.values[0] == 0 and t.values[0] == 1 and t.meta["position"] == "lobe"


def test_spectrum_validation():
    with pytest.raises(DomainError):
        Spectrum([1.0, 1.0, 2.0], [0, 0, 0])
    with pytest.raises(DomainError):
        Spectrum([1.0, 2.0], [0.0])
    with pytest.raises(DomainError):
        Spectrum([-1.0, 2.0], [0.0, 0.0])
