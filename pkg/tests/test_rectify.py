import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from esrstm_lab.core import DomainError, NumericError
from esrstm_lab.rectify import (IVCurve, arcsine_average, arcsine_mean, broadened_didv, invert_rectified,
                                kernel_moments, rectified_current)

SMOOTH = IVCurve()
HARD = IVCurve(w=0.0)
OHMIC = IVCurve(G=0.0)


def quad_convolution(iv, V, a):
    """Independent oracle: arcsine-weighted integral via QUADPACK's algebraic weight."""
    val, _ = quad(lambda v: float(iv.didv(V + v)), -a, a, weight="alg", wvar=(-0.5, -0.5),
                  epsabs=0, epsrel=1e-12, limit=400)
    return val / math.pi


def test_ohmic_average_is_unchanged():
    for V, a in [(-0.1, 0.025), (0.0, 0.3)]:
        assert arcsine_average(OHMIC, V, a) == pytest.approx(float(OHMIC.current(V)), rel=1e-12)


def test_zero_amplitude_is_exact():
    assert arcsine_average(SMOOTH, -0.07, 0.0) == pytest.approx(float(SMOOTH.current(-0.07)), rel=1e-12)
    assert broadened_didv(SMOOTH, -0.05, 0.0) == pytest.approx(float(SMOOTH.didv(-0.05)), rel=1e-12)
    assert broadened_didv(HARD, -0.05, 0.0) == float(HARD.didv(-0.05))


def test_hard_step_at_onset_is_half():
    for a in (0.001, 0.025, 0.2):
        assert broadened_didv(HARD, HARD.V0, a) == pytest.approx(HARD.c + 0.5 * HARD.G, rel=1e-12)
        # time-averaged current gains G a/pi from the rectified half cycle
        assert arcsine_average(HARD, HARD.V0, a) == pytest.approx(float(HARD.current(HARD.V0)) + HARD.G * a / math.pi)


def test_hard_step_plateaus_at_kernel_edge():
    a = 0.025
    assert broadened_didv(HARD, HARD.V0 + a, a) == pytest.approx(HARD.c + HARD.G, rel=0.01)
    assert broadened_didv(HARD, HARD.V0 - a, a) == pytest.approx(HARD.c, rel=0.01)
    for V in (HARD.V0 - 0.9 * a, HARD.V0 + 0.3 * a):
        assert broadened_didv(HARD, V, a) == pytest.approx(quad_convolution(HARD, V, a), rel=1e-8)


@pytest.mark.parametrize("V", [-0.12, -0.09, -0.075, -0.07, -0.06, -0.03, 0.0])
@pytest.mark.parametrize("a", [0.002, 0.010, 0.025])
def test_broadened_didv_matches_quad(V, a):
    assert broadened_didv(SMOOTH, V, a) == pytest.approx(quad_convolution(SMOOTH, V, a), rel=1e-9)


@given(st.floats(-0.15, 0.01), st.floats(0.001, 0.05))
def test_derivative_cross_check(V, a):
    h = 1e-5
    fd = (arcsine_average(SMOOTH, V + h, a) - arcsine_average(SMOOTH, V - h, a)) / (2 * h)
    assert fd == pytest.approx(broadened_didv(SMOOTH, V, a), rel=1e-6)


def test_kernel_moments():
    for a in (0.001, 0.025, 1.0):
        m, v = kernel_moments(a)
        assert abs(m) <= 1e-15 * a
        assert v == pytest.approx(a * a / 2, rel=1e-8)


def test_broadcasting():
    V = np.linspace(-0.1, -0.04, 7)
    a = np.array([0.0, 0.01, 0.025])[:, None]
    out = broadened_didv(SMOOTH, V, a)
    assert out.shape == (3, 7)
    assert np.allclose(out[2], [broadened_didv(SMOOTH, v, 0.025) for v in V], rtol=1e-12)


def test_domain_and_numeric_errors():
    with pytest.raises(DomainError):
        arcsine_average(SMOOTH, 0.0, -0.01)
    with pytest.raises(DomainError):
        IVCurve(w=-1.0)
    with pytest.raises(NumericError):
        arcsine_mean(lambda v: np.sign(v - 0.3), 0.0, 1.0, n_max=64)


def test_iv_curve_shape():
    V = np.linspace(-0.2, 0.1, 301)
    assert np.all(np.diff(SMOOTH.current(V)) >= 0)
    assert SMOOTH.didv(-0.2) == pytest.approx(SMOOTH.c, rel=1e-6)
    assert SMOOTH.didv(0.1) == pytest.approx(SMOOTH.c + SMOOTH.G, rel=1e-6)


def test_invert_rectified_round_trip():
    a = np.array([0.0, 0.001, 0.005, 0.025, 0.2])
    di = rectified_current(SMOOTH, SMOOTH.V0, a)
    back = invert_rectified(SMOOTH, SMOOTH.V0, di)
    assert np.allclose(back[1:], a[1:], rtol=1e-10)
    assert back[0] < 1e-8  # zero amplitude only up to the rounding floor of the current
    assert invert_rectified(SMOOTH, SMOOTH.V0, -1e-12) == 0.0
    with pytest.raises(DomainError):
        invert_rectified(SMOOTH, SMOOTH.V0, 1.0)
