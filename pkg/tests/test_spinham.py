import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from esrstm_lab.core import CONST, MUB_OVER_H_HZ, DomainError, NumericError
from esrstm_lab.spinham import (SpinSystemConfig, build_hamiltonian, eigh, esr_lines, exchange_from_f0,
                                f0_from_exchange, jy_squared, ladder_matrices, m_values, zeeman_line)

J_VALUES = [0.5, 1, 1.5, 2, 2.5, 6]


def test_ladder_examples():
    half = ladder_matrices(0.5)
    assert np.array_equal(half["Jz"], np.diag([0.5, -0.5]))
    one = ladder_matrices(1)
    assert np.allclose(np.diag(one["Jplus"], 1), [math.sqrt(2), math.sqrt(2)])
    six = ladder_matrices(6)
    assert six["Jz"].shape == (13, 13)
    assert list(np.diag(six["Jz"])) == list(range(6, -7, -1))
    assert np.trace(six["Jz"] @ six["Jz"]) == 182


@pytest.mark.parametrize("j", [-0.5, 0.3, math.nan])
def test_ladder_rejects(j):
    with pytest.raises(DomainError):
        ladder_matrices(j)


@pytest.mark.parametrize("j", J_VALUES)
def test_commutators(j):
    o = ladder_matrices(j)
    jz, jp, jm = o["Jz"], o["Jplus"], o["Jminus"]
    assert np.max(np.abs(jz @ jp - jp @ jz - jp)) <= 1e-12
    assert np.max(np.abs(jz @ jm - jm @ jz + jm)) <= 1e-12
    assert np.max(np.abs(jp @ jm - jm @ jp - 2 * jz)) <= 1e-12


@pytest.mark.parametrize("j", J_VALUES)
def test_casimir(j):
    o = ladder_matrices(j)
    c = o["Jx"] @ o["Jx"] + jy_squared(o) + o["Jz"] @ o["Jz"]
    assert np.max(np.abs(c - j * (j + 1) * np.eye(len(m_values(j))))) <= 1e-10


def test_config_dimensions():
    assert SpinSystemConfig(mode="full").dim == 26
    assert SpinSystemConfig().dim == 4
    assert build_hamiltonian(SpinSystemConfig(mode="full"), 0.5).shape == (26, 26)
    with pytest.raises(DomainError):
        SpinSystemConfig(mode="half")
    with pytest.raises(DomainError):
        SpinSystemConfig(exchange_form="dipolar")


def test_hamiltonian_examples():
    zero = SpinSystemConfig(J_ex=0.0, A=0.0, mode="full")
    assert np.all(build_hamiltonian(zero, 0.0) == 0)
    H = build_hamiltonian(SpinSystemConfig(mode="full"), 0.7)
    assert np.array_equal(H, np.diag(np.diag(H)))
    cfg = SpinSystemConfig(g_S=2.0, g_J=0.0, J_ex=0.0, A=0.0, mode="full")
    e = eigh(build_hamiltonian(cfg, 1.0))[0] / CONST.h
    assert np.allclose(e[:13], e[0]) and np.allclose(e[13:], e[-1])
    assert e[0] == pytest.approx(-0.5 * 2.0 * MUB_OVER_H_HZ)
    assert (e[-1] - e[0]) / 1e9 == pytest.approx(27.99249, abs=1e-5)


def test_eigh_examples():
    w, V = eigh(np.eye(5))
    assert np.all(w == 1)
    w, V = eigh(np.diag([3.0, 1.0, 2.0]))
    assert list(w) == [1, 2, 3]
    assert np.array_equal(np.abs(V), np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], float))


def test_eigh_random_26():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(26, 26))
    M = a + a.T
    w, V = eigh(M)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(V @ np.diag(w) @ V.T - M)) <= 1e-10 * np.max(np.abs(M))
    assert np.max(np.abs(V.T @ V - np.eye(26))) <= 1e-10
    assert np.allclose(w, np.linalg.eigvalsh(M), atol=1e-10)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
def test_eigh_property(n, seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) * scale
    M = 0.5 * (a + a.T)
    w, V = eigh(M)
    norm = np.max(np.abs(M))
    for k in range(n):
        assert np.linalg.norm(M @ V[:, k] - w[k] * V[:, k]) <= 1e-10 * norm * n
    assert np.max(np.abs(V.T @ V - np.eye(n))) <= 1e-10


def test_eigh_degenerate_and_hamiltonian():
    M = np.ones((6, 6))
    w, V = eigh(M)
    assert np.allclose(w, [0, 0, 0, 0, 0, 6], atol=1e-12)
    H = build_hamiltonian(SpinSystemConfig(exchange_form="heisenberg", mode="full"), 0.65)
    w, V = eigh(H)
    assert np.allclose(w, np.linalg.eigvalsh(H), rtol=0, atol=1e-10 * np.max(np.abs(H)))


def test_eigh_errors():
    with pytest.raises(DomainError):
        eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DomainError):
        eigh(np.zeros((2, 3)))
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 8))
    with pytest.raises(NumericError):
        eigh(a + a.T, max_sweeps=1)


def test_esr_lines_examples():
    free = SpinSystemConfig(J_ex=0.0, A=1000e9 * CONST.h, g_S=1.84)
    freqs = {round(ln.freq / 1e6, 1) for ln in esr_lines(free, 0.650)}
    assert freqs == {16739.5}
    assert esr_lines(SpinSystemConfig(J_ex=0.0), 0.0) == []
    cfg = SpinSystemConfig()
    lines = esr_lines(cfg, 0.650)
    fz = 1.84 * MUB_OVER_H_HZ * 0.650
    shift = 6 * abs(cfg.J_ex) / CONST.h
    assert len(lines) == 2
    got = sorted(ln.freq for ln in lines)
    assert got[0] == pytest.approx(fz - shift, rel=1e-9)
    assert got[1] == pytest.approx(fz + shift, rel=1e-9)
    assert {round(ln.sector) for ln in lines} == {6, -6}
    for ln in lines:
        assert 0 <= ln.intensity <= 0.25 + 1e-12
    # full mode: every Tb sector carries a line; the m_J = +-6 pair matches the projected model
    full = esr_lines(SpinSystemConfig(mode="full"), 0.650)
    assert len(full) == 13
    edge = sorted(ln.freq for ln in full if abs(abs(ln.sector) - 6) < 1e-9)
    assert np.allclose(edge, got, rtol=1e-12)
    with pytest.raises(DomainError):
        esr_lines(cfg, 0.65, intensity_floor=0.3)


def test_esr_lines_thermal_weight_selects_ground_sector():
    lines = esr_lines(SpinSystemConfig(), 0.67, temperature=0.4)
    strong = max(lines, key=lambda ln: ln.weight)
    assert round(strong.sector) == -6  # ferromagnetic exchange, Tb moment along -z
    assert strong.freq == pytest.approx(zeeman_line(1.84, 1.8e9, 0.67), rel=1e-9)
    assert sum(ln.weight for ln in lines if ln is not strong) < 1e-6


def test_projected_matches_full():
    for form in ("ising", "heisenberg"):
        A = 13.6e12 * CONST.h if form == "heisenberg" else 1000e9 * CONST.h
        full = esr_lines(SpinSystemConfig(exchange_form=form, mode="full", A=A), 0.650)
        proj = esr_lines(SpinSystemConfig(exchange_form=form, A=A), 0.650)
        ff = np.array([ln.freq for ln in full])
        for ln in proj:
            assert np.min(np.abs(ff - ln.freq)) / ln.freq <= 1e-6


def test_heisenberg_perturbative_limit():
    B = 0.65
    J_ex = -1e-3 * 1.84 * CONST.mu_B * B
    cfg = SpinSystemConfig(J_ex=J_ex, exchange_form="heisenberg", mode="full")
    shift = 6 * abs(J_ex) / CONST.h
    fz = 1.84 * MUB_OVER_H_HZ * B
    lines = [ln.freq for ln in esr_lines(cfg, B) if abs(abs(ln.sector) - 6) < 1e-3]
    assert len(lines) == 2
    assert min(abs(f - (fz - shift)) for f in lines) <= 0.01 * shift
    assert min(abs(f - (fz + shift)) for f in lines) <= 0.01 * shift


def test_zeeman_line_examples():
    assert zeeman_line(1.84, 1.8e9, 0.650) == pytest.approx(18.5395089e9, abs=1e3)
    assert zeeman_line(1.84, 1.8e9, 0.0) == 1.8e9
    assert zeeman_line(2.00, 26.4e9, 0.650) == pytest.approx(44.5951e9, abs=1e5)
    with pytest.raises(DomainError):
        zeeman_line(1.84, 0.0, -0.1)


@given(st.floats(0.5, 3.0), st.floats(0, 5e10), st.floats(0, 10), st.floats(1e-3, 1.0))
def test_zeeman_slope(g, f0, B, d):
    slope = (zeeman_line(g, f0, B + d) - zeeman_line(g, f0, B)) / d
    assert slope == pytest.approx(g * MUB_OVER_H_HZ, rel=1e-6)


def test_exchange_mapping():
    J = exchange_from_f0(1.8e9)
    assert J / CONST.h == pytest.approx(0.3e9)
    assert J / CONST.e * 1e6 == pytest.approx(1.2407, abs=1e-4)
    assert f0_from_exchange(0.0) == 0.0
    assert exchange_from_f0(26.4e9) / CONST.h == pytest.approx(4.4e9)
    assert f0_from_exchange(exchange_from_f0(1.8e9)) == pytest.approx(1.8e9, rel=1e-15)
    assert f0_from_exchange(-0.3e9 * CONST.h) == pytest.approx(1.8e9)
    with pytest.raises(DomainError):
        exchange_from_f0(-1.0)
