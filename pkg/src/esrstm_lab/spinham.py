"""Radical (S = 1/2) coupled to a Tb ion (J = 6): operators, Hamiltonian, lines.

The magnetic field is out of plane (along z), so every matrix here is real
symmetric in the product basis ``|m_S> (x) |m_J>`` with ``m`` running from
``+j`` down to ``-j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .core import CONST, MUB_OVER_H_HZ, DomainError, NumericError

S_RADICAL = 0.5
J_TB = 6


def _check_j(j) -> float:
    twoj = 2 * float(j)
    if not math.isfinite(twoj) or twoj < 0 or abs(twoj - round(twoj)) > 1e-12:
        raise DomainError(f"j must be a non-negative integer or half-integer, got {j!r}")
    return round(twoj) / 2


def m_values(j) -> np.ndarray:
    """Magnetic quantum numbers in basis order ``j, j-1, ..., -j``."""
    j = _check_j(j)
    return j - np.arange(int(round(2 * j)) + 1)


def ladder_matrices(j) -> dict[str, np.ndarray]:
    """Jz, J+, J-, Jx for spin ``j`` (real, dimension 2j+1).

    Jy is imaginary in this basis and is not returned; use
    :func:`jy_squared` where its square is needed.
    """
    m = m_values(j)
    jj = _check_j(j)
    jz = np.diag(m)
    # J+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>; |m+1> sits one row above |m>
    jplus = np.diag(np.sqrt(jj * (jj + 1) - m[1:] * (m[1:] + 1)), k=1)
    jminus = jplus.T.copy()
    jx = 0.5 * (jplus + jminus)
    return {"Jz": jz, "Jplus": jplus, "Jminus": jminus, "Jx": jx}


def jy_squared(ops: dict[str, np.ndarray]) -> np.ndarray:
    """Jy^2 = -(J+ - J-)^2 / 4, which is real."""
    d = ops["Jplus"] - ops["Jminus"]
    return -0.25 * d @ d


@dataclass(frozen=True)
class SpinSystemConfig:
    """Parameters of the radical-Tb spin model.

    Energies (``J_ex``, ``A``) are in joule. ``J_ex < 0`` is ferromagnetic.
    ``A`` is the coefficient of ``-|A| Jz^2`` on the Tb ion.
    """

    g_S: float = 1.84
    g_J: float = 1.5
    J_ex: float = -0.3e9 * CONST.h
    A: float = 1000e9 * CONST.h
    exchange_form: Literal["ising", "heisenberg"] = "ising"
    mode: Literal["full", "projected"] = "projected"
    S: float = field(default=S_RADICAL, init=False)
    J: int = field(default=J_TB, init=False)

    def __post_init__(self):
        for name in ("g_S", "g_J", "J_ex", "A"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.exchange_form not in ("ising", "heisenberg"):
            raise DomainError(f"unknown exchange_form {self.exchange_form!r}")
        if self.mode not in ("full", "projected"):
            raise DomainError(f"unknown mode {self.mode!r}")

    @property
    def dim(self) -> int:
        return 4 if self.mode == "projected" else 2 * (2 * self.J + 1)

    def replace(self, **changes) -> "SpinSystemConfig":
        return replace(self, **changes)

    @classmethod
    def from_ghz(cls, J_ex_ghz=-0.3, A_ghz=1000.0, **kw) -> "SpinSystemConfig":
        """Build a config with exchange and anisotropy given as E/h in GHz."""
        return cls(J_ex=J_ex_ghz * 1e9 * CONST.h, A=A_ghz * 1e9 * CONST.h, **kw)


def _tb_operators(cfg: SpinSystemConfig) -> dict[str, np.ndarray]:
    ops = ladder_matrices(cfg.J)
    if cfg.mode == "full":
        return ops
    # keep only m_J = +J and -J (first and last basis states)
    keep = [0, 2 * cfg.J]
    return {k: v[np.ix_(keep, keep)] for k, v in ops.items()}


def tb_m_values(cfg: SpinSystemConfig) -> np.ndarray:
    m = m_values(cfg.J)
    return m if cfg.mode == "full" else m[[0, -1]]


def product_operators(cfg: SpinSystemConfig) -> dict[str, np.ndarray]:
    """Radical and Tb operators embedded in the product space."""
    s = ladder_matrices(cfg.S)
    t = _tb_operators(cfg)
    i_s = np.eye(2)
    i_t = np.eye(t["Jz"].shape[0])
    return {
        "Sz": np.kron(s["Jz"], i_t),
        "Sx": np.kron(s["Jx"], i_t),
        "Splus": np.kron(s["Jplus"], i_t),
        "Sminus": np.kron(s["Jminus"], i_t),
        "Jz": np.kron(i_s, t["Jz"]),
        "Jplus": np.kron(i_s, t["Jplus"]),
        "Jminus": np.kron(i_s, t["Jminus"]),
    }


def build_hamiltonian(cfg: SpinSystemConfig, B: float) -> np.ndarray:
    """Spin Hamiltonian in joule for an out-of-plane field ``B`` (tesla).

    H = mu_B B (g_S Sz + g_J Jz) + J_ex (Sz Jz [+ (S+J- + S-J+)/2]) - |A| Jz^2
    """
    if not math.isfinite(B):
        raise DomainError("B must be finite")
    op = product_operators(cfg)
    mu_b = CONST.mu_B
    H = mu_b * B * (cfg.g_S * op["Sz"] + cfg.g_J * op["Jz"])
    H = H + cfg.J_ex * (op["Sz"] @ op["Jz"])
    if cfg.exchange_form == "heisenberg":
        H = H + 0.5 * cfg.J_ex * (op["Splus"] @ op["Jminus"] + op["Sminus"] @ op["Jplus"])
    H = H - abs(cfg.A) * (op["Jz"] @ op["Jz"])
    return 0.5 * (H + H.T)


def eigh(M, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    as columns. Uses threshold sweeps: during the first three sweeps only
    off-diagonal entries above a per-sweep threshold are rotated away.

    Raises
    ------
    DomainError
        If ``M`` is not square and symmetric within 1e-12 of its max entry.
    NumericError
        If the off-diagonal norm does not vanish within ``max_sweeps``.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix must be finite")
    n = A.shape[0]
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale > 0 and np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise DomainError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n <= 1 or scale == 0:
        return np.diag(A).copy(), V

    tiny = np.finfo(float).eps
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= 1e-2 * tiny * scale:
            break
        thresh = 0.2 * off / n**2 if sweep < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= thresh:
                    continue
                # after four sweeps, entries below roundoff of the matrix scale are dropped
                if apq == 0.0 or (sweep > 3 and abs(apq) < 1e-3 * tiny * scale):
                    A[p, q] = A[q, p] = 0.0
                    continue
                app, aqq = A[p, p], A[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rotate columns then rows p, q
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off > 1e-12 * scale:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3e})")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True)
class EsrLine:
    freq: float  # Hz
    intensity: float  # |<a|Sx|b>|^2
    sector: float  # Tb <Jz> of the lower level
    levels: tuple[int, int]
    weight: float = 1.0  # thermal occupation of the pair, filled by esr_lines(temperature=...)


def esr_lines(
    cfg: SpinSystemConfig,
    B: float,
    intensity_floor: float = 1e-6,
    temperature: float | None = None,
) -> list[EsrLine]:
    """Radical-driven transitions (matrix element of Sx (x) 1) sorted by frequency.

    Every eigenpair with squared matrix element above ``intensity_floor`` and
    a positive splitting is returned. With ``temperature`` (kelvin) each line
    carries the Boltzmann occupation of its two levels in ``weight``.
    """
    if not 0 < intensity_floor < 0.25:
        raise DomainError("intensity_floor must lie in (0, 0.25)")
    H = build_hamiltonian(cfg, B)
    E, V = eigh(H)
    op = product_operators(cfg)
    sx = V.T @ op["Sx"] @ V
    jz = np.einsum("ik,ij,jk->k", V, op["Jz"], V)
    if temperature is not None and temperature > 0:
        x = -(E - E[0]) / (CONST.k_B * temperature)
        pop = np.exp(x)
        pop /= pop.sum()
    else:
        pop = None
    # splittings below this are treated as degenerate (no line)
    e_tol = 1e-9 * max(np.max(np.abs(E)), CONST.h * 1e3)
    lines = []
    n = len(E)
    for a in range(n):
        for b in range(a + 1, n):
            inten = sx[a, b] ** 2
            dE = E[b] - E[a]
            if inten <= intensity_floor or dE <= e_tol:
                continue
            w = 1.0 if pop is None else float(pop[a] + pop[b])
            lines.append(EsrLine(dE / CONST.h, float(inten), float(jz[a]), (a, b), w))
    lines.sort(key=lambda ln: ln.freq)
    return lines


def zeeman_line(g: float, f0: float, B):
    """Resonance frequency ``g (mu_B/h) B + f0`` in Hz (``f0`` in Hz, ``B`` in T)."""
    B_arr = np.asarray(B, dtype=float)
    if np.any(B_arr < 0):
        raise DomainError("B must be >= 0")
    out = g * MUB_OVER_H_HZ * B_arr + f0
    return float(out) if out.ndim == 0 else out


def f0_from_exchange(J_ex: float, mJ: int = J_TB) -> float:
    """Zero-field shift |J_ex| * |mJ| / h of the radical line in the frozen Tb doublet."""
    if not math.isfinite(J_ex):
        raise DomainError("J_ex must be finite")
    return abs(J_ex) * abs(mJ) / CONST.h


def exchange_from_f0(f0: float, mJ: int = J_TB) -> float:
    """Exchange magnitude in joule from a zero-field intercept in Hz; inverse of f0_from_exchange."""
    if not math.isfinite(f0) or f0 < 0:
        raise DomainError("f0 must be finite and >= 0")
    return f0 * CONST.h / abs(mJ)
