"""Least-squares fitting: a small Levenberg-Marquardt engine and the model fits built on it."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AnalysisError, DomainError, Spectrum
from .rectify import IVCurve, broadened_didv

log = logging.getLogger(__name__)

LAMBDA0 = 1e-3
LAMBDA_MAX = 1e12
MAX_ITER = 200
RTOL_CHI2 = 1e-10
FD_REL_STEP = 1e-6
FD_ABS_STEP = 1e-8  # parameters are expected in O(1) internal units


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``sigmas`` are 1σ uncertainties, ``sqrt(diag(covariance))``. ``history``
    holds χ² after every accepted step, starting with the initial value.
    """

    params: dict[str, float]
    sigmas: dict[str, float]
    covariance: np.ndarray
    chi2: float
    dof: int
    converged: bool
    n_iter: int
    message: str = ""
    history: list[float] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "sigmas": dict(self.sigmas),
            "covariance": np.asarray(self.covariance).tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
        }


@dataclass(frozen=True)
class PeakGuess:
    f_guess: float
    amplitude_guess: float
    width_guess: float
    snr: float
    baseline: float = 0.0
    noise: float = 0.0


def numeric_jacobian(model, x, p) -> np.ndarray:
    """Central-difference Jacobian of ``model(x, p)`` with respect to ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(len(p)):
        h = max(FD_REL_STEP * abs(p[i]), FD_ABS_STEP)
        up = p.copy()
        dn = p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((np.asarray(model(x, up)) - np.asarray(model(x, dn))) / (2 * h))
    return np.column_stack(cols)


def levenberg_marquardt(model, x, y, p0, sigma=None, names=None, jac=None,
                        max_iter: int = MAX_ITER) -> FitResult:
    """Minimize ``sum(((y - model(x, p)) / sigma)**2)``.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> array`` with ``p`` a 1-D parameter vector.
    sigma : array-like, optional
        Per-point standard deviations; unit weights if omitted.
    jac : callable, optional
        Analytic Jacobian ``jac(x, p)``; central differences otherwise.

    Returns
    -------
    FitResult
        Covariance is ``chi2/dof * inv(J^T W J)`` at the solution.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    n, k = len(y), len(p)
    names = list(names) if names is not None else [f"p{i}" for i in range(k)]
    if n <= k:
        raise DomainError(f"need more data points ({n}) than parameters ({k})")
    sig = np.ones(n) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    if np.any(~(sig > 0)):
        raise DomainError("sigma must be > 0")
    wts = 1.0 / sig**2
    jacobian = jac or (lambda xx, pp: numeric_jacobian(model, xx, pp))

    def chi2_of(pp):
        m = np.asarray(model(x, pp), dtype=float)
        return float(np.sum(wts * (y - m) ** 2)), m

    chi2, m = chi2_of(p)
    if not math.isfinite(chi2):
        raise DomainError("model returned non-finite values at the initial parameters")
    chi2_floor = 1e-28 * float(np.sum(wts * y**2))
    history = [chi2]
    lam = LAMBDA0
    converged = False
    message = "maximum iterations reached"
    it = 0
    J = jacobian(x, p)
    while it < max_iter:
        it += 1
        if chi2 <= chi2_floor:
            converged, message = True, "chi2 at numerical zero"
            break
        A = J.T @ (wts[:, None] * J)
        g = J.T @ (wts * (y - m))
        d = np.diag(A).copy()
        if np.any(d <= 0):
            message = "singular normal matrix"
            break
        try:
            step = np.linalg.solve(A + lam * np.diag(d), g)
        except np.linalg.LinAlgError:
            message = "singular normal matrix"
            break
        trial = p + step
        chi2_new, m_new = chi2_of(trial)
        if math.isfinite(chi2_new) and chi2_new < chi2:
            rel = (chi2 - chi2_new) / chi2
            p, m, chi2 = trial, m_new, chi2_new
            history.append(chi2)
            lam = max(lam / 10, 1e-15)
            J = jacobian(x, p)
            if rel < RTOL_CHI2:
                converged, message = True, "relative chi2 change below tolerance"
                break
        else:
            lam *= 10
            if lam > LAMBDA_MAX:
                converged, message = True, "no further decrease possible"
                break

    dof = n - k
    J = jacobian(x, p)
    A = J.T @ (wts[:, None] * J)
    try:
        if np.linalg.cond(A) > 1e15:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(A) * (chi2 / dof)
        cov = 0.5 * (cov + cov.T)
    except np.linalg.LinAlgError:
        cov = np.full((k, k), np.nan)
        converged = False
        message = "singular normal matrix at solution"
    sig_p = np.sqrt(np.clip(np.diag(cov), 0, None)) if np.all(np.isfinite(cov)) else np.full(k, np.nan)
    return FitResult(
        params=dict(zip(names, map(float, p))),
        sigmas=dict(zip(names, map(float, sig_p))),
        covariance=cov,
        chi2=chi2,
        dof=dof,
        converged=converged,
        n_iter=it,
        message=message,
        history=history,
    )


# --- peak finding -----------------------------------------------------------

def robust_noise(values) -> tuple[float, float]:
    """Median and MAD-based standard deviation."""
    v = np.asarray(values, dtype=float)
    med = float(np.median(v))
    return med, 1.4826 * float(np.median(np.abs(v - med)))


def detect_peak(s: Spectrum, k_mad: float = 5.0) -> PeakGuess | None:
    """Strongest sample above ``median + k_mad * 1.4826 * MAD``, or None."""
    if len(s) < 16:
        raise DomainError("detect_peak needs at least 16 samples")
    f, v = s.freqs, s.values
    base, noise = robust_noise(v)
    i = int(np.argmax(v))
    if not v[i] > base + k_mad * noise:
        return None
    height = v[i] - base
    half = base + 0.5 * height

    def crossing(direction):
        j = i
        while 0 <= j + direction < len(v) and v[j + direction] > half:
            j += direction
        nxt = j + direction
        if not 0 <= nxt < len(v):
            return f[j]
        # linear interpolation between the last point above and the first below
        return f[j] + (f[nxt] - f[j]) * (v[j] - half) / (v[j] - v[nxt])

    width = crossing(1) - crossing(-1)
    width = max(width, s.step)
    snr = height / noise if noise > 0 else math.inf
    return PeakGuess(float(f[i]), float(height), float(width), float(snr), base, noise)


# --- Lorentzian -------------------------------------------------------------

def _lorentz_scaled(x, p):
    A, fr, gam, base = p
    hw2 = (0.5 * gam) ** 2
    return base + A * hw2 / ((x - fr) ** 2 + hw2)


def lorentzian_jacobian(x, p) -> np.ndarray:
    """Analytic derivatives of the Lorentzian with respect to (A, f_r, gamma, baseline)."""
    A, fr, gam, _ = p
    hw2 = (0.5 * gam) ** 2
    dx = x - fr
    den = dx**2 + hw2
    dA = hw2 / den
    dfr = A * hw2 * 2 * dx / den**2
    dgam = A * 0.5 * gam * dx**2 / den**2
    return np.column_stack([dA, dfr, dgam, np.ones_like(x)])


# internal fit units: GHz and pA
_F_UNIT = 1e9
_I_UNIT = 1e-12


def fit_lorentzian(s: Spectrum, guess: PeakGuess | None = None, k_mad: float = 5.0) -> FitResult:
    """Fit ``baseline + A (Γ/2)² / ((f - f_r)² + (Γ/2)²)``; Γ is the FWHM.

    Results are in SI units (A, Hz). Raises :class:`AnalysisError` if no
    peak is detected and no guess is given.
    """
    if guess is None:
        guess = detect_peak(s, k_mad)
        if guess is None:
            raise AnalysisError("no peak detected and no initial guess supplied")
    x = s.freqs / _F_UNIT
    y = s.values / _I_UNIT
    p0 = [guess.amplitude_guess / _I_UNIT, guess.f_guess / _F_UNIT,
          max(guess.width_guess, s.step) / _F_UNIT, guess.baseline / _I_UNIT]
    res = levenberg_marquardt(_lorentz_scaled, x, y, p0, names=["A", "f_r", "gamma", "baseline"])
    units = np.array([_I_UNIT, _F_UNIT, _F_UNIT, _I_UNIT])
    params = {k: v * u for (k, v), u in zip(res.params.items(), units)}
    params["gamma"] = abs(params["gamma"])
    sigmas = {k: v * u for (k, v), u in zip(res.sigmas.items(), units)}
    cov = res.covariance * np.outer(units, units)
    return FitResult(params, sigmas, cov, res.chi2 * _I_UNIT**2, res.dof, res.converged,
                     res.n_iter, res.message, [c * _I_UNIT**2 for c in res.history])


# --- arcsine-broadened step -------------------------------------------------

# internal units: mV and nS
_V_UNIT = 1e-3


def _step_guess(V, g):
    order = np.argsort(V)
    V, g = V[order], g[order]
    q = max(len(V) // 6, 2)
    lo, hi = float(np.median(g[:q])), float(np.median(g[-q:]))
    frac = (g - lo) / (hi - lo) if hi != lo else np.zeros_like(g)

    def level(t):
        idx = np.nonzero(frac >= t)[0]
        return float(V[idx[0]]) if len(idx) else float(V[-1])

    return lo, hi, level


def fit_step(V, didv) -> FitResult:
    """Fit the unbroadened step ``c + G sigmoid((V - V0)/w)`` to an RF-off trace.

    Parameters are returned in SI units under ``background``, ``height``,
    ``V0`` and ``width``.
    """
    V = np.asarray(V, dtype=float)
    g = np.asarray(didv, dtype=float)
    lo, hi, level = _step_guess(V, g)
    scale = max(abs(hi), abs(lo), np.finfo(float).tiny)
    resid_noise = 1.4826 * np.median(np.abs(np.diff(g))) / math.sqrt(2)
    if not abs(hi - lo) > 5 * resid_noise:
        raise AnalysisError("no conductance step found in the RF-off trace")
    v25, v50, v75 = level(0.25), level(0.5), level(0.75)
    w0 = max((v75 - v25) / (2 * math.log(3)), np.min(np.diff(np.sort(V))))
    xs = V / _V_UNIT
    ys = g / scale

    def model(x, p):
        c, G, v0, w = p
        return c + G * 0.5 * (1 + np.tanh(0.5 * (x - v0) / abs(w)))

    p0 = [lo / scale, (hi - lo) / scale, v50 / _V_UNIT, w0 / _V_UNIT]
    res = levenberg_marquardt(model, xs, ys, p0, names=["background", "height", "V0", "width"])
    units = np.array([scale, scale, _V_UNIT, _V_UNIT])
    params = {k: v * u for (k, v), u in zip(res.params.items(), units)}
    params["width"] = abs(params["width"])
    sigmas = {k: v * u for (k, v), u in zip(res.sigmas.items(), units)}
    return FitResult(params, sigmas, res.covariance * np.outer(units, units),
                     res.chi2 * scale**2, res.dof, res.converged, res.n_iter, res.message,
                     [c * scale**2 for c in res.history])


def fit_arcsine_step(V, didv_on, didv_off) -> FitResult:
    """Two-stage fit: step shape from the RF-off trace, then V_RF from the RF-on trace.

    Returns parameters ``V_RF``, ``V0``, ``height``, ``width`` and
    ``background`` (SI units). ``converged`` is the conjunction of both stages.
    """
    V = np.asarray(V, dtype=float)
    on = np.asarray(didv_on, dtype=float)
    off_fit = fit_step(V, didv_off)
    P = off_fit.params
    iv = IVCurve(c=P["background"], G=P["height"], V0=P["V0"], w=P["width"])
    scale = max(abs(P["background"]), abs(P["background"] + P["height"]))

    # 10-90 % rise of the arcsine-broadened step is about 1.90 V_RF
    _, _, level = _step_guess(V, on)
    rise = level(0.9) - level(0.1) - 2 * math.log(9) * iv.w
    guess = max(rise / 1.902, iv.w, 1e-4)

    def model(x, p):
        return broadened_didv(iv, x, abs(p[0]) * _V_UNIT) / scale

    res = levenberg_marquardt(model, V, on / scale, [guess / _V_UNIT], names=["V_RF"])
    v_rf = abs(res.params["V_RF"]) * _V_UNIT
    params = {"V_RF": v_rf, **{k: P[k] for k in ("V0", "height", "width", "background")}}
    sigmas = {"V_RF": res.sigmas["V_RF"] * _V_UNIT,
              **{k: off_fit.sigmas[k] for k in ("V0", "height", "width", "background")}}
    cov = np.zeros((5, 5))
    cov[0, 0] = res.covariance[0, 0] * _V_UNIT**2
    cov[1:, 1:] = off_fit.covariance[np.ix_([2, 1, 3, 0], [2, 1, 3, 0])]
    return FitResult(params, sigmas, cov, res.chi2 * scale**2 + off_fit.chi2,
                     res.dof + off_fit.dof, res.converged and off_fit.converged,
                     res.n_iter + off_fit.n_iter, f"off: {off_fit.message}; on: {res.message}",
                     [c * scale**2 for c in res.history])


# --- straight line ----------------------------------------------------------

def linear_fit_weighted(x, y, sigma=None) -> FitResult:
    """Closed-form (weighted) straight-line fit ``y = slope x + intercept``.

    With ``sigma`` the covariance is the standard ``(X^T W X)^-1`` for
    absolute per-point errors. Without it the points are weighted equally
    and the residual variance ``RSS/(n-2)`` sets the scale (NaN for two
    points).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2 or y.shape != x.shape:
        raise DomainError("need at least two (x, y) pairs of equal length")
    w = np.ones(n) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise DomainError("sigma must be finite and > 0")
    S = w.sum()
    xm = float(np.sum(w * x) / S)
    ym = float(np.sum(w * y) / S)
    sxx = float(np.sum(w * (x - xm) ** 2))
    if np.ptp(x) == 0 or not sxx > 0:
        raise DomainError("degenerate design: all x values identical")
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    chi2 = float(np.sum(w * resid**2))
    cov = np.array([[1.0 / sxx, -xm / sxx], [-xm / sxx, 1.0 / S + xm**2 / sxx]])
    if sigma is None:
        cov = cov * (chi2 / (n - 2) if n > 2 else np.nan)
    sig = np.sqrt(np.diag(cov))
    return FitResult(
        params={"slope": slope, "intercept": intercept},
        sigmas={"slope": float(sig[0]), "intercept": float(sig[1])},
        covariance=cov,
        chi2=chi2,
        dof=n - 2,
        converged=True,
        n_iter=0,
        message="weighted" if sigma is not None else "unweighted",
    )
