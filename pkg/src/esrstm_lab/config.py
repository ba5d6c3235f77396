"""Run configuration: an INI document with one section per domain object.

Every key has a default, so an empty file is a valid configuration. The
parsed object converts back to INI text (the config echo written into every
report) and to the library's dataclasses.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field, fields

from .core import MUB_OVER_H_HZ, DomainError
from .rectify import IVCurve
from .rfchain import RFBench, TransmissionModel
from .spectrometer import Bloch, JunctionConfig, MoleculeMap, NoiseModel, Phenomenological
from .spinham import SpinSystemConfig, f0_from_exchange

SEED_ENV = "ESRSTM_LAB_SEED"
DEFAULT_SEED = 42


@dataclass
class SpinSection:
    g_s: float = 1.84
    g_j: float = 1.5
    j_ex_ghz: float = -0.3  # E/h; negative is ferromagnetic
    a_ghz: float = 1000.0
    exchange_form: str = "ising"
    mode: str = "projected"
    resonance: str = "spin_model"  # or closed_form
    temperature_k: float = 0.4


@dataclass
class JunctionSection:
    i_set_a: float = 10e-12
    v_dc_v: float = -0.100
    v_rf_v: float = 0.010
    eta: float = 1.0
    b_tip_t: float = 0.020
    delta_b_hyst_t: float = 0.0
    lineshape: str = "phenomenological"  # or bloch
    a_peak_a: float = 0.3e-12
    gamma_hz: float = 55e6
    omega_rad_s: float = 1e8
    t1_s: float = 1e-7
    t2_s: float = 1e-8
    baseline_a: float = 0.0


@dataclass
class MoleculeSection:
    center_x_nm: float = 0.0
    center_y_nm: float = 0.0
    r0_nm: float = 0.45
    w_nm: float = 0.1
    n_lobes: int = 8
    depth: float = 0.5
    angle_rad: float = 0.0


@dataclass
class NoiseSection:
    sigma_a: float = 0.03e-12


@dataclass
class LineSection:
    slope_db_per_ghz: float = 1.0
    ripple_db: float = 10.0
    ripple_period_hz: float = 0.7e9
    phase_rad: float = 0.0
    f_start_hz: float = 18e9
    support_lo_hz: float = 1e9
    support_hi_hz: float = 40e9
    table: str = ""  # optional CSV frequency_hz,t_linear; overrides the parametric form


@dataclass
class GridSection:
    f_lo_hz: float = 18.0e9
    f_hi_hz: float = 19.5e9
    n_points: int = 301
    ref_field_t: float = 0.650
    track_field: bool = True  # shift the window with g_s (mu_B/h) (B_set - ref_field_t)


@dataclass
class CalibrationSection:
    target_vrf_v: float = 0.005
    band_lo_hz: float = 18e9
    band_hi_hz: float = 25e9
    step_hz: float = 10e6
    sweep_step_hz: float = 2e6
    smooth_hz: float = 150e6
    p_const_dbm: float = 5.0
    p_max_dbm: float = 20.0
    powers_dbm: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0)
    rel_noise: float = 0.0  # relative noise on every bench reading
    vrf_ref_v: float = 0.025
    p_ref_dbm: float = -5.0
    f_ref_hz: float = 19e9
    lockin_gain: float = 1.0
    iv_c_s: float = 1e-9
    iv_g_s: float = 1e-9
    iv_v0_v: float = -0.070
    iv_w_v: float = 0.005


@dataclass
class EnvelopeSection:
    g: float = 1.84
    g_tol: float = 0.12
    f0_hz: float = 1.8e9
    f0_tol_hz: float = 1.0e9
    gamma_hz: float = 55e6
    gamma_tol_hz: float = 5e6
    flatness_max: float = 0.01
    vrf_rel_tol: float = 0.005


@dataclass
class RunSection:
    seed: int = DEFAULT_SEED
    fields_t: tuple = (0.650, 0.750, 0.800)
    positions: tuple = ("lobe0", "lobe1", "between", "center")
    scan_half_width_nm: float = 0.7
    scan_n: int = 15
    spatial_field_t: float = 0.650
    k_mad: float = 5.0


_SECTIONS = {
    "spin": SpinSection,
    "junction": JunctionSection,
    "molecule": MoleculeSection,
    "noise": NoiseSection,
    "line": LineSection,
    "grid": GridSection,
    "calibration": CalibrationSection,
    "envelopes": EnvelopeSection,
    "run": RunSection,
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
    except ValueError:
        raise DomainError(f"{where}: cannot parse {raw!r}") from None
    return raw


@dataclass
class RunConfig:
    spin: SpinSection = field(default_factory=SpinSection)
    junction: JunctionSection = field(default_factory=JunctionSection)
    molecule: MoleculeSection = field(default_factory=MoleculeSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    line: LineSection = field(default_factory=LineSection)
    grid: GridSection = field(default_factory=GridSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    envelopes: EnvelopeSection = field(default_factory=EnvelopeSection)
    run: RunSection = field(default_factory=RunSection)
    base_dir: str = field(default=".", compare=False, repr=False)

    # --- text round trip --------------------------------------------------

    @classmethod
    def from_string(cls, text: str, base_dir: str = ".") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise DomainError(f"config syntax: {exc}") from None
        cfg = cls(base_dir=base_dir)
        for name in cp.sections():
            if name not in _SECTIONS:
                raise DomainError(f"unknown config section [{name}]")
            sec = getattr(cfg, name)
            known = {f.name: f for f in fields(sec)}
            for key, raw in cp.items(name):
                if key not in known:
                    raise DomainError(f"unknown key {key!r} in [{name}]")
                setattr(sec, key, _parse(raw, getattr(sec, key), f"[{name}] {key}"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_string(text, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_string(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in _SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def with_seed(self, seed: int) -> "RunConfig":
        new = dataclasses.replace(self, run=dataclasses.replace(self.run, seed=int(seed)))
        return new

    def validate(self) -> None:
        """Build every domain object once so bad values fail at load time."""
        self.spin_config()
        self.junction_config()
        self.molecule_map()
        self.noise_model()
        if self.spin.resonance not in ("spin_model", "closed_form"):
            raise DomainError(f"unknown resonance mode {self.spin.resonance!r}")
        if self.grid.n_points < 2 or not self.grid.f_hi_hz > self.grid.f_lo_hz:
            raise DomainError("grid needs n_points >= 2 and f_hi_hz > f_lo_hz")
        if not self.line.table:
            self.transmission_model()
        if len(self.run.fields_t) < 1 or any(b < 0 for b in self.run.fields_t):
            raise DomainError("run.fields_t must list non-negative fields")

    # --- domain objects ---------------------------------------------------

    def spin_config(self) -> SpinSystemConfig:
        s = self.spin
        return SpinSystemConfig.from_ghz(s.j_ex_ghz, s.a_ghz, g_S=s.g_s, g_J=s.g_j,
                                         exchange_form=s.exchange_form, mode=s.mode)

    def f0_closed_form(self) -> float | None:
        """Intercept for closed-form resonances, None when the spin model is used."""
        if self.spin.resonance != "closed_form":
            return None
        return f0_from_exchange(self.spin_config().J_ex)

    def junction_config(self) -> JunctionConfig:
        j = self.junction
        if j.lineshape == "phenomenological":
            ls = Phenomenological(A_peak=j.a_peak_a, gamma=j.gamma_hz)
        elif j.lineshape == "bloch":
            ls = Bloch(omega=j.omega_rad_s, T1=j.t1_s, T2=j.t2_s, A_peak=j.a_peak_a)
        else:
            raise DomainError(f"unknown lineshape {j.lineshape!r}")
        return JunctionConfig(I_set=j.i_set_a, V_DC=j.v_dc_v, V_RF=j.v_rf_v, eta=j.eta, B_tip=j.b_tip_t,
                              delta_B_hyst=j.delta_b_hyst_t, lineshape=ls, baseline=j.baseline_a)

    def molecule_map(self) -> MoleculeMap:
        m = self.molecule
        return MoleculeMap(center=(m.center_x_nm, m.center_y_nm), r0=m.r0_nm, w=m.w_nm,
                           n_lobes=m.n_lobes, depth=m.depth, angle=m.angle_rad)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(sigma=self.noise.sigma_a, seed=self.run.seed)

    def transmission_model(self) -> TransmissionModel:
        ln = self.line
        if ln.table:
            from .io import read_transmission_csv

            path = ln.table if os.path.isabs(ln.table) else os.path.join(self.base_dir, ln.table)
            f, t = read_transmission_csv(path)
            return TransmissionModel.tabulated(f, t)
        return TransmissionModel(slope_db_per_ghz=ln.slope_db_per_ghz, ripple_db=ln.ripple_db,
                                 ripple_period=ln.ripple_period_hz, phase=ln.phase_rad,
                                 f_start=ln.f_start_hz, support=(ln.support_lo_hz, ln.support_hi_hz))

    def iv_curve(self) -> IVCurve:
        c = self.calibration
        return IVCurve(c=c.iv_c_s, G=c.iv_g_s, V0=c.iv_v0_v, w=c.iv_w_v)

    def bench(self, line: TransmissionModel | None = None) -> RFBench:
        c = self.calibration
        return RFBench(line=line or self.transmission_model(), iv=self.iv_curve(), vrf_ref=c.vrf_ref_v,
                       f_ref=c.f_ref_hz, p_ref=c.p_ref_dbm, gain=c.lockin_gain, rel_noise=c.rel_noise,
                       seed=self.run.seed)

    def band(self) -> tuple[float, float]:
        return (self.calibration.band_lo_hz, self.calibration.band_hi_hz)

    def freq_window(self, B_set: float) -> tuple[float, float]:
        """Sweep window for a commanded field; tracks the nominal Zeeman slope."""
        g = self.grid
        shift = self.spin.g_s * MUB_OVER_H_HZ * (B_set - g.ref_field_t) if g.track_field else 0.0
        return (g.f_lo_hz + shift, g.f_hi_hz + shift)


def resolve_seed(cli_seed: int | None, cfg: RunConfig | None, cfg_has_seed: bool) -> int:
    """--seed, then an explicit config value, then $ESRSTM_LAB_SEED, then the default."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg is not None and cfg_has_seed:
        return int(cfg.run.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def config_sets_seed(text: str) -> bool:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error:
        return False
    return cp.has_option("run", "seed")
