"""Command-line front end.

Exit codes: 0 success, 1 soft analysis failure, 2 usage or configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, config_sets_seed, resolve_seed
from .core import AnalysisError, DomainError, NumericError, energy_resolution
from .fitkit import detect_peak, fit_lorentzian, linear_fit_weighted
from .io import (FormatError, atomic_write_text, map_to_csv, power_table_to_csv, read_json, read_map,
                 read_peaks, read_power_table, read_spectrum, read_text, read_transmission_csv, sniff_header,
                 write_json, write_spectrum)
from .pipeline import (CONVENTIONS, roundtrip_experiment, simulate, spatial_scan, spectrum_grid, square_grid,
                       zeeman_analysis, zeeman_from_points)
from .plotting import Series, heatmap, line_plot
from .rfchain import TransmissionModel, calibrate
from .spectrometer import lorentzian

log = logging.getLogger("esrstm_lab")

EXIT_OK, EXIT_SOFT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
FLATNESS_PASS = 0.01


class UsageError(Exception):
    pass


def _load_config(args) -> tuple[RunConfig, int]:
    """Config from --config (or defaults) with the resolved seed applied."""
    if getattr(args, "config", None):
        text = read_text(args.config)
        cfg = RunConfig.from_string(text, base_dir=os.path.dirname(os.path.abspath(args.config)))
        has_seed = config_sets_seed(text)
    else:
        cfg, has_seed = RunConfig(), False
    seed = resolve_seed(getattr(args, "seed", None), cfg, has_seed)
    return cfg.with_seed(seed), seed


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--band must look like f_lo:f_hi in Hz, got {text!r}") from None
    if not hi > lo:
        raise UsageError("--band must be increasing")
    return lo, hi


def _sibling(path: str, ext: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ext


# --- commands ----------------------------------------------------------------

def cmd_simulate_spectrum(args) -> int:
    if not (math.isfinite(args.b_field) and args.b_field >= 0):
        raise UsageError("--b-field is a field magnitude and must be >= 0")
    cfg, _ = _load_config(args)
    s = simulate(cfg, args.b_field, args.position)
    write_spectrum(args.out, s)
    log.info("wrote %d points to %s", len(s), args.out)
    return EXIT_OK


def _line_model(source: str | None, cfg: RunConfig) -> TransmissionModel:
    if not source or source == "default":
        return cfg.transmission_model()
    if source == "flat":
        return TransmissionModel.flat()
    head = sniff_header(read_text(source))
    if head and "frequency_hz" in head:
        f, t = read_transmission_csv(source)
        return TransmissionModel.tabulated(f, t)
    # INI file with a [line] section
    return RunConfig.load(source).transmission_model()


def cmd_calibrate(args) -> int:
    cfg, seed = _load_config(args)
    line = _line_model(args.line, cfg)
    band = _parse_band(args.band) if args.band else cfg.band()
    if not line.covers(band):
        raise UsageError(f"band {band[0]:g}:{band[1]:g} Hz outside the line model support "
                         f"{line.support[0]:g}:{line.support[1]:g}")
    c = cfg.calibration
    target = c.target_vrf_v if args.target_vrf is None else args.target_vrf
    if not target > 0:
        raise UsageError("--target-vrf must be > 0")
    bench = cfg.bench(line)
    if args.noise is not None:
        bench.rel_noise = args.noise
    res = calibrate(bench, target_vrf=target, band=band, step=c.step_hz, powers=c.powers_dbm,
                    p_const=c.p_const_dbm, p_max=c.p_max_dbm, smooth=c.smooth_hz, sweep_step=c.sweep_step_hz)
    meta = {"target_vrf_v": target, "band_hz": f"{band[0]:g}:{band[1]:g}",
            "residual_flatness": f"{res.residual_flatness:.6g}", "seed": seed}
    atomic_write_text(args.out, power_table_to_csv(res.power_table, meta))
    ok = res.residual_flatness <= FLATNESS_PASS and not res.power_table.any_clipped
    report = {
        "params": res.summary(),
        "sigmas": {"v_rf_estimate_v": res.vrf_fit.sigmas["V_RF"]},
        "converged": bool(res.vrf_fit.converged),
        "pass": ok,
        "flatness_limit": FLATNESS_PASS,
        "verification": {"frequency_hz": res.verify_freqs, "v_rf_v": res.verify_vrf},
        "conventions": dict(CONVENTIONS),
        "config": {**cfg.to_dict(), "line_source": args.line or "config", "noise": bench.rel_noise},
    }
    write_json(_sibling(args.out, ".json"), report)
    if res.power_table.any_clipped:
        log.warning("%d table rows clipped at %g dBm", int(res.power_table.clipped.sum()), c.p_max_dbm)
    log.info("flatness %.4f%%", 100 * res.residual_flatness)
    return EXIT_OK if ok else EXIT_SOFT


def cmd_fit_peak(args) -> int:
    s = read_spectrum(args.spectrum)
    out = {"input": os.path.abspath(args.spectrum), "conventions": dict(CONVENTIONS),
           "config": {"k_mad": args.k_mad, "spectrum_meta": dict(s.meta)}}
    guess = detect_peak(s, args.k_mad)
    if guess is None:
        out.update({"params": {}, "sigmas": {}, "converged": False, "detected": False,
                    "message": "no peak detected"})
        write_json(args.out, out)
        return EXIT_SOFT
    fit = fit_lorentzian(s, guess)
    out.update({"params": fit.params, "sigmas": fit.sigmas, "converged": fit.converged, "detected": True,
                "chi2": fit.chi2, "dof": fit.dof, "n_iter": fit.n_iter, "message": fit.message,
                "snr": guess.snr, "energy_resolution": energy_resolution(fit["gamma"])})
    write_json(args.out, out)
    return EXIT_OK if fit.converged else EXIT_SOFT


def cmd_zeeman_fit(args) -> int:
    spectra, B, f, sig = [], [], [], []
    for path in args.inputs:
        head = sniff_header(read_text(path)) or []
        if "b_set_t" in head:
            b, fr, sf = read_peaks(path)
            B += list(b)
            f += list(fr)
            sig += list(sf)
        else:
            spectra.append(read_spectrum(path))
    out = {"inputs": [os.path.abspath(p) for p in args.inputs], "conventions": dict(CONVENTIONS),
           "config": {"k_mad": args.k_mad}}
    try:
        if spectra and B:
            raise UsageError("mix of spectra and peak tables; pass one kind")
        zr = zeeman_analysis(spectra, args.k_mad) if spectra else zeeman_from_points(B, f, sig)
    except AnalysisError as exc:
        out.update({"params": {}, "sigmas": {}, "converged": False, "message": str(exc)})
        write_json(args.out, out)
        log.error("%s", exc)
        return EXIT_SOFT
    out.update(zr.to_dict())
    out["conventions"]["zeeman_fit"] = "weighted by per-peak sigma(f_r)" if zr.weighted else "unweighted"
    write_json(args.out, out)
    return EXIT_OK


def cmd_spatial_map(args) -> int:
    cfg, seed = _load_config(args)
    B = cfg.run.spatial_field_t if args.b_field is None else args.b_field
    if not (math.isfinite(B) and B >= 0):
        raise UsageError("--b-field is a field magnitude and must be >= 0")
    mol = cfg.molecule_map()
    n = cfg.run.scan_n if args.n is None else args.n
    if n < 1:
        raise UsageError("--n must be >= 1")
    grid = square_grid(mol, cfg.run.scan_half_width_nm, n)
    pts = spatial_scan(grid, B, cfg.spin_config(), cfg.junction_config(), mol, cfg.noise_model(),
                       spectrum_grid(cfg, B), cfg.f0_closed_form(), cfg.spin.temperature_k, cfg.run.k_mad)
    meta = {"b_set_t": B, "seed": seed, "n": n, "half_width_nm": cfg.run.scan_half_width_nm}
    atomic_write_text(args.out, map_to_csv(pts, meta))
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    cfg, seed = _load_config(args)
    rep = roundtrip_experiment(cfg, seed)
    write_json(args.out, rep.to_dict())
    for name, chk in rep.checks.items():
        log.info("%-22s %s", name, "pass" if chk["pass"] else "FAIL")
    for stage, err in rep.errors.items():
        log.error("stage %s: %s", stage, err)
    return EXIT_OK if rep.passed else EXIT_SOFT


def _plot_csv(path: str) -> str:
    head = sniff_header(read_text(path)) or []
    name = os.path.basename(path)
    if "delta_i_a" in head:
        s = read_spectrum(path)
        series = [Series(s.freqs, s.values, "points", "data")]
        guess = detect_peak(s) if len(s) >= 16 else None
        if guess is not None:
            fit = fit_lorentzian(s, guess)
            ff = np.linspace(s.freqs[0], s.freqs[-1], 600)
            p = fit.params
            series.append(Series(ff, lorentzian(ff, p["A"], p["f_r"], p["gamma"], p["baseline"]), "line",
                                 f"Lorentzian, FWHM {p['gamma'] / 1e6:.1f} MHz"))
        return line_plot(series, "frequency (GHz)", "ΔI (pA)", name, 1e9, 1e-12)
    if "power_dbm" in head:
        f, p, _ = read_power_table(path)
        return line_plot([Series(f, p, "line", "source power")], "frequency (GHz)", "P (dBm)", name, 1e9)
    if "t_linear" in head:
        f, t = read_transmission_csv(path)
        return line_plot([Series(f, 20 * np.log10(t), "line", "transmission")], "frequency (GHz)", "T (dB)",
                         name, 1e9)
    if "b_set_t" in head:
        B, fr, sf = read_peaks(path)
        return _zeeman_svg(B, fr, sf, name)
    if "amplitude_a" in head:
        m = read_map(path)
        return heatmap(m["x_nm"], m["y_nm"], m["amplitude_a"] / 1e-12, title=name, zlabel="A (pA)")
    raise FormatError(f"{path}:1: unrecognized CSV header")


def _zeeman_svg(B, fr, sf, title, fit=None) -> str:
    B, fr = np.asarray(B, dtype=float), np.asarray(fr, dtype=float)
    series = [Series(B, fr, "points", "peaks")]
    if fit is None and len(np.unique(B)) >= 2:
        lf = linear_fit_weighted(B, fr)
        fit = (lf["slope"], lf["intercept"])
    if fit is not None:
        bb = np.linspace(0.0, max(B.max(), 1e-3), 50)
        series.append(Series(bb, fit[0] * bb + fit[1], "line", "linear fit"))
    return line_plot(series, "B (T)", "f (GHz)", title, 1.0, 1e9)


def _plot_json(path: str) -> str:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}:1: expected a JSON object")
    name = os.path.basename(path)
    zee = doc.get("stages", {}).get("zeeman") if "stages" in doc else doc
    if isinstance(zee, dict) and zee.get("peaks"):
        from .core import MUB_OVER_H_HZ

        rows = zee["peaks"]
        B = [r["b_set"] for r in rows]
        fr = [r["f_r"] for r in rows]
        p = zee["params"]
        return _zeeman_svg(B, fr, None, name, (p["g"] * MUB_OVER_H_HZ, p["f0_hz"]))
    if "input" in doc and os.path.exists(doc["input"]):
        return _plot_csv(doc["input"])
    raise FormatError(f"{path}:1: JSON is neither a fit-peak, zeeman-fit nor roundtrip report")


def cmd_plot(args) -> int:
    svg = _plot_json(args.data) if args.data.lower().endswith(".json") else _plot_csv(args.data)
    atomic_write_text(args.out, svg)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esrstm-lab", description="ESR-STM simulation and analysis toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("simulate-spectrum", help="synthesize one ESR spectrum")
    a.add_argument("--config")
    a.add_argument("--b-field", type=float, required=True, help="commanded field magnitude (T)")
    a.add_argument("--position", default="lobe0", help="center, lobe, lobeK, between or x,y in nm")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_simulate_spectrum)

    a = sub.add_parser("calibrate", help="constant-amplitude RF power table")
    a.add_argument("--config")
    a.add_argument("--line", help="line model: default, flat, a transmission CSV or an INI with [line]")
    a.add_argument("--target-vrf", type=float)
    a.add_argument("--band", help="f_lo:f_hi in Hz")
    a.add_argument("--noise", type=float, help="relative bench noise (overrides config)")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_calibrate)

    a = sub.add_parser("fit-peak", help="Lorentzian fit of a spectrum CSV")
    a.add_argument("spectrum")
    a.add_argument("--k-mad", type=float, default=5.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_fit_peak)

    a = sub.add_parser("zeeman-fit", help="g and f0 from spectra or peak tables")
    a.add_argument("inputs", nargs="+")
    a.add_argument("--k-mad", type=float, default=5.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_zeeman_fit)

    a = sub.add_parser("spatial-map", help="peak amplitude over a square grid")
    a.add_argument("--config")
    a.add_argument("--b-field", type=float)
    a.add_argument("--n", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_spatial_map)

    a = sub.add_parser("roundtrip", help="seeded end-to-end experiment report")
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_roundtrip)

    a = sub.add_parser("plot", help="SVG of a CSV or JSON output")
    a.add_argument("data")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:  # FormatError is a DomainError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AnalysisError, NumericError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_SOFT


if __name__ == "__main__":
    sys.exit(main())
