"""Command-line entry point: ``multimode-opo <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import cavity_report, degeneracy_scan
from .config import REFERENCE_CONFIG, ConfigError, ExperimentConfig, config_hash, load_config, resolved_toml
from .coupling import ConvergenceError, mode_count
from .homodyne import estimate_noise_power, simulate_trace
from .output import write_csv
from .reproduce import reproduce
from .squeezing import squeezing_spectrum, to_decibels
from .workflow import lo_seed, lo_waist, operating_point, project_lo, solve

log = logging.getLogger("multimode_opo")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_REPRODUCTION = 3


class ReproductionFailure(Exception):
    pass


def _say(args, text: str):
    if not args.quiet:
        print(text)


def _db(v):
    return to_decibels(v) if np.isfinite(v) else float("inf")


def run_design(cfg: ExperimentConfig, out: Path, digest: str, args) -> None:
    geom = cfg.cavity_geometry()
    base = cavity_report(geom, cfg.design.max_order)
    d = cfg.design
    reports = degeneracy_scan(
        geom,
        np.linspace(d.dL1_min, d.dL1_max, d.dL1_points),
        np.linspace(d.dL2_min, d.dL2_max, d.dL2_points),
        d.max_order,
    )
    rows = []
    for rep in reports:
        for q, offset in rep.order_detunings.items():
            rows.append((rep.dL1, rep.dL2, rep.stable, rep.round_trip_gouy, q, offset, rep.co_resonant(q)))
    write_csv(out / "design_scan.csv", ("dL1_m", "dL2_m", "stable", "gouy_rad", "order", "offset_hz", "co_resonant"),
              rows, digest)
    summary = [
        ("L1_m", geom.L1),
        ("L2_m", geom.L2),
        ("total_length_m", geom.L1 + geom.L2),
        ("optical_length_m", geom.optical_length),
        ("free_spectral_range_hz", base.free_spectral_range),
        ("finesse", base.finesse),
        ("bandwidth_fwhm_hz", base.bandwidth_fwhm),
        ("escape_efficiency", base.escape_efficiency),
        ("round_trip_gouy_rad", base.round_trip_gouy),
    ]
    write_csv(out / "design_summary.csv", ("quantity", "value"), summary, digest)
    _say(args, f"L1 = {geom.L1 * 1e3:.3f} mm, L2 = {geom.L2 * 1e3:.3f} mm, total {(geom.L1 + geom.L2) * 1e3:.3f} mm")
    _say(args, f"FSR = {base.free_spectral_range / 1e9:.4f} GHz, finesse {base.finesse:.1f}, "
               f"bandwidth {base.bandwidth_fwhm / 1e6:.3f} MHz, escape efficiency {base.escape_efficiency:.3f}")


def run_spectrum(cfg: ExperimentConfig, out: Path, digest: str, args) -> None:
    sol = solve(cfg)
    op = operating_point(cfg, sol)
    dec = sol.decomposition
    s = cfg.squeezing
    n_rows = min(max(s.report_modes, mode_count(dec, s.cutoff)), len(dec))
    rows = []
    for k in range(n_rows):
        match = sol.hg_match(k)
        rows.append((k, dec.gains[k], dec.gains[k] / dec.gains[0], dec.angles[k], dec.dominant[k].m,
                     dec.dominant[k].n, match.index.m, match.index.n, match.overlap, match.waist,
                     dec.gains[k] / dec.gains[0] >= s.cutoff - 1e-12))
    write_csv(out / "eigenvalues.csv",
              ("k", "lambda_k", "lambda_ratio", "theta_k_rad", "dominant_hg_m", "dominant_hg_n",
               "best_hg_m", "best_hg_n", "hg_overlap", "hg_waist_m", "above_cutoff"), rows, digest)

    freqs = np.linspace(0.0, s.spectrum_max_frequency, s.spectrum_points)
    spec = squeezing_spectrum(op.dynamics, op.efficiency, 2.0 * np.pi * freqs, np.arange(n_rows))
    rows = []
    for i, k in enumerate(spec.modes):
        for j, f in enumerate(freqs):
            vm, vp = spec.v_minus[i, j], spec.v_plus[i, j]
            rows.append((int(k), f, vm, vp, _db(vm), _db(vp)))
    write_csv(out / "squeezing_spectrum.csv",
              ("k", "frequency_hz", "v_minus", "v_plus", "v_minus_db", "v_plus_db"), rows, digest)

    summary = [
        ("basis_n_max", sol.basis.n_max),
        ("basis_waist_m", sol.basis.waist),
        ("truncation_change", sol.truncation.max_relative_change),
        ("coherence_length_m", sol.coherence_length),
        ("cooperativity", sol.cooperativity),
        ("mode_count", mode_count(dec, s.cutoff)),
        ("cutoff", s.cutoff),
        ("bandwidth_fwhm_hz", op.cavity.bandwidth_fwhm),
        ("total_efficiency", op.efficiency.total),
        ("pump_ratio", op.dynamics.pump_ratio),
        ("analysis_frequency_hz", s.analysis_frequency),
    ]
    write_csv(out / "spectrum_summary.csv", ("quantity", "value"), summary, digest)
    _say(args, f"basis n_max={sol.basis.n_max}, waist {sol.basis.waist * 1e6:.2f} um; "
               f"{mode_count(dec, s.cutoff)} modes with Lambda_k/Lambda_0 >= {s.cutoff:g}; "
               f"cooperativity {sol.cooperativity:.2f}")
    vm, _ = spec.v_minus, spec.v_plus
    at = int(np.argmin(np.abs(freqs - s.analysis_frequency)))
    for k in range(min(n_rows, 7)):
        m = sol.hg_match(k)
        _say(args, f"  k={k}  Lambda/Lambda0={dec.gains[k] / dec.gains[0]:.4f}  {m.index} "
                   f"overlap {m.overlap:.4f}  V- at {freqs[at] / 1e6:.2f} MHz = {to_decibels(vm[k, at]):+.3f} dB")


def run_modes(cfg: ExperimentConfig, out: Path, digest: str, args) -> None:
    sol = solve(cfg)
    dec = sol.decomposition
    m = cfg.modes
    half = m.extent * sol.basis.waist
    axis = np.linspace(-half, half, m.grid_points)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    for k in range(min(m.count, len(dec))):
        field = sol.basis.field(dec.vectors[:, k], axis, axis)
        rows = zip(xx.ravel(), yy.ravel(), field.real.ravel(), field.imag.ravel())
        write_csv(out / f"mode_{k:03d}.csv", ("x_m", "y_m", "re", "im"), rows, digest)
    _say(args, f"wrote {min(m.count, len(dec))} eigenmode fields on a {m.grid_points}x{m.grid_points} grid")


def run_homodyne(cfg: ExperimentConfig, out: Path, digest: str, args) -> None:
    sol = solve(cfg)
    op = operating_point(cfg, sol)
    h = cfg.homodyne
    summary = []
    for i, mode in enumerate(h.lo_modes):
        proj = project_lo(cfg, sol, mode)
        trace = simulate_trace(proj, op.dynamics, op.efficiency, op.omega, duration=h.duration, window=h.window,
                               seed=lo_seed(h.seed, i), sample_rate=h.sample_rate, n_sweeps=h.sweeps,
                               calibration_fraction=h.calibration_fraction)
        est = estimate_noise_power(trace, h.bins)
        norm = trace.variances / est.calibration_mean
        rows = zip(trace.times, trace.phases, norm, to_decibels(norm))
        tag = f"{mode.m}{mode.n}"
        write_csv(out / f"homodyne_{tag}.csv", ("t_s", "phase_rad", "variance", "variance_db"), rows, digest)
        bins = zip(est.bin_centers, est.counts.tolist(), est.mean, est.ci_low, est.ci_high, est.expected,
                   est.mean_db, to_decibels(est.expected))
        write_csv(out / f"homodyne_bins_{tag}.csv",
                  ("phase_rad", "windows", "mean", "ci_low", "ci_high", "expected", "mean_db", "expected_db"),
                  bins, digest)
        summary.append((str(mode), est.min_db, est.max_db))
        _say(args, f"LO {mode}: min {est.min_db:+.3f} dB, max {est.max_db:+.3f} dB")
    write_csv(out / "homodyne_summary.csv", ("mode", "min_db", "max_db"), summary, digest)
    _say(args, f"LO waist {lo_waist(cfg, sol) * 1e6:.2f} um, pump ratio {op.dynamics.pump_ratio:.4f}")


def run_reproduce(cfg: ExperimentConfig, out: Path, digest: str, args) -> None:
    report, _ = reproduce(cfg)
    rows = [(r.criterion, r.quantity, r.reference, r.computed, r.tolerance, r.passed) for r in report.rows]
    write_csv(out / "reproduction_report.csv",
              ("criterion", "quantity", "reference", "computed", "tolerance", "pass"), rows, digest)
    _say(args, report.table())
    if not report.passed:
        failed = sorted({r.criterion for r in report.rows if not r.passed})
        raise ReproductionFailure(f"criteria {failed} failed")


COMMANDS = {
    "design": (run_design, "cavity geometry, linewidth and transverse-mode degeneracy scan"),
    "spectrum": (run_spectrum, "eigenmode gains and squeezing spectra"),
    "modes": (run_modes, "sampled eigenmode fields"),
    "homodyne": (run_homodyne, "simulated swept-LO homodyne traces"),
    "reproduce-paper": (run_reproduce, "reference checks with a pass/fail report"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multimode-opo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=REFERENCE_CONFIG,
                        help="TOML configuration (default: bundled reference set)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override homodyne.seed (unsigned 64-bit)")
    common.add_argument("--truncation", type=int, default=None, help="override basis.truncation (per-axis n_max)")
    common.add_argument("--quiet", action="store_true", help="suppress progress and summaries on stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        cfg = replace(cfg, homodyne=replace(cfg.homodyne, seed=args.seed))
    if args.truncation is not None:
        if args.truncation < 1:
            raise ConfigError("--truncation", "must be at least 1")
        cfg = replace(cfg, basis=replace(cfg.basis, truncation=args.truncation))
    return cfg


def _error(kind: str, exc: Exception, code: int) -> int:
    record = {"error": kind, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        record["field"] = exc.field
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved.toml").write_text(resolved_toml(cfg), encoding="utf-8", newline="\n")
        run, _ = COMMANDS[args.command]
        run(cfg, out, config_hash(cfg), args)
    except ConvergenceError as exc:
        return _error("convergence", exc, EXIT_CONVERGENCE)
    except ReproductionFailure as exc:
        return _error("reproduction", exc, EXIT_REPRODUCTION)
    except (ConfigError, ValueError) as exc:
        return _error("validation", exc, EXIT_VALIDATION)
    except OSError as exc:
        return _error("io", exc, EXIT_VALIDATION)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
