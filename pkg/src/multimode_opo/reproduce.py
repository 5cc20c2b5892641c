"""Reference-value and property checks collected into one pass/fail report.

Every row compares a computed number against a reference value with an
explicit tolerance. Rows carry no timings so the report is byte-stable for a
fixed configuration and seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .cavity import cavity_report, co_resonant_orders, self_imaging_lengths
from .config import ExperimentConfig
from .coupling import (
    CrystalParams,
    PumpProfile,
    build_coupling_matrix,
    coherence_length,
    mode_count,
    solve_eigenmodes,
    takagi_decompose,
)
from .homodyne import estimate_noise_power, simulate_trace
from .modes import hermite_functions
from .squeezing import EfficiencyChain, OpoDynamics, min_variance_paper, to_decibels, variance_spectrum
from .workflow import lo_seed, operating_point, project_lo, solve

log = logging.getLogger(__name__)

REFERENCE_L1 = 48e-3
REFERENCE_L2 = 80e-3
REFERENCE_FINESSE = 250.0
REFERENCE_BANDWIDTH = 4.68e6
REFERENCE_LCOH = 43.4e-6
ROUNDED_LCOH = 40e-6
TARGET_LADDER_DB = -0.9
WAIST_SCALING_PUMP = 400e-6


@dataclass(frozen=True)
class Row:
    criterion: int
    quantity: str
    reference: str
    computed: float
    tolerance: str
    passed: bool


@dataclass
class ReproductionReport:
    rows: list[Row] = field(default_factory=list)

    def add(self, criterion, quantity, reference, computed, tolerance, passed):
        self.rows.append(Row(criterion, quantity, str(reference), float(computed), tolerance, bool(passed)))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def criterion_passed(self, criterion: int) -> bool:
        rows = [r for r in self.rows if r.criterion == criterion]
        return bool(rows) and all(r.passed for r in rows)

    def table(self) -> str:
        head = f"{'#':>2}  {'quantity':<46} {'reference':>14} {'computed':>14}  {'tolerance':<28} result"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.criterion:>2}  {r.quantity:<46} {r.reference:>14} {r.computed:>14.6g}  "
                f"{r.tolerance:<28} {'PASS' if r.passed else 'FAIL'}"
            )
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _rel(a, b):
    return abs(a - b) / abs(b)


def check_geometry(report: ReproductionReport, cfg: ExperimentConfig):
    L1, L2 = self_imaging_lengths(cfg.cavity.focal_length, cfg.cavity.mirror_radius)
    for name, got, ref in (("L1 [m]", L1, REFERENCE_L1), ("L2 [m]", L2, REFERENCE_L2),
                           ("total length [m]", L1 + L2, REFERENCE_L1 + REFERENCE_L2)):
        report.add(1, f"self-imaging {name}", ref, got, "rel 1e-12", _rel(got, ref) <= 1e-12)


def check_bandwidth(report: ReproductionReport, cfg: ExperimentConfig):
    rep = cavity_report(cfg.cavity_geometry())
    report.add(2, "cavity FWHM bandwidth [Hz]", REFERENCE_BANDWIDTH, rep.bandwidth_fwhm, "abs 5e4 Hz",
               abs(rep.bandwidth_fwhm - REFERENCE_BANDWIDTH) <= 0.05e6)
    report.add(2, "finesse", REFERENCE_FINESSE, rep.finesse, "rel 1e-9", _rel(rep.finesse, REFERENCE_FINESSE) <= 1e-9)


def check_coherence_length(report: ReproductionReport, cfg: ExperimentConfig):
    l_coh = coherence_length(cfg.signal_wavelength, cfg.crystal.length, cfg.crystal.signal_index)
    report.add(3, "coherence length [m]", REFERENCE_LCOH, l_coh, "abs 1e-7 m", abs(l_coh - REFERENCE_LCOH) <= 0.1e-6)
    report.add(3, "coherence length vs rounded value [m]", ROUNDED_LCOH, l_coh, "abs 5e-6 m",
               abs(l_coh - ROUNDED_LCOH) <= 5e-6)


def check_eigenmodes(report: ReproductionReport, sol):
    for k in range(3):
        match = sol.hg_match(k)
        report.add(4, f"eigenmode {k} overlap with {match.index}", ">= 0.995", match.overlap, "min 0.995",
                   match.overlap >= 0.995)
    report.add(4, "truncation change at n_max+5", "< 1e-6", sol.truncation.max_relative_change, "max 1e-6",
               sol.truncation.converged)


def check_mode_count(report: ReproductionReport, sol, cutoff: float):
    count = mode_count(sol.decomposition, cutoff)
    report.add(5, f"modes with Lambda_k/Lambda_0 >= {cutoff:g}", 7, count, "within [5, 9]", 5 <= count <= 9)
    report.add(5, "cooperativity (w_p/l_coh)^2", 7, sol.cooperativity, "within [5, 9]", 5 <= sol.cooperativity <= 9)


def check_ladder(report: ReproductionReport, cfg: ExperimentConfig, sol):
    op = operating_point(cfg, sol)
    if op.calibration is None:
        raise ValueError("squeezing.target_db must be set for the ladder check")
    target = cfg.squeezing.target_db
    vm, _ = variance_spectrum(op.dynamics, op.efficiency, cfg.squeezing.target_mode, op.omega)
    got = to_decibels(vm)
    report.add(6, f"mode {cfg.squeezing.target_mode} squeezing after calibration [dB]", f"{target:g}", got,
               "abs 1e-9 dB", abs(got - target) <= 1e-9)
    for k in (1, 2):
        vm, _ = variance_spectrum(op.dynamics, op.efficiency, k, op.omega)
        got = to_decibels(vm)
        report.add(6, f"mode {k} predicted squeezing [dB]", TARGET_LADDER_DB, got, "within [-1.1, -0.7] dB",
                   -1.1 <= got <= -0.7)
    return op


def check_single_mode(report: ReproductionReport, cfg: ExperimentConfig, sol, op):
    geom = cfg.cavity_geometry().detuned(0.0, -0.5e-3)
    orders = co_resonant_orders(cavity_report(geom, cfg.design.max_order))
    dec = sol.decomposition
    keep = [k for k in range(len(dec)) if dec.dominant[k].order in orders]
    if 0 not in keep:
        keep.insert(0, 0)
    single = dec.restrict(keep)
    worst = 0.0
    for r, omega in ((1.0, 0.0), (op.dynamics.pump_ratio, op.omega)):
        full = replace(op.dynamics, pump_ratio=r)
        restricted = replace(full, decomposition=single)
        a, _ = variance_spectrum(full, op.efficiency, 0, omega)
        b, _ = variance_spectrum(restricted, op.efficiency, 0, omega)
        worst = max(worst, _rel(b, a))
    report.add(7, "dominant-mode squeezing, restricted vs full", 0, worst, "rel 1e-9", worst <= 1e-9)
    report.add(7, "modes kept at dL2=-0.5 mm", 1, len(keep), "exactly 1", len(keep) == 1)


def check_figure_of_merit(report: ReproductionReport, seed: int, n_ladders: int = 1000):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 8]))
    worst = 0.0
    eff = EfficiencyChain()
    for _ in range(n_ladders):
        gains = np.sort(rng.uniform(0.0, 1.0, rng.integers(1, 50)))[::-1] * rng.uniform(0.1, 10.0)
        gains[0] = max(gains[0], 1e-3)
        dyn = OpoDynamics(1.0, 1.0, gains)
        for k in range(1, gains.size):
            vm, _ = variance_spectrum(dyn, eff, k, 0.0)
            worst = max(worst, abs(np.sqrt(vm) - min_variance_paper(gains, k)))
    report.add(8, "sqrt(V_-) at threshold vs figure of merit", 0, worst, "abs 1e-12", worst <= 1e-12)


def _random_symmetric(rng, n):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return x + x.T


def _thin_reference(crystal, pump, basis):
    # independent real-axis evaluation of the thin-crystal, waist-plane kernel
    n = basis.n_max
    c = 2.0 / basis.waist**2 + 1.0 / pump.waist**2
    t, w = np.polynomial.hermite.hermgauss(2 * n + 8)
    x = t / np.sqrt(c)
    ws = basis.waist
    h = hermite_functions(n, np.sqrt(2.0) * x / ws) * (2.0**0.25 / np.sqrt(ws))
    pump_amp = (2.0 / np.pi) ** 0.25 / np.sqrt(pump.waist)
    k1 = (h * (pump_amp * w / np.sqrt(c))) @ h.T
    return crystal.gain_scale * np.sqrt(pump.power) * crystal.length * np.kron(k1, k1)


def check_properties(report: ReproductionReport, cfg: ExperimentConfig, sol, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9]))
    sizes = np.concatenate([rng.integers(1, 37, 99), [36]])
    worst = 0.0
    for n in sizes:
        a = _random_symmetric(rng, int(n))
        dec = takagi_decompose(a)
        worst = max(worst, float(np.max(np.abs(dec.reconstruct() - a))))
    report.add(9, "Takagi reconstruction, 100 random matrices", 0, worst, "max abs 1e-10", worst < 1e-10)

    crystal, pump = cfg.crystal_params(), cfg.pump_profile()
    basis = sol.basis
    raw = build_coupling_matrix(crystal, pump, basis, cfg.basis.z_nodes, check_convergence=False,
                                symmetrize=False).matrix
    scale = np.max(np.abs(raw))
    asym = float(np.max(np.abs(raw - raw.T)) / scale)
    report.add(9, "coupling matrix asymmetry (relative)", 0, asym, "max 1e-9", asym <= 1e-9)

    idx = basis.indices
    px = np.array([i.m % 2 for i in idx])
    py = np.array([i.n % 2 for i in idx])
    forbidden = (px[:, None] != px[None, :]) | (py[:, None] != py[None, :])
    leak = float(np.max(np.abs(raw[forbidden])) / scale)
    report.add(9, "parity-forbidden coupling (relative)", 0, leak, "max 1e-9", leak <= 1e-9)

    thin = build_coupling_matrix(crystal, pump, basis, z_nodes=1, check_convergence=False).matrix
    ref = _thin_reference(crystal, pump, basis)
    sep = float(np.max(np.abs(thin - ref)) / np.max(np.abs(ref)))
    report.add(9, "thin-crystal separability (relative)", 0, sep, "max 1e-9", sep <= 1e-9)

    boosted = replace(pump, power=4.0 * pump.power)
    k4 = build_coupling_matrix(crystal, boosted, basis, cfg.basis.z_nodes, check_convergence=False).matrix
    # sorted, because near-ties (within 1e-9) are ordered by HG index instead
    g1 = np.sort(sol.decomposition.gains)[::-1][:10]
    g4 = scipy.linalg.svdvals(k4)[:10]
    lin = float(np.max(np.abs(g4 / g1 - 2.0)) / 2.0)
    report.add(9, "gain linearity in pump amplitude", 0, lin, "rel 1e-10", lin <= 1e-10)

    ratio = _waist_scaling(crystal, cfg.signal_wavelength, pump)
    report.add(9, "waist-scaling c*Lambda0(c w)/Lambda0(w), c=2", 1, ratio, "rel 0.05", abs(ratio - 1.0) <= 0.05)


def _waist_scaling(crystal: CrystalParams, wavelength: float, pump: PumpProfile, c: float = 2.0, n_max: int = 10):
    gains = []
    for w in (WAIST_SCALING_PUMP, c * WAIST_SCALING_PUMP):
        p = replace(pump, waist=w, waist_position=0.0)
        gains.append(solve_eigenmodes(crystal, p, wavelength, n_max, check=False).decomposition.gains[0])
    return float(c * gains[1] / gains[0])


def homodyne_traces(cfg: ExperimentConfig, sol, op, seed: int):
    """Traces for each configured LO mode, plus a pump-off trace on the first."""
    h = cfg.homodyne
    kwargs = dict(duration=h.duration, window=h.window, sample_rate=h.sample_rate, n_sweeps=h.sweeps,
                  calibration_fraction=h.calibration_fraction)
    out = {}
    for i, mode in enumerate(h.lo_modes):
        proj = project_lo(cfg, sol, mode)
        out[str(mode)] = simulate_trace(proj, op.dynamics, op.efficiency, op.omega, seed=lo_seed(seed, i), **kwargs)
    proj = project_lo(cfg, sol, h.lo_modes[0])
    dark = op.dynamics.with_pump_ratio(0.0)
    out["pump-off"] = simulate_trace(proj, dark, op.efficiency, op.omega, seed=lo_seed(seed, len(h.lo_modes)), **kwargs)
    return out


def check_homodyne(report: ReproductionReport, cfg: ExperimentConfig, traces):
    for name, trace in traces.items():
        est = estimate_noise_power(trace, cfg.homodyne.bins)
        err = np.abs(est.mean_db - to_decibels(est.expected))
        if name == "pump-off":
            worst = float(np.max(np.abs(est.mean_db)))
            report.add(10, "pump-off bins, max |dB|", 0, worst, "abs 0.05 dB", worst <= 0.05)
        else:
            frac = float(np.mean(err <= 0.1))
            report.add(10, f"LO {name}: bins within 0.1 dB of model", ">= 0.95", frac, "min 0.95", frac >= 0.95)
        per_bin = float(np.min(est.counts))
        report.add(10, f"LO {name}: windows per phase bin", ">= 100", per_bin, "min 100", per_bin >= 100)


def check_determinism(report: ReproductionReport, cfg: ExperimentConfig, sol, op, seed: int, traces):
    again = homodyne_traces(cfg, sol, op, seed)
    same = all(again[k].variances.tobytes() == traces[k].variances.tobytes() for k in traces)
    report.add(11, "repeated trace generation, identical bytes", 1, float(same), "exact", same)


def reproduce(cfg: ExperimentConfig, seed: int | None = None) -> tuple[ReproductionReport, dict]:
    """Run every check; returns the report and the homodyne traces it used."""
    seed = cfg.homodyne.seed if seed is None else seed
    report = ReproductionReport()
    check_geometry(report, cfg)
    check_bandwidth(report, cfg)
    check_coherence_length(report, cfg)
    sol = solve(cfg)
    check_eigenmodes(report, sol)
    check_mode_count(report, sol, cfg.squeezing.cutoff)
    op = check_ladder(report, cfg, sol)
    check_single_mode(report, cfg, sol, op)
    check_figure_of_merit(report, seed)
    check_properties(report, cfg, sol, seed)
    traces = homodyne_traces(cfg, sol, op, seed)
    check_homodyne(report, cfg, traces)
    check_determinism(report, cfg, sol, op, seed, traces)
    return report, traces
