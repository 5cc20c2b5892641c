"""Glue between a resolved configuration and the physics modules."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cavity import CavityReport, cavity_report
from .config import ExperimentConfig
from .coupling import ConvergenceError, EigenmodeSolution, solve_eigenmodes
from .homodyne import LocalOscillator, LoProjection, lo_projection
from .modes import ModeIndex
from .squeezing import Calibration, EfficiencyChain, OpoDynamics, calibrate_to_measurement

log = logging.getLogger(__name__)

AUTO_TRUNCATIONS = (10, 15, 20, 25, 30, 35, 40)


def solve(cfg: ExperimentConfig) -> EigenmodeSolution:
    """Eigenmodes for ``cfg``; raises :class:`ConvergenceError` when the
    truncation check fails (or no automatic truncation converges)."""
    args = (cfg.crystal_params(), cfg.pump_profile(), cfg.signal_wavelength)
    if cfg.basis.truncation is None:
        for n_max in AUTO_TRUNCATIONS:
            sol = solve_eigenmodes(*args, n_max, cfg.basis.waist, cfg.basis.z_nodes)
            if sol.truncation.converged:
                log.info("automatic truncation settled at n_max=%d", n_max)
                return sol
        raise ConvergenceError(f"no truncation up to n_max={AUTO_TRUNCATIONS[-1]} converged")
    sol = solve_eigenmodes(*args, cfg.basis.truncation, cfg.basis.waist, cfg.basis.z_nodes)
    if not sol.truncation.converged:
        raise ConvergenceError(
            f"truncation n_max={sol.truncation.n_max} not converged: leading gains change by "
            f"{sol.truncation.max_relative_change:.3e} at n_max={sol.truncation.n_max_check}"
        )
    return sol


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    cavity: CavityReport
    dynamics: OpoDynamics
    efficiency: EfficiencyChain
    omega: float
    calibration: Calibration | None


def operating_point(cfg: ExperimentConfig, sol: EigenmodeSolution) -> OperatingPoint:
    """Cavity linewidth, efficiency chain and pump ratio; the pump ratio is
    solved from ``squeezing.target_db`` when one is configured."""
    report = cavity_report(cfg.cavity_geometry())
    eff = cfg.efficiency()
    dyn = OpoDynamics.from_bandwidth(report.bandwidth_fwhm, cfg.pump.ratio_to_threshold, sol.decomposition)
    omega = 2.0 * np.pi * cfg.squeezing.analysis_frequency
    cal = None
    s = cfg.squeezing
    if s.target_db is not None:
        cal = calibrate_to_measurement(sol.decomposition, dyn, eff, s.target_mode, s.target_db, omega)
        dyn = dyn.with_pump_ratio(cal.pump_ratio)
        eff = cal.efficiency
    return OperatingPoint(report, dyn, eff, omega, cal)


def lo_waist(cfg: ExperimentConfig, sol: EigenmodeSolution) -> float:
    """Configured LO waist, or the best-fit waist of eigenmode 0 (the LO is
    matched to the seed, which is matched to the first eigenmode)."""
    if cfg.homodyne.lo_waist is not None:
        return cfg.homodyne.lo_waist
    return sol.hg_match(0).waist


def project_lo(cfg: ExperimentConfig, sol: EigenmodeSolution, mode: ModeIndex) -> LoProjection:
    lo = LocalOscillator(mode=mode, waist=lo_waist(cfg, sol))
    return lo_projection(lo, sol.decomposition)


def lo_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
