"""Ray-matrix model of the plane mirror / lens / curved mirror resonator."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "CavityGeometry",
    "CavityReport",
    "cavity_report",
    "co_resonant_orders",
    "degeneracy_scan",
    "losses_from_finesse",
    "round_trip_abcd",
    "self_imaging_lengths",
]


def self_imaging_lengths(f: float, R: float) -> tuple[float, float]:
    """Plane-mirror-to-lens and lens-to-mirror distances for full degeneracy."""
    if not f > 0 or not R > 0:
        raise ValueError(f"focal length and mirror radius must be positive (f={f}, R={R})")
    return f + f * f / R, f + R


def losses_from_finesse(finesse: float, escape_efficiency: float) -> tuple[float, float]:
    """Output-coupler transmission and extra round-trip loss giving ``finesse``
    and ``escape_efficiency``."""
    if not finesse > 0:
        raise ValueError("finesse must be positive")
    if not 0 < escape_efficiency <= 1:
        raise ValueError("escape efficiency must lie in (0, 1]")
    total = 2.0 * np.pi / finesse
    return escape_efficiency * total, (1.0 - escape_efficiency) * total


@dataclass(frozen=True)
class CavityGeometry:
    focal_length: float
    mirror_radius: float
    L1: float
    L2: float
    output_transmission: float = 0.0
    extra_loss: float = 0.0
    crystal_length: float = 0.0
    crystal_index: float = 1.0
    include_crystal_optical_path: bool = False

    def __post_init__(self):
        for name in ("focal_length", "mirror_radius", "L1", "L2"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= self.output_transmission < 1:
            raise ValueError("output_transmission must lie in [0, 1)")
        if not 0 <= self.extra_loss < 1:
            raise ValueError("extra_loss must lie in [0, 1)")
        if self.crystal_length < 0:
            raise ValueError("crystal_length must be nonnegative")

    @classmethod
    def self_imaging(cls, focal_length: float, mirror_radius: float, **kwargs) -> "CavityGeometry":
        L1, L2 = self_imaging_lengths(focal_length, mirror_radius)
        return cls(focal_length, mirror_radius, L1, L2, **kwargs)

    def detuned(self, dL1: float = 0.0, dL2: float = 0.0) -> "CavityGeometry":
        return replace(self, L1=self.L1 + dL1, L2=self.L2 + dL2)

    @property
    def optical_length(self) -> float:
        length = self.L1 + self.L2
        if self.include_crystal_optical_path:
            length += (self.crystal_index - 1.0) * self.crystal_length
        return length


@dataclass(frozen=True)
class CavityReport:
    free_spectral_range: float
    finesse: float
    bandwidth_fwhm: float
    escape_efficiency: float
    round_trip_gouy: float
    stable: bool
    order_detunings: dict[int, float]
    dL1: float = 0.0
    dL2: float = 0.0

    def co_resonant(self, order: int) -> bool:
        return self.stable and abs(self.order_detunings[order]) < 0.5 * self.bandwidth_fwhm


def _free(d):
    return np.array([[1.0, d], [0.0, 1.0]])


def _lens(f):
    return np.array([[1.0, 0.0], [-1.0 / f, 1.0]])


def round_trip_abcd(geom: CavityGeometry) -> np.ndarray:
    """Round trip starting and ending at the plane mirror.

    The crystal is a phase-neutral slab here: it lengthens the optical path but
    does not enter the ray matrix.
    """
    half = _free(geom.L2) @ _lens(geom.focal_length) @ _free(geom.L1)
    mirror = _lens(geom.mirror_radius / 2.0)
    back = _free(geom.L1) @ _lens(geom.focal_length) @ _free(geom.L2)
    return back @ mirror @ half


def _gouy_from_abcd(m: np.ndarray) -> tuple[float, bool]:
    # sin^2 = -BC - ((A - D)/2)^2 for a unimodular matrix; arccos alone loses
    # all precision next to the degenerate point where the trace is 2
    (a, b), (c, d) = m
    sin_sq = -b * c - 0.25 * (a - d) ** 2
    stable = sin_sq >= -1e-12
    sin_theta = np.copysign(np.sqrt(max(sin_sq, 0.0)), b)
    return float(np.arctan2(sin_theta, 0.5 * (a + d))), bool(stable)


def _wrap(offset, fsr):
    return offset - fsr * np.round(offset / fsr)


def cavity_report(geom: CavityGeometry, max_order: int = 0) -> CavityReport:
    """Linewidth figures and transverse-order offsets of ``geom``.

    Offsets are wrapped to the nearest longitudinal resonance. Unstable
    geometries get NaN offsets and ``stable=False``.
    """
    total_loss = geom.output_transmission + geom.extra_loss
    if total_loss <= 0:
        raise ValueError("lossless cavity: finesse is undefined")
    fsr = SPEED_OF_LIGHT / (2.0 * geom.optical_length)
    finesse = 2.0 * np.pi / total_loss
    theta, stable = _gouy_from_abcd(round_trip_abcd(geom))
    detunings = {}
    for q in range(max_order + 1):
        detunings[q] = float(_wrap(q * theta / (2.0 * np.pi) * fsr, fsr)) if stable else float("nan")
    return CavityReport(
        free_spectral_range=fsr,
        finesse=finesse,
        bandwidth_fwhm=fsr / finesse,
        escape_efficiency=geom.output_transmission / total_loss,
        round_trip_gouy=theta,
        stable=stable,
        order_detunings=detunings,
    )


def degeneracy_scan(geom: CavityGeometry, dL1_values, dL2_values, max_order: int) -> list[CavityReport]:
    """Reports over the grid of length detunings, dL1 outer and dL2 inner."""
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    reports = []
    for d1 in np.asarray(dL1_values, dtype=float):
        for d2 in np.asarray(dL2_values, dtype=float):
            if not (np.isfinite(d1) and np.isfinite(d2)):
                raise ValueError("detunings must be finite")
            report = cavity_report(geom.detuned(d1, d2), max_order)
            reports.append(replace(report, dL1=float(d1), dL2=float(d2)))
    return reports


def co_resonant_orders(report: CavityReport) -> list[int]:
    """Transverse orders within half a linewidth of the fundamental."""
    return [q for q in sorted(report.order_detunings) if report.co_resonant(q)]
