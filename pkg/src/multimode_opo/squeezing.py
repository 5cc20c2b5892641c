"""Below-threshold quadrature noise of the independent eigenmodes.

Each eigenmode obeys ``dS/dt = -gamma S + Lambda_k S^dag + sqrt(2 gamma) S_in``.
Its output quadrature spectra, relative to shot noise, are

    V_-+(Omega) = 1 -+ eta * 4 sigma / ((1 +- sigma)^2 + (Omega / gamma)^2)

with ``sigma = r * Lambda_k / Lambda_0`` and ``r`` the pump amplitude relative
to the threshold of the dominant mode. ``gamma`` is the field half-width, i.e.
``gamma = pi * bandwidth_fwhm`` when the linewidth is given in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DIVERGENCE_LIMIT",
    "Calibration",
    "EfficiencyChain",
    "OpoDynamics",
    "SqueezingSpectrum",
    "calibrate_to_measurement",
    "min_variance_paper",
    "squeezing_spectrum",
    "to_decibels",
    "variance_spectrum",
]

DIVERGENCE_LIMIT = 1e6


def _gains_of(source) -> np.ndarray:
    return np.asarray(getattr(source, "gains", source), dtype=float)


@dataclass(frozen=True)
class EfficiencyChain:
    escape: float = 1.0
    propagation: float = 1.0
    detector_quantum: float = 1.0
    homodyne_visibility: float = 1.0

    def __post_init__(self):
        for name in ("escape", "propagation", "detector_quantum", "homodyne_visibility"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} efficiency must lie in (0, 1], got {value}")

    @property
    def total(self) -> float:
        return self.escape * self.propagation * self.detector_quantum * self.homodyne_visibility**2


@dataclass(frozen=True, eq=False)
class OpoDynamics:
    """Cavity decay, pump level and gain ladder of the OPO.

    ``decomposition`` may be a ModeDecomposition or a bare gain array.
    """

    decay_rate: float
    pump_ratio: float
    decomposition: object

    def __post_init__(self):
        if not self.decay_rate > 0:
            raise ValueError("decay rate must be positive")
        if not 0 <= self.pump_ratio <= 1:
            raise ValueError(f"pump ratio must lie in [0, 1], got {self.pump_ratio}")
        gains = _gains_of(self.decomposition)
        if gains.size == 0 or gains[0] <= 0:
            raise ValueError("no pumped mode: Lambda_0 must be positive")

    @classmethod
    def from_bandwidth(cls, bandwidth_fwhm: float, pump_ratio: float, decomposition) -> "OpoDynamics":
        return cls(np.pi * bandwidth_fwhm, pump_ratio, decomposition)

    @property
    def gains(self) -> np.ndarray:
        return _gains_of(self.decomposition)

    def sigma(self, k=None):
        g = self.gains
        s = self.pump_ratio * g / g[0]
        return s if k is None else s[k]

    def with_pump_ratio(self, r: float) -> "OpoDynamics":
        return replace(self, pump_ratio=r)


def min_variance_paper(decomposition, k: int) -> float:
    """(Lambda_0 - Lambda_k) / (Lambda_0 + Lambda_k): the dominant-mode-threshold
    figure of merit for mode k.

    This is the square root of the zero-frequency, lossless output variance at
    threshold, not that variance itself.
    """
    g = _gains_of(decomposition)
    if g[0] <= 0:
        raise ValueError("Lambda_0 must be positive")
    return float((g[0] - g[k]) / (g[0] + g[k]))


def _spectra(sigma, omega, gamma, eta):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma > 1 + 1e-12) or np.any(sigma < 0):
        raise ValueError("normalised gain sigma must lie in [0, 1]; above threshold is out of model validity")
    x2 = (np.asarray(omega, dtype=float) / gamma) ** 2
    # same as 1 - 4 eta sigma / ((1 + sigma)^2 + x2) without the cancellation near threshold
    v_minus = ((1.0 - sigma) ** 2 + x2 + 4.0 * sigma * (1.0 - eta)) / ((1.0 + sigma) ** 2 + x2)
    with np.errstate(divide="ignore"):
        v_plus = 1.0 + eta * 4.0 * sigma / ((1.0 - sigma) ** 2 + x2)
    return v_minus, v_plus


def variance_spectrum(dyn: OpoDynamics, eff: EfficiencyChain, k: int, omega):
    """Squeezed and anti-squeezed variances of mode k at angular frequency omega.

    The anti-squeezed variance is ``inf`` exactly at threshold and zero
    frequency; anything beyond :data:`DIVERGENCE_LIMIT` should be read as
    divergent.
    """
    return _spectra(dyn.sigma(k), omega, dyn.decay_rate, eff.total)


@dataclass(frozen=True, eq=False)
class SqueezingSpectrum:
    """Variances for modes ``modes`` (rows) at angular frequencies ``omega``."""

    omega: np.ndarray
    modes: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    angles: np.ndarray

    @property
    def divergent(self) -> np.ndarray:
        return self.v_plus > DIVERGENCE_LIMIT

    def at(self, j: int = 0) -> tuple[np.ndarray, np.ndarray]:
        return self.v_minus[:, j], self.v_plus[:, j]


def squeezing_spectrum(dyn: OpoDynamics, eff: EfficiencyChain, omega, modes=None) -> SqueezingSpectrum:
    gains = dyn.gains
    modes = np.arange(gains.size) if modes is None else np.asarray(modes, dtype=int)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    vm, vp = _spectra(dyn.sigma()[modes, None], omega[None, :], dyn.decay_rate, eff.total)
    angles = getattr(dyn.decomposition, "angles", None)
    angles = np.zeros(modes.size) if angles is None else np.asarray(angles)[modes]
    return SqueezingSpectrum(omega, modes, vm, vp, angles)


def to_decibels(v):
    """10 log10(V). Squeezing of ``x`` dB below shot noise reads as ``-x``."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("variance must be positive to express in dB")
    out = 10.0 * np.log10(v)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Calibration:
    efficiency: EfficiencyChain
    pump_ratio: float
    target_mode: int
    target_db: float
    omega: float
    achieved_db: float


def _bisect(fn, lo, hi, iterations=200):
    # fn increasing; returns x with fn(x) ~ 0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


def calibrate_to_measurement(
    decomposition,
    dyn: OpoDynamics,
    eff: EfficiencyChain,
    target_mode: int,
    target_db: float,
    omega: float,
    solve_for: str = "pump_ratio",
) -> Calibration:
    """Match the squeezed variance of ``target_mode`` at ``omega`` to ``target_db``.

    ``solve_for="pump_ratio"`` keeps ``eff`` and bisects on r in [0, 1];
    ``solve_for="efficiency"`` keeps r and bisects on the propagation
    efficiency, leaving the other links of the chain as given.
    """
    if target_db > 0:
        raise ValueError("target must be squeezing (<= 0 dB)")
    target = 10.0 ** (target_db / 10.0)
    dyn = replace(dyn, decomposition=decomposition)
    gains = dyn.gains
    ratio = gains[target_mode] / gains[0]
    x2 = (omega / dyn.decay_rate) ** 2

    def squeezed(r, eta):
        s = r * ratio
        return 1.0 - eta * 4.0 * s / ((1.0 + s) ** 2 + x2)

    bound = squeezed(1.0, 1.0)
    if target < bound:
        raise ValueError(
            f"target {target_db:.3f} dB is beyond the lossless threshold bound "
            f"{to_decibels(bound):.3f} dB for mode {target_mode}"
        )
    if solve_for == "pump_ratio":
        eta = eff.total
        if target < squeezed(1.0, eta):
            raise ValueError(
                f"target {target_db:.3f} dB unreachable at total efficiency {eta:.4f}: "
                f"best is {to_decibels(squeezed(1.0, eta)):.3f} dB (lossless bound "
                f"{to_decibels(bound):.3f} dB)"
            )
        r = 0.0 if target_db == 0 else _bisect(lambda r: target - squeezed(r, eta), 0.0, 1.0)
        new_eff = eff
    elif solve_for == "efficiency":
        r = dyn.pump_ratio
        others = eff.escape * eff.detector_quantum * eff.homodyne_visibility**2
        if target < squeezed(r, others):
            raise ValueError(
                f"target {target_db:.3f} dB unreachable at pump ratio {r:.4f} even with "
                f"lossless propagation (lossless bound {to_decibels(bound):.3f} dB)"
            )
        if target_db == 0 or r == 0:
            raise ValueError("efficiency is undetermined for a zero target or unpumped OPO")
        p = _bisect(lambda p: target - squeezed(r, p * others), 0.0, 1.0)
        new_eff = replace(eff, propagation=p)
    else:
        raise ValueError(f"unknown calibration parameter {solve_for!r}")
    achieved = squeezed(r, new_eff.total)
    return Calibration(new_eff, r, target_mode, target_db, float(omega), to_decibels(achieved))
