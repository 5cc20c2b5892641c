"""Mode-selective homodyne detection of the OPO output."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .coupling import HGBasis, ModeDecomposition
from .modes import ModeIndex, TransverseGrid, hg_1d, overlap, waist_overlap_matrix
from .squeezing import EfficiencyChain, OpoDynamics, SqueezingSpectrum, squeezing_spectrum, to_decibels

__all__ = [
    "HomodyneTrace",
    "LoProjection",
    "LocalOscillator",
    "NoiseEstimate",
    "estimate_noise_power",
    "lo_projection",
    "simulate_trace",
    "variance_vs_phase",
]


@dataclass(frozen=True, eq=False)
class LocalOscillator:
    """LO transverse mode: either an HG index at ``waist`` or a sampled field.

    A sampled field is given on a :class:`TransverseGrid` in the basis waist
    plane. The waist defaults to the basis waist.
    """

    mode: ModeIndex | None = None
    waist: float | None = None
    field: np.ndarray | None = None
    grid: TransverseGrid | None = None

    def __post_init__(self):
        if (self.mode is None) == (self.field is None):
            raise ValueError("give exactly one of an HG mode index or a sampled field")
        if self.field is not None and self.grid is None:
            raise ValueError("a sampled LO field needs its grid")

    def coefficients(self, basis: HGBasis) -> np.ndarray:
        """Normalised LO expanded over ``basis`` (components outside it are dropped)."""
        n = basis.n_max
        if self.mode is not None:
            w = basis.waist if self.waist is None else self.waist
            top = max(self.mode.m, self.mode.n)
            o = waist_overlap_matrix(n, basis.waist, top, w)
            return np.outer(o[:, self.mode.m], o[:, self.mode.n]).ravel().astype(complex)
        norm = overlap(self.field, self.field, self.grid).real
        if not norm > 0:
            raise ValueError("local oscillator has zero norm")
        beam = basis.beam()
        ux = hg_1d(n, beam, self.grid.x)
        uy = hg_1d(n, beam, self.grid.y)
        weighted = self.grid.weights * self.field / np.sqrt(norm)
        return (ux.conj() @ weighted @ uy.conj().T).ravel()


@dataclass(frozen=True, eq=False)
class LoProjection:
    coefficients: np.ndarray
    residual: float

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2


def lo_projection(lo: LocalOscillator, dec: ModeDecomposition, basis: HGBasis | None = None) -> LoProjection:
    """c_k = <eigenmode_k | LO>; the residual is the LO power outside the basis,
    which only sees vacuum."""
    basis = dec.basis if basis is None else basis
    if basis is None:
        raise ValueError("an HG basis is needed to project the LO")
    ell = lo.coefficients(basis)
    c = dec.vectors.conj().T @ ell
    residual = float(np.clip(1.0 - np.sum(np.abs(c) ** 2), 0.0, 1.0))
    return LoProjection(c, residual)


def variance_vs_phase(projection: LoProjection, spectrum: SqueezingSpectrum, theta, freq_index: int = 0):
    """Shot-normalised variance seen at LO phase ``theta``.

    Mode k contributes ``V_- cos^2(theta - theta_k/2) + V_+ sin^2(theta - theta_k/2)``
    weighted by ``|c_k|^2``; the residual LO power adds vacuum.
    """
    theta = np.asarray(theta, dtype=float)
    weights = projection.weights[spectrum.modes]
    vm, vp = spectrum.at(freq_index)
    rel = theta[..., None] - 0.5 * spectrum.angles
    per_mode = vm * np.cos(rel) ** 2 + vp * np.sin(rel) ** 2
    # drop exactly-unweighted modes so a divergent anti-squeezed mode the LO
    # does not see cannot turn the sum into nan
    seen = weights > 0
    out = per_mode[..., seen] @ weights[seen] + projection.residual
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class HomodyneTrace:
    times: np.ndarray
    phases: np.ndarray
    variances: np.ndarray
    expected: np.ndarray
    calibration: np.ndarray
    seed: int
    window: int
    sweep_period: float


def simulate_trace(
    projection: LoProjection,
    dyn: OpoDynamics,
    eff: EfficiencyChain,
    omega: float,
    *,
    duration: float,
    window: int,
    seed: int,
    sample_rate: float = 10e6,
    n_sweeps: int = 10,
    calibration_fraction: float = 0.1,
) -> HomodyneTrace:
    """Windowed variance record of a swept-LO homodyne measurement.

    The first ``calibration_fraction`` of the windows see the pump blocked
    (shot noise); the rest see the LO phase ramp linearly through ``2 pi`` in
    each of ``n_sweeps`` sweeps. Every window draws ``window`` demodulated
    Gaussian samples from its own generator, spawned from ``seed`` by window
    index, and records their unbiased sample variance.
    """
    if window < 100:
        raise ValueError("window must hold at least 100 samples")
    if n_sweeps < 2:
        raise ValueError("trace must cover at least two sweep periods")
    if not 0 < calibration_fraction < 1:
        raise ValueError("calibration fraction must lie in (0, 1)")
    n_windows = int(round(duration * sample_rate / window))
    n_cal = int(round(calibration_fraction * n_windows))
    n_meas = n_windows - n_cal
    if n_cal < 1 or n_meas < n_sweeps:
        raise ValueError("duration too short for the requested window, sweeps and calibration")

    dt = window / sample_rate
    times = (np.arange(n_windows) + 0.5) * dt
    sweep_period = n_meas * dt / n_sweeps
    phases = np.full(n_windows, np.nan)
    phases[n_cal:] = 2.0 * np.pi * np.mod((times[n_cal:] - n_cal * dt) / sweep_period, 1.0)
    calibration = np.zeros(n_windows, dtype=bool)
    calibration[:n_cal] = True

    spectrum = squeezing_spectrum(dyn, eff, [omega])
    expected = np.ones(n_windows)
    expected[n_cal:] = variance_vs_phase(projection, spectrum, phases[n_cal:])

    variances = np.empty(n_windows)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_windows)):
        samples = np.random.default_rng(child).standard_normal(window)
        variances[i] = expected[i] * samples.var(ddof=1)
    return HomodyneTrace(times, phases, variances, expected, calibration, int(seed), int(window), sweep_period)


@dataclass(frozen=True, eq=False)
class NoiseEstimate:
    bin_centers: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    calibration_mean: float

    @property
    def mean_db(self) -> np.ndarray:
        return to_decibels(self.mean)

    @property
    def min_db(self) -> float:
        return float(np.min(self.mean_db))

    @property
    def max_db(self) -> float:
        return float(np.max(self.mean_db))


def estimate_noise_power(trace: HomodyneTrace, n_bins: int = 36, confidence: float = 0.95) -> NoiseEstimate:
    """Bin the swept windows by LO phase and normalise to the shot-noise segment.

    ``expected`` carries the bin average of the analytic variance actually
    sampled, for direct comparison with ``mean``.
    """
    if not np.any(trace.calibration):
        raise ValueError("trace has no shot-noise calibration segment")
    cal = float(np.mean(trace.variances[trace.calibration]))
    sweep = ~trace.calibration
    edges = np.linspace(0.0, 2.0 * np.pi, n_bins + 1)
    which = np.clip(np.digitize(trace.phases[sweep], edges) - 1, 0, n_bins - 1)
    v = trace.variances[sweep] / cal
    e = trace.expected[sweep]
    counts = np.bincount(which, minlength=n_bins)
    if np.any(counts < 2):
        raise ValueError("some phase bins hold fewer than two windows")
    mean = np.bincount(which, weights=v, minlength=n_bins) / counts
    expected = np.bincount(which, weights=e, minlength=n_bins) / counts
    sq = np.bincount(which, weights=(v - mean[which]) ** 2, minlength=n_bins)
    sem = np.sqrt(sq / (counts - 1) / counts)
    half = stats.t.ppf(0.5 + 0.5 * confidence, counts - 1) * sem
    centers = 0.5 * (edges[:-1] + edges[1:])
    return NoiseEstimate(centers, mean, mean - half, mean + half, counts, expected, cal)
