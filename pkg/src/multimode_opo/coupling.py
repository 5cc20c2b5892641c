"""Parametric coupling matrix and its squeezed eigenmode basis.

The coupling between signal modes p and q is

    K_pq = g * int dz exp(i dk z) int d^2r alpha(r, z) u_p(r, z) u_q(r, z)

over the crystal (centred on z = 0), with ``alpha`` the pump amplitude
(``sqrt(power)`` times a unit-normalised profile) and ``u`` the forward
propagating signal envelopes, unconjugated. ``K`` is complex symmetric; its
Takagi factorisation ``K = U diag(Lambda e^{i theta}) U^T`` gives the
independent squeezed modes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components

from .modes import (
    BeamGeometry,
    ModeIndex,
    _gauss_hermite,
    default_node_count,
    gaussian_exponent,
    hg_1d,
    hg_1d_parts,
    waist_overlap_matrix,
)

__all__ = [
    "DEFAULT_CUTOFF",
    "ConvergenceError",
    "CouplingMatrix",
    "CrystalParams",
    "EigenmodeSolution",
    "HGBasis",
    "HGMatch",
    "ModeDecomposition",
    "PumpProfile",
    "SampledPump",
    "TruncationCheck",
    "build_coupling_matrix",
    "check_truncation",
    "coherence_length",
    "cooperativity",
    "eigenmode_hg_overlap",
    "mode_count",
    "optimize_basis_waist",
    "solve_eigenmodes",
    "takagi_decompose",
]

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 0.6
DEFAULT_Z_NODES = 33
TRUNCATION_STEP = 5
TRUNCATION_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """A quadrature or truncation refinement changed the result beyond tolerance."""


def coherence_length(signal_wavelength: float, crystal_length: float, signal_index: float) -> float:
    """sqrt(lambda * l_c / (pi * n)): waist whose in-crystal Rayleigh range is l_c."""
    for name, value in (
        ("signal_wavelength", signal_wavelength),
        ("crystal_length", crystal_length),
        ("signal_index", signal_index),
    ):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return float(np.sqrt(signal_wavelength * crystal_length / (np.pi * signal_index)))


def cooperativity(pump_waist: float, l_coh: float) -> float:
    """Rough mode-number estimate (w_p / l_coh)^2."""
    return (pump_waist / l_coh) ** 2


@dataclass(frozen=True)
class CrystalParams:
    length: float
    signal_index: float
    phase_mismatch: float = 0.0
    gain_scale: float = 1.0
    pump_index: float | None = None

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"crystal length must be positive, got {self.length}")
        if not self.signal_index > 1:
            raise ValueError(f"signal index must exceed 1, got {self.signal_index}")

    @property
    def effective_pump_index(self) -> float:
        return self.signal_index if self.pump_index is None else self.pump_index


@dataclass(frozen=True, eq=False)
class SampledPump:
    """Transverse pump amplitude on a regular grid, taken as z-invariant over
    the crystal. Zero outside the sampled window."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.x), len(self.y)):
            raise ValueError("pump samples must have shape (len(x), len(y))")
        power = trapezoid(trapezoid(np.abs(self.values) ** 2, self.y, axis=1), self.x)
        if not power > 0:
            raise ValueError("sampled pump profile has zero power")

    def normalised(self, x, y):
        power = trapezoid(trapezoid(np.abs(self.values) ** 2, self.y, axis=1), self.x)
        pts = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)
        re = RegularGridInterpolator((self.x, self.y), self.values.real, bounds_error=False, fill_value=0.0)
        im = RegularGridInterpolator((self.x, self.y), self.values.imag, bounds_error=False, fill_value=0.0)
        return (re(pts) + 1j * im(pts)) / np.sqrt(power)


@dataclass(frozen=True)
class PumpProfile:
    waist: float
    wavelength: float
    power: float = 1.0
    waist_position: float = 0.0
    image: SampledPump | None = None

    def __post_init__(self):
        if not self.waist > 0:
            raise ValueError(f"pump waist must be positive, got {self.waist}")
        if self.power < 0:
            raise ValueError(f"pump power must be nonnegative, got {self.power}")

    def beam(self, index: float) -> BeamGeometry:
        return BeamGeometry(self.waist, self.wavelength, self.waist_position, index)


@dataclass(frozen=True)
class HGBasis:
    """Square-truncated HG basis, indices m, n = 0..n_max, ordered m-major."""

    n_max: int
    waist: float
    wavelength: float
    waist_position: float = 0.0

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if not self.waist > 0:
            raise ValueError("basis waist must be positive")

    @property
    def dimension(self) -> int:
        return (self.n_max + 1) ** 2

    @property
    def indices(self) -> list[ModeIndex]:
        return [ModeIndex(m, n) for m in range(self.n_max + 1) for n in range(self.n_max + 1)]

    def position(self, idx: ModeIndex) -> int:
        if idx.m > self.n_max or idx.n > self.n_max:
            raise IndexError(f"{idx} lies outside the truncation n_max={self.n_max}")
        return idx.m * (self.n_max + 1) + idx.n

    def beam(self, index: float = 1.0) -> BeamGeometry:
        return BeamGeometry(self.waist, self.wavelength, self.waist_position, index)

    def with_truncation(self, n_max: int) -> "HGBasis":
        return HGBasis(n_max, self.waist, self.wavelength, self.waist_position)

    def field(self, coefficients, x, y, z=0.0):
        """Superposition sum_p c_p HG_p sampled on the tensor grid x by y."""
        beam = self.beam()
        ux = hg_1d(self.n_max, beam, np.asarray(x, dtype=float), z)
        uy = hg_1d(self.n_max, beam, np.asarray(y, dtype=float), z)
        c = np.asarray(coefficients).reshape(self.n_max + 1, self.n_max + 1)
        return ux.T @ c @ uy


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    matrix: np.ndarray
    basis: HGBasis
    pump_power: float
    z_nodes: int = DEFAULT_Z_NODES
    transverse_nodes: int = 0


def _z_rule(length: float, nodes: int):
    if nodes == 1:
        return np.zeros(1), np.array([length])
    t, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * length * t, 0.5 * length * w


def _gaussian_pump_slice(n_max, signal, pump_beam, z, nodes):
    # Product of two signal envelopes and the pump is polynomial * exp(-c x^2)
    # with complex c; rotating the contour by arg(c)/2 makes Gauss-Hermite exact.
    c = 2.0 * gaussian_exponent(signal, z) + gaussian_exponent(pump_beam, z)
    root = np.sqrt(c)
    t, w = _gauss_hermite(nodes)
    x = t / root
    ps, _ = hg_1d_parts(n_max, signal, x, z)
    pp, _ = hg_1d_parts(0, pump_beam, x, z)
    k1 = (ps * (pp[0] * w / root)) @ ps.T
    return np.kron(k1, k1)


def _sampled_pump_slice(n_max, signal, profile, z, nodes):
    width = float(signal.radius(z)) / np.sqrt(2.0)
    t, w = _gauss_hermite(nodes)
    x = width * t
    wx = width * w * np.exp(t**2)
    u = hg_1d(n_max, signal, x, z)
    pairs = (u[:, None, :] * u[None, :, :]).reshape(-1, nodes)
    alpha = profile.normalised(x, x) * np.outer(wx, wx)
    k4 = (pairs @ alpha @ pairs.T).reshape(n_max + 1, n_max + 1, n_max + 1, n_max + 1)
    d = (n_max + 1) ** 2
    return k4.transpose(0, 2, 1, 3).reshape(d, d)


def _assemble(crystal, pump, basis, z_nodes, transverse_nodes, symmetrize=True):
    signal = basis.beam(crystal.signal_index)
    pump_beam = pump.beam(crystal.effective_pump_index)
    zs, wz = _z_rule(crystal.length, z_nodes)
    d = basis.dimension
    k = np.zeros((d, d), dtype=complex)
    for z, weight in zip(zs, wz):
        if pump.image is None:
            piece = _gaussian_pump_slice(basis.n_max, signal, pump_beam, z, transverse_nodes)
        else:
            piece = _sampled_pump_slice(basis.n_max, signal, pump.image, z, transverse_nodes)
        k += (weight * np.exp(1j * crystal.phase_mismatch * z)) * piece
    k *= crystal.gain_scale * np.sqrt(pump.power)
    return 0.5 * (k + k.T) if symmetrize else k


def build_coupling_matrix(
    crystal: CrystalParams,
    pump: PumpProfile,
    basis: HGBasis,
    z_nodes: int = DEFAULT_Z_NODES,
    transverse_nodes: int | None = None,
    check_convergence: bool = True,
    tol: float = 1e-6,
    symmetrize: bool = True,
) -> CouplingMatrix:
    """Assemble K over ``basis`` for a crystal centred on z = 0.

    ``z_nodes=1`` is the thin-crystal limit: a single plane at the crystal centre
    weighted by the crystal length. With ``check_convergence`` the matrix is
    rebuilt with doubled transverse (and, for a thick crystal, longitudinal)
    node counts and :class:`ConvergenceError` is raised when any entry moves by
    more than ``tol`` relative to the largest entry. ``symmetrize=False``
    returns the raw quadrature result, useful for checking its symmetry.
    """
    if abs(pump.waist_position) > 0.5 * crystal.length:
        raise ValueError("pump waist must lie inside the crystal")
    if z_nodes < 1:
        raise ValueError("z_nodes must be at least 1")
    if transverse_nodes is None:
        transverse_nodes = default_node_count(basis.n_max)
        if pump.image is not None:
            transverse_nodes *= 2
    k = _assemble(crystal, pump, basis, z_nodes, transverse_nodes, symmetrize)
    if check_convergence:
        fine = _assemble(crystal, pump, basis, z_nodes if z_nodes == 1 else 2 * z_nodes, 2 * transverse_nodes)
        scale = np.max(np.abs(fine))
        change = np.max(np.abs(fine - k)) / scale if scale > 0 else 0.0
        if change > tol:
            raise ConvergenceError(
                f"coupling matrix not converged: max entry change {change:.3e} > {tol:g} "
                f"on doubling nodes (z_nodes={z_nodes}, transverse_nodes={transverse_nodes}, "
                f"n_max={basis.n_max})"
            )
    return CouplingMatrix(k, basis, pump.power, z_nodes, transverse_nodes)


@dataclass(frozen=True, eq=False)
class ModeDecomposition:
    """Takagi factors of a coupling matrix.

    ``vectors[:, k]`` holds eigenmode k over the basis; its largest-magnitude
    coefficient is real and positive, which fixes ``angles[k]``.
    """

    gains: np.ndarray
    angles: np.ndarray
    vectors: np.ndarray
    dominant: tuple[ModeIndex, ...]
    basis: HGBasis | None = None

    def __len__(self):
        return len(self.gains)

    def reconstruct(self) -> np.ndarray:
        u = self.vectors
        return (u * (self.gains * np.exp(1j * self.angles))) @ u.T

    def restrict(self, keep: Sequence[int]) -> "ModeDecomposition":
        keep = list(keep)
        return ModeDecomposition(
            self.gains[keep].copy(),
            self.angles[keep].copy(),
            self.vectors[:, keep].copy(),
            tuple(self.dominant[k] for k in keep),
            self.basis,
        )


def _clusters(d, rtol):
    groups = [[0]]
    for i in range(1, len(d)):
        if d[i - 1] - d[i] <= rtol * d[0]:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _takagi_block(a, rtol=1e-9):
    u, d, vh = np.linalg.svd(a)
    if d[0] == 0:
        return d, np.eye(len(d), dtype=complex)
    z = (vh @ u.conj()).T
    roots = [scipy.linalg.sqrtm(z[np.ix_(g, g)]) for g in _clusters(d, rtol)]
    return d, u @ scipy.linalg.block_diag(*roots)


def takagi_decompose(k, symmetry_tol: float = 1e-10) -> ModeDecomposition:
    """Factor a complex symmetric matrix as ``U diag(Lambda e^{i theta}) U^T``.

    ``k`` may be a :class:`CouplingMatrix` or a plain array. The matrix is split
    into the connected blocks of its sparsity pattern (the parity sectors for a
    centred pump) and each block is factored through its SVD. Gains come out
    sorted descending; equal gains are ordered by total HG order of the dominant
    coefficient, then by descending x order.
    """
    basis = k.basis if isinstance(k, CouplingMatrix) else None
    a = np.asarray(k.matrix if isinstance(k, CouplingMatrix) else k, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("coupling matrix must be square")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > symmetry_tol * scale:
        raise ValueError(
            f"matrix is not symmetric: max |K - K^T| = {np.max(np.abs(a - a.T)):.3e} "
            f"exceeds {symmetry_tol:g} relative"
        )
    a = 0.5 * (a + a.T)
    dim = a.shape[0]
    indices = basis.indices if basis is not None else [ModeIndex(p, 0) for p in range(dim)]

    pattern = np.abs(a) > 1e-13 * scale if scale > 0 else np.eye(dim, dtype=bool)
    n_blocks, labels = connected_components(pattern, directed=False)
    gains = np.zeros(dim)
    vectors = np.zeros((dim, dim), dtype=complex)
    col = 0
    for b in range(n_blocks):
        sel = np.flatnonzero(labels == b)
        d, ub = _takagi_block(a[np.ix_(sel, sel)])
        gains[col:col + len(sel)] = d
        vectors[sel, col:col + len(sel)] = ub
        col += len(sel)

    lead = np.argmax(np.abs(vectors), axis=0)
    vectors *= np.exp(-1j * np.angle(vectors[lead, np.arange(dim)]))
    dominant = [indices[p] for p in lead]
    top = gains.max() if dim else 0.0
    rel = np.round(gains / top, 9) if top > 0 else gains
    order = sorted(range(dim), key=lambda i: (-rel[i], dominant[i].order, -dominant[i].m, i))
    gains = gains[order]
    vectors = vectors[:, order]
    dominant = tuple(dominant[i] for i in order)
    diag = np.einsum("pk,pq,qk->k", vectors.conj(), a, vectors.conj())
    angles = np.angle(diag)
    angles[gains == 0] = 0.0
    return ModeDecomposition(gains, angles, vectors, dominant, basis)


def mode_count(dec: ModeDecomposition, cutoff: float = DEFAULT_CUTOFF) -> int:
    """Number of eigenmodes with Lambda_k / Lambda_0 >= cutoff."""
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must lie in (0, 1)")
    if len(dec) == 0 or dec.gains[0] <= 0:
        raise ValueError("decomposition has no pumped mode")
    # tiny slack so exactly degenerate partners of a counted mode are counted too
    return int(np.count_nonzero(dec.gains / dec.gains[0] >= cutoff * (1 - 1e-12)))


@dataclass(frozen=True)
class HGMatch:
    overlap: float
    index: ModeIndex
    waist: float


def _hg_weights(v, basis, waist):
    n = basis.n_max
    o = waist_overlap_matrix(n, waist, n, basis.waist)
    c = o @ v.reshape(n + 1, n + 1) @ o.T
    return np.abs(c) ** 2


def eigenmode_hg_overlap(dec: ModeDecomposition, k: int, span: float = 4.0, samples: int = 49) -> HGMatch:
    """Best |<eigenmode_k | HG_mn(w)>|^2 over single HG indices and waists w.

    The waist is scanned on a log grid over ``[w_basis / span, w_basis * span]``
    and then refined for the winning index.
    """
    if dec.basis is None:
        raise ValueError("decomposition carries no HG basis")
    if not 0 <= k < len(dec):
        raise IndexError(f"eigenmode {k} out of range")
    basis = dec.basis
    v = dec.vectors[:, k]
    grid = basis.waist * np.geomspace(1.0 / span, span, samples)
    scores = [_hg_weights(v, basis, w) for w in grid]
    best = int(np.argmax([s.max() for s in scores]))
    m, n = np.unravel_index(int(np.argmax(scores[best])), scores[best].shape)
    lo = np.log(grid[max(best - 1, 0)])
    hi = np.log(grid[min(best + 1, samples - 1)])
    res = minimize_scalar(
        lambda s: -_hg_weights(v, basis, np.exp(s))[m, n],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    value = -res.fun
    waist = float(np.exp(res.x))
    if value < scores[best][m, n]:
        value, waist = scores[best][m, n], float(grid[best])
    return HGMatch(float(value), ModeIndex(int(m), int(n)), waist)


def optimize_basis_waist(
    crystal: CrystalParams,
    pump: PumpProfile,
    signal_wavelength: float,
    n_max: int,
    z_nodes: int = DEFAULT_Z_NODES,
    tol: float = 1e-7,
) -> float:
    """Signal basis waist maximising Lambda_0, searched over [seed/2, 2 seed]
    with seed sqrt(w_p * l_coh)."""
    l_coh = coherence_length(signal_wavelength, crystal.length, crystal.signal_index)
    seed = np.sqrt(pump.waist * l_coh)

    def negative_gain(w):
        basis = HGBasis(n_max, w, signal_wavelength)
        k = _assemble(crystal, pump, basis, z_nodes, default_node_count(n_max))
        return -np.linalg.norm(k, 2)

    res = minimize_scalar(negative_gain, bounds=(0.5 * seed, 2.0 * seed), method="bounded", options={"xatol": tol})
    return float(res.x)


@dataclass(frozen=True)
class TruncationCheck:
    n_max: int
    n_max_check: int
    max_relative_change: float
    converged: bool


def check_truncation(
    crystal: CrystalParams,
    pump: PumpProfile,
    basis: HGBasis,
    gains: np.ndarray,
    z_nodes: int = DEFAULT_Z_NODES,
    n_modes: int = 11,
    tol: float = TRUNCATION_TOL,
) -> TruncationCheck:
    """Compare the leading gains against a basis enlarged by five orders per axis."""
    wider = basis.with_truncation(basis.n_max + TRUNCATION_STEP)
    k = _assemble(crystal, pump, wider, z_nodes, default_node_count(wider.n_max))
    ref = scipy.linalg.svdvals(k)
    n = min(n_modes, len(gains))
    change = float(np.max(np.abs(ref[:n] - gains[:n]) / gains[:n])) if n else 0.0
    return TruncationCheck(basis.n_max, wider.n_max, change, change < tol)


@dataclass(frozen=True, eq=False)
class EigenmodeSolution:
    coupling: CouplingMatrix
    decomposition: ModeDecomposition
    truncation: TruncationCheck | None
    coherence_length: float
    cooperativity: float

    @property
    def basis(self) -> HGBasis:
        return self.coupling.basis

    _matches: dict = field(default_factory=dict, repr=False)

    def hg_match(self, k: int) -> HGMatch:
        if k not in self._matches:
            self._matches[k] = eigenmode_hg_overlap(self.decomposition, k)
        return self._matches[k]


def solve_eigenmodes(
    crystal: CrystalParams,
    pump: PumpProfile,
    signal_wavelength: float,
    n_max: int = 20,
    basis_waist: float | None = None,
    z_nodes: int = DEFAULT_Z_NODES,
    check: bool = True,
) -> EigenmodeSolution:
    """Optimise the basis waist (unless given), assemble K, factor it and check
    truncation convergence."""
    if basis_waist is None:
        basis_waist = optimize_basis_waist(crystal, pump, signal_wavelength, n_max, z_nodes)
        log.info("optimised basis waist %.4e m", basis_waist)
    basis = HGBasis(n_max, basis_waist, signal_wavelength)
    coupling = build_coupling_matrix(crystal, pump, basis, z_nodes, check_convergence=check)
    dec = takagi_decompose(coupling)
    trunc = check_truncation(crystal, pump, basis, dec.gains, z_nodes) if check else None
    if trunc is not None and not trunc.converged:
        log.warning(
            "truncation n_max=%d not converged: leading gains move by %.2e at n_max=%d",
            n_max, trunc.max_relative_change, trunc.n_max_check,
        )
    l_coh = coherence_length(signal_wavelength, crystal.length, crystal.signal_index)
    return EigenmodeSolution(coupling, dec, trunc, l_coh, cooperativity(pump.waist, l_coh))
