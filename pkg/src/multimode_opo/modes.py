"""Hermite-Gauss transverse modes.

Fields follow the ``exp(i(kz - wt))`` convention with the carrier omitted, so a
mode at distance ``z`` from its waist carries the envelope phase
``exp(+i k r^2 / 2R) * exp(-i (m + n + 1) * psi)``. Every mode is normalised to
unit power; beam powers are tracked separately as scalar multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from numpy.polynomial.hermite import hermgauss

__all__ = [
    "BeamGeometry",
    "ModeIndex",
    "TransverseGrid",
    "default_node_count",
    "gaussian_exponent",
    "gouy_phase",
    "hermite_functions",
    "hg_1d",
    "hg_1d_parts",
    "hg_field",
    "overlap",
    "sample_mode",
    "waist_overlap_matrix",
]


@dataclass(frozen=True)
class BeamGeometry:
    """Gaussian beam parameters.

    ``index`` is the refractive index of the medium the beam propagates in; the
    Rayleigh range is computed with the in-medium wavelength.
    """

    waist_radius: float
    wavelength: float
    waist_position: float = 0.0
    index: float = 1.0

    def __post_init__(self):
        if not self.waist_radius > 0:
            raise ValueError(f"waist_radius must be positive, got {self.waist_radius}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not self.index > 0:
            raise ValueError(f"index must be positive, got {self.index}")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi * self.index / self.wavelength

    @property
    def rayleigh_range(self) -> float:
        return np.pi * self.waist_radius**2 * self.index / self.wavelength

    def radius(self, z):
        """Beam radius w(z) (1/e^2 intensity)."""
        zeta = (np.asarray(z) - self.waist_position) / self.rayleigh_range
        return self.waist_radius * np.sqrt(1.0 + zeta**2)

    def inverse_curvature(self, z):
        """1/R(z); zero at the waist."""
        dz = np.asarray(z) - self.waist_position
        return dz / (dz**2 + self.rayleigh_range**2)

    def gouy(self, z):
        """Single-mode Gouy angle arctan((z - z0)/z_R)."""
        return np.arctan((np.asarray(z) - self.waist_position) / self.rayleigh_range)

    def rescaled(self, waist_radius: float) -> "BeamGeometry":
        return BeamGeometry(waist_radius, self.wavelength, self.waist_position, self.index)


@dataclass(frozen=True, order=True)
class ModeIndex:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ValueError(f"mode indices must be nonnegative, got ({self.m}, {self.n})")

    @property
    def order(self) -> int:
        return self.m + self.n

    def __str__(self):
        return f"TEM{self.m}{self.n}"


def hermite_functions(n_max: int, t):
    """Hermite polynomials scaled by ``1/sqrt(2^m m! sqrt(pi))``, orders 0..n_max.

    Uses the three-term recurrence on the normalised polynomials, which stays
    finite far beyond where ``H_m`` itself overflows. Complex ``t`` is allowed.
    Returns an array of shape ``(n_max + 1,) + t.shape``.
    """
    t = np.asarray(t)
    dtype = np.result_type(t.dtype, np.float64)
    h = np.empty((n_max + 1,) + t.shape, dtype=dtype)
    h[0] = np.pi**-0.25
    if n_max >= 1:
        h[1] = np.sqrt(2.0) * t * h[0]
    for m in range(1, n_max):
        h[m + 1] = np.sqrt(2.0 / (m + 1)) * t * h[m] - np.sqrt(m / (m + 1)) * h[m - 1]
    return h


def gaussian_exponent(beam: BeamGeometry, z=0.0) -> complex:
    """``a`` in ``exp(-a x^2)`` for the beam envelope at plane ``z``."""
    w = float(beam.radius(z))
    return 1.0 / w**2 - 0.5j * beam.wavenumber * float(beam.inverse_curvature(z))


def hg_1d_parts(n_max: int, beam: BeamGeometry, x, z=0.0):
    """Split the 1-D modes at plane ``z`` into ``P_m(x) * exp(-a x^2)``.

    Returns ``(P, a)`` with ``P`` of shape ``(n_max + 1,) + x.shape`` and the
    complex Gaussian exponent ``a`` (``Re a > 0``). ``P`` is polynomial in x, so
    integrands built from these parts can be integrated exactly by Gauss-Hermite
    quadrature along a rotated contour.
    """
    w = float(beam.radius(z))
    psi = float(beam.gouy(z))
    a = gaussian_exponent(beam, z)
    h = hermite_functions(n_max, np.sqrt(2.0) * np.asarray(x) / w)
    phase = np.exp(-1j * (np.arange(n_max + 1) + 0.5) * psi)
    shape = (n_max + 1,) + (1,) * np.ndim(x)
    return (2.0**0.25 / np.sqrt(w)) * h * phase.reshape(shape), a


def hg_1d(n_max: int, beam: BeamGeometry, x, z=0.0):
    """Unit-normalised 1-D Hermite-Gauss envelopes u_0..u_{n_max} at (x, z)."""
    p, a = hg_1d_parts(n_max, beam, x, z)
    return p * np.exp(-a * np.asarray(x) ** 2)


def hg_field(idx: ModeIndex, beam: BeamGeometry, x, y, z=0.0):
    """Complex HG_mn envelope at (x, y, z), including Gouy phase and curvature."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ux = hg_1d(idx.m, beam, x, z)[idx.m]
    uy = hg_1d(idx.n, beam, y, z)[idx.n]
    return ux * uy


def gouy_phase(idx: ModeIndex, beam: BeamGeometry, z) -> float:
    """(m + n + 1) * arctan((z - z0) / z_R)."""
    return (idx.order + 1) * beam.gouy(z)


def default_node_count(n_max: int) -> int:
    return 2 * (n_max + 1) + 16


@lru_cache(maxsize=64)
def _gauss_hermite(nodes: int):
    t, w = hermgauss(nodes)
    t.flags.writeable = False
    w.flags.writeable = False
    return t, w


@dataclass(frozen=True, eq=False)
class TransverseGrid:
    """Tensor-product Gauss-Hermite rule over the transverse plane.

    Nodes sit at ``width * t_i`` and the weights absorb ``exp(t_i^2)``, so that
    ``sum(W * f)`` approximates ``integral f dx dy`` for any integrand. The rule
    is exact for polynomial x ``exp(-r^2 / width^2)`` integrands.
    """

    x: np.ndarray
    y: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    width: float
    nodes: int = field(default=0)

    @classmethod
    def gauss_hermite(cls, width: float, nodes: int) -> "TransverseGrid":
        if not width > 0:
            raise ValueError("grid width must be positive")
        if nodes < 1:
            raise ValueError("need at least one quadrature node")
        t, w = _gauss_hermite(nodes)
        x = width * t
        wx = width * w * np.exp(t**2)
        return cls(x, x, wx, wx, float(width), nodes)

    @classmethod
    def for_product(cls, beams: Iterable[BeamGeometry], z: float = 0.0, nodes: int = 58):
        """Grid matched to the envelope of a product of Gaussian fields at ``z``.

        For ``|u|^2`` pass the beam twice. The scaling width satisfies
        ``1/width^2 = sum_i 1/w_i(z)^2``.
        """
        inv = sum(1.0 / float(b.radius(z)) ** 2 for b in beams)
        return cls.gauss_hermite(1.0 / np.sqrt(inv), nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.size, self.y.size)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.wx, self.wy)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")


def sample_mode(idx: ModeIndex, beam: BeamGeometry, grid: TransverseGrid, z: float = 0.0):
    """HG_mn sampled on ``grid`` (shape ``grid.shape``)."""
    ux = hg_1d(idx.m, beam, grid.x, z)[idx.m]
    uy = hg_1d(idx.n, beam, grid.y, z)[idx.n]
    return np.outer(ux, uy)


def overlap(field_a, field_b, grid: TransverseGrid) -> complex:
    """Quadrature estimate of the integral of conj(A) * B over the plane."""
    a = np.asarray(field_a)
    b = np.asarray(field_b)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise ValueError(
            f"fields {a.shape} and {b.shape} are not sampled on the grid {grid.shape}"
        )
    return complex(np.sum(grid.weights * np.conj(a) * b))


def waist_overlap_matrix(n_rows: int, waist_rows: float, n_cols: int, waist_cols: float):
    """1-D overlaps ``<HG_i(waist_rows) | HG_j(waist_cols)>`` at a common waist plane.

    Both families are real there, so a real Gauss-Hermite rule scaled to the
    product envelope integrates every entry exactly.
    """
    width = 1.0 / np.sqrt(1.0 / waist_rows**2 + 1.0 / waist_cols**2)
    t, w = _gauss_hermite(n_rows + n_cols + 2)
    x = width * t
    rows = hermite_functions(n_rows, np.sqrt(2.0) * x / waist_rows) * (2.0**0.25 / np.sqrt(waist_rows))
    cols = hermite_functions(n_cols, np.sqrt(2.0) * x / waist_cols) * (2.0**0.25 / np.sqrt(waist_cols))
    return (rows * (width * w)) @ cols.T
