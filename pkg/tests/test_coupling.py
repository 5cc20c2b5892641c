import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from multimode_opo.coupling import (
    ConvergenceError,
    CrystalParams,
    HGBasis,
    ModeDecomposition,
    PumpProfile,
    SampledPump,
    build_coupling_matrix,
    coherence_length,
    cooperativity,
    eigenmode_hg_overlap,
    mode_count,
    solve_eigenmodes,
    takagi_decompose,
)
from multimode_opo.modes import ModeIndex, hg_1d, waist_overlap_matrix

LAM_S, LAM_P = 1064e-9, 532e-9
CRYSTAL = CrystalParams(10e-3, 1.8)
PUMP = PumpProfile(120e-6, LAM_P)


def random_symmetric(rng, n):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return x + x.T


# --- coherence length -------------------------------------------------------

def test_coherence_length_reference_value():
    assert coherence_length(LAM_S, 10e-3, 1.8) == pytest.approx(43.4e-6, abs=0.1e-6)


def test_coherence_length_short_crystal():
    assert coherence_length(LAM_S, 2.5e-3, 1.8) == pytest.approx(21.7e-6, abs=0.05e-6)


def test_coherence_length_square_root_scaling():
    assert coherence_length(LAM_S, 40e-3, 1.8) == pytest.approx(2 * coherence_length(LAM_S, 10e-3, 1.8))


def test_cooperativity_reference():
    assert cooperativity(120e-6, 43.377e-6) == pytest.approx(7.65, abs=0.01)


# --- coupling matrix --------------------------------------------------------

def test_plane_wave_thin_crystal_is_proportional_to_identity():
    basis = HGBasis(10, 60e-6, LAM_S)
    k = build_coupling_matrix(CRYSTAL, PumpProfile(1.0, LAM_P), basis, z_nodes=1, check_convergence=False).matrix
    np.testing.assert_allclose(k / k[0, 0], np.eye(basis.dimension), atol=1e-6)


def brute_force_slice(n_max, signal, pump_beam, z):
    # plain trapezoid on a wide real grid; no contour rotation
    x = np.linspace(-12 * signal.waist_radius, 12 * signal.waist_radius, 6001)
    u = hg_1d(n_max, signal, x, z)
    p = hg_1d(0, pump_beam, x, z)[0]
    k1 = trapezoid(u[:, None, :] * u[None, :, :] * p, x, axis=-1)
    return np.kron(k1, k1)


def test_thick_crystal_matrix_matches_brute_force_quadrature():
    basis = HGBasis(4, 55e-6, LAM_S)
    k = build_coupling_matrix(CRYSTAL, PUMP, basis).matrix
    signal = basis.beam(CRYSTAL.signal_index)
    pump_beam = PUMP.beam(CRYSTAL.effective_pump_index)
    t, w = np.polynomial.legendre.leggauss(33)
    ref = sum(0.5 * CRYSTAL.length * wi * brute_force_slice(4, signal, pump_beam, 0.5 * CRYSTAL.length * ti)
              for ti, wi in zip(t, w))
    assert np.max(np.abs(k - ref)) / np.max(np.abs(ref)) < 1e-9


def test_thin_crystal_factorises():
    basis = HGBasis(8, 60e-6, LAM_S)
    k = build_coupling_matrix(CRYSTAL, PUMP, basis, z_nodes=1).matrix
    n = basis.n_max + 1
    k4 = k.reshape(n, n, n, n)
    kx = k4[:, 0, :, 0] / np.sqrt(k[0, 0])
    np.testing.assert_allclose(k, np.kron(kx, kx), atol=1e-12 * np.max(np.abs(k)))


def test_parity_selection_and_symmetry(reference_solution):
    k = reference_solution.coupling.matrix
    idx = reference_solution.basis.indices
    for p, a in enumerate(idx):
        for q, b in enumerate(idx):
            if (a.m + b.m) % 2 or (a.n + b.n) % 2:
                assert k[p, q] == 0 or abs(k[p, q]) < 1e-12 * abs(k[0, 0])
    raw = build_coupling_matrix(CRYSTAL, PUMP, reference_solution.basis, check_convergence=False,
                                symmetrize=False).matrix
    assert np.max(np.abs(raw - raw.T)) <= 1e-12 * np.max(np.abs(raw))


def test_sampled_pump_matches_gaussian_in_thin_crystal():
    x = np.linspace(-600e-6, 600e-6, 801)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    image = SampledPump(x, x, np.exp(-(xx**2 + yy**2) / PUMP.waist**2) + 0j)
    basis = HGBasis(6, 60e-6, LAM_S)
    kg = build_coupling_matrix(CRYSTAL, PUMP, basis, z_nodes=1, check_convergence=False).matrix
    ks = build_coupling_matrix(CRYSTAL, PumpProfile(PUMP.waist, LAM_P, image=image), basis, z_nodes=1,
                               check_convergence=False).matrix
    assert np.max(np.abs(kg - ks)) / np.max(np.abs(kg)) < 1e-4


def test_under_resolved_quadrature_raises():
    with pytest.raises(ConvergenceError):
        build_coupling_matrix(CRYSTAL, PUMP, HGBasis(10, 60e-6, LAM_S), transverse_nodes=6)


def test_pump_waist_outside_crystal_is_rejected():
    with pytest.raises(ValueError):
        build_coupling_matrix(CRYSTAL, PumpProfile(120e-6, LAM_P, waist_position=6e-3), HGBasis(2, 60e-6, LAM_S))


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(0.01, 100.0))
def test_gains_scale_with_pump_amplitude(scale):
    basis = HGBasis(6, 60e-6, LAM_S)
    g1 = takagi_decompose(build_coupling_matrix(CRYSTAL, PUMP, basis, check_convergence=False)).gains
    strong = PumpProfile(PUMP.waist, LAM_P, power=scale)
    g2 = takagi_decompose(build_coupling_matrix(CRYSTAL, strong, basis, check_convergence=False)).gains
    np.testing.assert_allclose(g2, math.sqrt(scale) * g1, rtol=1e-10, atol=1e-12 * g1[0])


# --- Takagi -----------------------------------------------------------------

def test_takagi_diagonal():
    dec = takagi_decompose(np.diag([2.0, 1.0]).astype(complex))
    np.testing.assert_allclose(dec.gains, [2.0, 1.0])
    np.testing.assert_allclose(dec.angles, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(np.abs(dec.vectors), np.eye(2))


def test_takagi_sign_becomes_phase():
    dec = takagi_decompose(np.diag([1.0, -1.0]).astype(complex))
    np.testing.assert_allclose(dec.gains, [1.0, 1.0])
    assert sorted(np.mod(dec.angles, 2 * np.pi)) == pytest.approx([0.0, np.pi])


def test_takagi_random_8x8():
    a = random_symmetric(np.random.default_rng(8), 8)
    dec = takagi_decompose(a)
    assert np.linalg.norm(a - dec.reconstruct()) / np.linalg.norm(a) < 1e-10


def test_takagi_with_repeated_singular_values():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)))
    a = q @ np.diag([2.0, 1.0, 1.0, 1.0, 0.0]) @ q.T
    dec = takagi_decompose(a)
    np.testing.assert_allclose(dec.gains, [2, 1, 1, 1, 0], atol=1e-12)
    assert np.max(np.abs(a - dec.reconstruct())) < 1e-12


def test_takagi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        takagi_decompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 36), seed=st.integers(0, 2**32 - 1))
def test_takagi_properties(n, seed):
    a = random_symmetric(np.random.default_rng(seed), n)
    dec = takagi_decompose(a)
    u = dec.vectors
    assert np.max(np.abs(a - dec.reconstruct())) < 1e-10
    np.testing.assert_allclose(u.conj().T @ u, np.eye(n), atol=1e-10)
    assert np.all(dec.gains >= 0)
    assert np.all(np.diff(dec.gains) <= 1e-12 * max(dec.gains[0], 1.0))


# --- mode count and shapes --------------------------------------------------

def test_mode_count_edge_cases():
    d = 9
    flat = ModeDecomposition(np.ones(d), np.zeros(d), np.eye(d, dtype=complex), (ModeIndex(0, 0),) * d)
    assert mode_count(flat) == d
    single = ModeDecomposition(np.r_[1.0, np.zeros(d - 1)], np.zeros(d), np.eye(d, dtype=complex),
                               (ModeIndex(0, 0),) * d)
    assert mode_count(single) == 1


def test_reference_configuration_ladder(reference_solution):
    dec = reference_solution.decomposition
    ratio = dec.gains / dec.gains[0]
    # ties within 1e-9 are ordered by HG index, not by magnitude
    assert np.all(np.diff(ratio) <= 1e-9)
    assert 5 <= mode_count(dec) <= 9
    assert ratio[1] == pytest.approx(ratio[2], rel=1e-9)
    assert [str(i) for i in dec.dominant[:3]] == ["TEM00", "TEM10", "TEM01"]
    assert reference_solution.truncation.converged


def test_reference_configuration_hg_overlaps(reference_solution):
    for k in range(3):
        assert reference_solution.hg_match(k).overlap >= 0.995


def test_overlap_is_exact_for_hg_diagonal_kernel():
    # separable kernel diagonal in HG modes of waist w': its eigenmodes are
    # exactly those HG modes, whatever basis waist carries them
    n, w = 20, 60e-6
    w_true = 1.15 * w
    o = waist_overlap_matrix(n, w, n, w_true)
    kx = (o * 0.6 ** np.arange(n + 1)) @ o.T
    dec = takagi_decompose(np.kron(kx, kx))
    dec = ModeDecomposition(dec.gains, dec.angles, dec.vectors, dec.dominant, HGBasis(n, w, LAM_S))
    match = eigenmode_hg_overlap(dec, 0)
    assert 1.0 - match.overlap < 1e-6
    assert match.waist == pytest.approx(w_true, rel=1e-5)
    assert match.index == ModeIndex(0, 0)


def test_mismatched_basis_waist_recovers_mode_shapes(reference_solution):
    sol = solve_eigenmodes(CRYSTAL, PUMP, LAM_S, 20, basis_waist=2 * reference_solution.basis.waist, check=False)
    for k in range(3):
        got = sol.hg_match(k)
        assert got.overlap >= 0.995
        assert got.overlap == pytest.approx(reference_solution.hg_match(k).overlap, abs=1e-3)
