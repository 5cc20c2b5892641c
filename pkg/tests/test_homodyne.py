import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multimode_opo.coupling import ModeDecomposition
from multimode_opo.homodyne import (
    LocalOscillator,
    LoProjection,
    estimate_noise_power,
    lo_projection,
    simulate_trace,
    variance_vs_phase,
)
from multimode_opo.modes import ModeIndex, TransverseGrid
from multimode_opo.squeezing import EfficiencyChain, OpoDynamics, squeezing_spectrum, to_decibels
from multimode_opo.workflow import project_lo

GAMMA = math.pi * 4.68e6
OMEGA = 2 * math.pi * 3e6
TRACE = dict(duration=4.0, window=10_000, sample_rate=10e6, n_sweeps=10)


def single_mode():
    dyn = OpoDynamics(GAMMA, 0.6, np.array([1.0]))
    return dyn, LoProjection(np.array([1.0 + 0j]), 0.0)


def test_lo_equal_to_eigenmode_zero(reference_solution):
    sol = reference_solution
    basis = sol.basis
    grid = TransverseGrid.gauss_hermite(basis.waist / math.sqrt(2), 2 * basis.n_max + 10)
    field = basis.field(sol.decomposition.vectors[:, 0], grid.x, grid.y)
    proj = lo_projection(LocalOscillator(field=field, grid=grid), sol.decomposition)
    assert proj.weights[0] == pytest.approx(1.0, abs=1e-10)
    assert proj.residual < 1e-10


def test_lo_outside_truncation_sees_only_vacuum(reference_solution):
    lo = LocalOscillator(mode=ModeIndex(30, 0))
    proj = lo_projection(lo, reference_solution.decomposition)
    assert proj.residual == pytest.approx(1.0, abs=1e-12)


def test_hg10_lo_weight_equals_mode_overlap(reference_solution):
    sol = reference_solution
    match = sol.hg_match(1)
    lo = LocalOscillator(mode=match.index, waist=match.waist)
    proj = lo_projection(lo, sol.decomposition)
    assert proj.weights[1] == pytest.approx(match.overlap, abs=1e-9)
    assert proj.weights[2] < 1e-12


def test_lo_validation():
    with pytest.raises(ValueError):
        LocalOscillator()
    with pytest.raises(ValueError):
        LocalOscillator(mode=ModeIndex(0, 0), field=np.ones((2, 2)))


def test_variance_at_squeezing_angle_and_phase_average():
    dyn, proj = single_mode()
    spec = squeezing_spectrum(dyn, EfficiencyChain(), [OMEGA])
    vm, vp = spec.at(0)
    assert variance_vs_phase(proj, spec, 0.0) == pytest.approx(vm[0])
    assert variance_vs_phase(proj, spec, math.pi / 2) == pytest.approx(vp[0])
    theta = np.linspace(0, 2 * math.pi, 4000, endpoint=False)
    assert np.mean(variance_vs_phase(proj, spec, theta)) == pytest.approx(0.5 * (vm[0] + vp[0]), rel=1e-12)


def test_half_weight_mixing_with_vacuum():
    # V_minus = 0.759, half of the LO power in that mode
    dec = ModeDecomposition(np.array([1.0]), np.array([0.0]), np.eye(1, dtype=complex), (ModeIndex(0, 0),))
    spec = squeezing_spectrum(OpoDynamics(1.0, 0.5, dec), EfficiencyChain(), [0.0])
    spec = type(spec)(spec.omega, spec.modes, np.array([[0.759]]), np.array([[1 / 0.759]]), spec.angles)
    proj = LoProjection(np.array([math.sqrt(0.5) + 0j]), 0.5)
    v = variance_vs_phase(proj, spec, 0.0)
    assert v == pytest.approx(0.8795, abs=1e-12)
    assert to_decibels(v) == pytest.approx(-0.56, abs=0.005)


@settings(max_examples=50, deadline=None)
@given(
    weights=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6),
    angles=st.lists(st.floats(-math.pi, math.pi), min_size=6, max_size=6),
    theta=st.floats(-10.0, 10.0),
)
def test_variance_is_pi_periodic_and_bounded(weights, angles, theta):
    n = len(weights)
    w = np.array(weights) / max(1.0, sum(weights))
    gains = np.linspace(1.0, 0.2, n)
    dec = ModeDecomposition(gains, np.array(angles[:n]), np.eye(n, dtype=complex), (ModeIndex(0, 0),) * n)
    spec = squeezing_spectrum(OpoDynamics(1.0, 0.7, dec), EfficiencyChain(0.8), [0.5])
    proj = LoProjection(np.sqrt(w).astype(complex), 1.0 - w.sum())
    v = variance_vs_phase(proj, spec, theta)
    assert v == pytest.approx(variance_vs_phase(proj, spec, theta + math.pi), rel=1e-12)
    vm, vp = spec.at(0)
    assert vm.min() - 1e-12 <= v <= vp.max() + 1e-12


def test_pump_off_windows_sit_at_shot_noise():
    dyn, proj = single_mode()
    trace = simulate_trace(proj, dyn.with_pump_ratio(0.0), EfficiencyChain(), OMEGA, seed=5, **TRACE)
    n = trace.window
    dev = np.abs(trace.variances - 1.0)
    # a window's variance has relative spread sqrt(2/N); 3/sqrt(N) is 2.1 of those
    assert np.mean(dev <= 3 / math.sqrt(n)) >= 0.95
    assert np.all(dev <= 6 * math.sqrt(2 / n))


def test_trace_is_reproducible():
    dyn, proj = single_mode()
    a = simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=11, duration=0.4, window=10_000)
    b = simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=11, duration=0.4, window=10_000)
    c = simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=12, duration=0.4, window=10_000)
    assert a.variances.tobytes() == b.variances.tobytes()
    assert a.variances.tobytes() != c.variances.tobytes()


def test_trace_validation():
    dyn, proj = single_mode()
    with pytest.raises(ValueError):
        simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=1, duration=1.0, window=50)
    with pytest.raises(ValueError):
        simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=1, duration=1.0, window=1000, n_sweeps=1)


def test_estimate_needs_calibration_segment():
    dyn, proj = single_mode()
    trace = simulate_trace(proj, dyn, EfficiencyChain(), OMEGA, seed=1, duration=0.4, window=10_000)
    no_cal = type(trace)(trace.times, trace.phases, trace.variances, trace.expected,
                         np.zeros_like(trace.calibration), trace.seed, trace.window, trace.sweep_period)
    with pytest.raises(ValueError):
        estimate_noise_power(no_cal)


def test_pump_off_bins_are_at_zero_db():
    dyn, proj = single_mode()
    est = estimate_noise_power(simulate_trace(proj, dyn.with_pump_ratio(0.0), EfficiencyChain(), OMEGA,
                                              seed=3, **TRACE))
    assert np.mean((est.ci_low <= 1.0) & (1.0 <= est.ci_high)) >= 0.9
    assert np.max(np.abs(est.mean_db)) < 0.05


def test_single_mode_extremes_follow_the_model():
    dyn, proj = single_mode()
    eff = EfficiencyChain(0.6)
    est = estimate_noise_power(simulate_trace(proj, dyn, eff, OMEGA, seed=4, **TRACE))
    inside = (est.ci_low <= est.expected) & (est.expected <= est.ci_high)
    assert np.mean(inside) >= 0.9
    spec = squeezing_spectrum(dyn, eff, [OMEGA])
    vm, vp = spec.at(0)
    # a bin spans 10 degrees, so its average sits within (V+ - V-) sin^2(10 deg) of an extreme
    slack = (vp[0] - vm[0]) * math.sin(math.radians(10)) ** 2
    assert vm[0] <= est.expected.min() <= vm[0] + slack
    assert vp[0] - slack <= est.expected.max() <= vp[0]
    j, i = np.argmin(est.mean), np.argmax(est.mean)
    assert est.ci_low[j] - 0.01 <= est.expected.min() <= est.ci_high[j] + 0.01
    assert abs(est.mean[i] - est.expected.max()) <= 3 * (est.ci_high[i] - est.mean[i])


def test_calibrated_fundamental_minimum(reference_cfg, reference_solution, reference_op):
    proj = project_lo(reference_cfg, reference_solution, ModeIndex(0, 0))
    trace = simulate_trace(proj, reference_op.dynamics, reference_op.efficiency, reference_op.omega, seed=7, **TRACE)
    est = estimate_noise_power(trace)
    n = trace.window
    assert est.mean.min() == pytest.approx(10 ** (-1.2 / 10), abs=3 * 0.759 * math.sqrt(2 / n))


def test_three_lo_ladder_matches_model(reference_cfg, reference_solution, reference_op):
    theta = np.linspace(0, math.pi, 2001)
    spec = squeezing_spectrum(reference_op.dynamics, reference_op.efficiency, [reference_op.omega])
    for i, mode in enumerate(reference_cfg.homodyne.lo_modes):
        proj = project_lo(reference_cfg, reference_solution, mode)
        est = estimate_noise_power(simulate_trace(proj, reference_op.dynamics, reference_op.efficiency, reference_op.omega,
                                                  seed=100 + i, **TRACE))
        model_min = to_decibels(variance_vs_phase(proj, spec, theta).min())
        assert est.min_db == pytest.approx(model_min, abs=0.1)
