import math

import numpy as np
import pytest
from scipy import stats

from qdirsim.adversary import (
    PRIVACY_BROKEN,
    PRIVACY_HELD,
    AttackReport,
    NoisePolicy,
    blocking_attack,
    compute_marginal_bias,
    ensemble_statistics_attack,
    inject_noise,
    offset_policy,
    photon_angles_histogram,
)
from qdirsim.errors import DomainError, InsufficientDataError
from qdirsim.measurement import ArrivalProcess, MeasurementChannel, sample_events
from qdirsim.state import BiphotonState, gaussian_profile, separable_state

P_Z = 2 * math.pi
SINGLE = MeasurementChannel("narrow_acceptance_single")


def test_zero_bias_for_difference_kernel(kernel_state):
    assert np.max(np.abs(compute_marginal_bias(kernel_state))) < 1e-9


def test_separable_bias_is_marginal_minus_uniform(grid):
    f = gaussian_profile(2.0, 1.0)
    state = separable_state(grid, f, f)
    mass = np.abs(f(grid.q)) ** 2
    mass /= mass.sum()
    dtheta = grid.dq / P_Z
    expected = mass / dtheta - 1 / (grid.n_points * dtheta)
    assert np.max(np.abs(compute_marginal_bias(state) - expected)) < 1e-9 * expected.max()


def _cell_mass(bias, grid):
    dtheta = grid.dq / P_Z
    return (bias + 1 / (grid.n_points * dtheta)) * dtheta


def test_offset_flattens_in_expectation(protocol_state, grid):
    bias = compute_marginal_bias(protocol_state)
    policy = offset_policy(bias, grid)
    signal = _cell_mass(bias, grid)
    mixed = (signal + policy.offset_rate * policy.single_photon_offset) / (1 + policy.offset_rate)
    assert np.max(np.abs(mixed - 1 / grid.n_points)) < 1e-12
    assert policy.residual < 1e-12
    # the rate is minimal: the offset vanishes on the most populated cell
    assert policy.single_photon_offset[np.argmax(signal)] == pytest.approx(0, abs=1e-15)


def test_offset_below_minimal_rate_leaves_residual(protocol_state, grid):
    bias = compute_marginal_bias(protocol_state)
    full = offset_policy(bias, grid)
    partial = offset_policy(bias, grid, offset_rate=full.offset_rate / 2)
    assert partial.residual > 1e-3
    assert partial.single_photon_offset.min() >= 0


def test_offset_is_identity_for_uniform_marginal(kernel_state, grid):
    policy = offset_policy(compute_marginal_bias(kernel_state), grid)
    assert policy.total_rate == 0
    events = sample_events(kernel_state, SINGLE, 100, 1)
    assert inject_noise(events, policy, 1, grid=grid) is events


def test_offset_noise_restores_uniform_histogram(protocol_state, grid):
    events = sample_events(protocol_state, SINGLE, 20_000, 3)
    hist = photon_angles_histogram(events, grid)
    assert stats.chisquare(hist).pvalue < 1e-10
    policy = offset_policy(compute_marginal_bias(protocol_state), grid)
    noisy = inject_noise(events, policy, 3, grid=grid)
    assert stats.chisquare(photon_angles_histogram(noisy, grid)).pvalue > 0.01


def test_background_doubles_stream_deterministically(protocol_state, grid):
    events = sample_events(protocol_state, SINGLE, 10_000, 5)
    policy = NoisePolicy(background_rate=1.0)
    a = inject_noise(events, policy, 9, grid=grid)
    b = inject_noise(events, policy, 9, grid=grid)
    assert len(a) / len(events) == pytest.approx(2.0, rel=0.03)
    assert np.array_equal(a.q1, b.q1) and np.array_equal(a.arrival_slot, b.arrival_slot)


def test_noise_never_touches_signal_events(protocol_state, grid):
    for channel in (SINGLE, MeasurementChannel("recoil_integrating")):
        events = sample_events(protocol_state, channel, 2000, 6)
        noisy = inject_noise(events, NoisePolicy(background_rate=0.5), 6, grid=grid)
        signal = noisy.select(~noisy.is_noise)
        for name in ("q1", "q2", "q_sum", "y_rel", "arrival_slot"):
            assert np.array_equal(getattr(signal, name), getattr(events, name), equal_nan=True)
        assert np.all(np.diff(noisy.arrival_slot) >= 0)


def test_noise_policy_validation():
    with pytest.raises(DomainError):
        NoisePolicy(background_rate=-1)
    with pytest.raises(DomainError):
        NoisePolicy(background_profile=np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        NoisePolicy(offset_rate=1.0)


def test_blocking_attack_holds_for_protocol(default_scenario):
    sc = default_scenario
    report = blocking_attack(sc.state, sc.geometry, sc.mask_width, 10_000, 42)
    assert report.verdict == PRIVACY_HELD
    assert report.details["expected_statistic"] < 0.02


def test_blocking_attack_breaks_narrow_beams(control_scenario):
    sc = control_scenario
    report = blocking_attack(sc.state, sc.geometry, sc.mask_width, 10_000, 42)
    assert report.verdict == PRIVACY_BROKEN
    assert report.statistic > 1.0


def test_blocking_zero_width_mask(default_scenario):
    sc = default_scenario
    report = blocking_attack(sc.state, sc.geometry, 0.0, 10_000, 1)
    assert report.statistic == 0.0
    assert report.details["expected_rates"] == [1.0] * len(report.details["centers"])


def test_blocking_mask_width_domain(default_scenario):
    sc = default_scenario
    with pytest.raises(DomainError):
        blocking_attack(sc.state, sc.geometry, 0.5, 100, 1)


def _mirror(state):
    amp = np.roll(state.amplitude[::-1, ::-1], 1, axis=(0, 1))
    return BiphotonState(state.grid, amp)


def test_blocking_invariant_under_label_swap_and_mirror(default_scenario):
    sc = default_scenario
    base = blocking_attack(sc.state, sc.geometry, sc.mask_width, 10_000, 1)
    swapped = BiphotonState(sc.grid, sc.state.amplitude.T)
    other = blocking_attack(swapped, sc.geometry, sc.mask_width, 10_000, 1)
    assert np.allclose(other.details["expected_rates"], base.details["expected_rates"],
                       atol=1e-12)
    mirrored = blocking_attack(_mirror(sc.state), sc.geometry, sc.mask_width, 10_000, 1)
    assert np.allclose(mirrored.details["expected_rates"][::-1], base.details["expected_rates"],
                       atol=1e-12)


def test_ensemble_attack_breaks_periodic_emission(kernel_state, grid):
    events = sample_events(kernel_state, SINGLE, 5000, 1, ArrivalProcess("periodic", period=3))
    report = ensemble_statistics_attack(events, 10, grid=grid)
    assert report.verdict == PRIVACY_BROKEN
    assert report.details["p_autocorrelation"] == 0.0


def test_ensemble_attack_held_with_offset_noise(protocol_state, grid):
    events = sample_events(protocol_state, SINGLE, 10_000, 2)
    bare = ensemble_statistics_attack(events, 50, grid=grid)
    assert bare.verdict == PRIVACY_BROKEN
    policy = offset_policy(compute_marginal_bias(protocol_state), grid)
    report = ensemble_statistics_attack(inject_noise(events, policy, 2, grid=grid), 50, grid=grid)
    assert report.verdict == PRIVACY_HELD


def test_ensemble_attack_held_on_pure_background(kernel_state, grid):
    events = sample_events(kernel_state, SINGLE, 10_000, 8)
    assert ensemble_statistics_attack(events, 50, grid=grid).verdict == PRIVACY_HELD


def test_ensemble_attack_needs_windows(kernel_state, grid):
    events = sample_events(kernel_state, SINGLE, 20, 1)
    with pytest.raises(InsufficientDataError):
        ensemble_statistics_attack(events, 50, grid=grid)


def test_report_verdict_derived():
    assert AttackReport("blocking", 0.05, 0.1).verdict == PRIVACY_HELD
    assert AttackReport("blocking", 0.1, 0.1).verdict == PRIVACY_BROKEN
    assert AttackReport("ensemble", 0.01, 0.01).verdict == PRIVACY_HELD
    assert AttackReport("ensemble", 0.009, 0.01).to_dict()["verdict"] == PRIVACY_BROKEN
    with pytest.raises(ValueError):
        AttackReport("timing", 0, 0)
