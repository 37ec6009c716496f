import math

import numpy as np
import pytest
from conftest import PARAXIAL_W0, W0, beam_width, exact_width, paraxial_width, sum_shell_state

from qdirsim.errors import DomainError, NullStateError
from qdirsim.metrics import state_contrast
from qdirsim.optics import (
    TransferFunction,
    apply_aperture,
    apply_chain,
    apply_mask,
    mask_transmission,
    propagate,
    propagate_slice,
    propagation_kernel,
    single_arm_bandlimit,
    sum_momentum_range,
)
from qdirsim.state import (
    BiphotonState,
    ImageSpec,
    TransverseGrid,
    conditional,
    separable_state,
)

K = 2 * math.pi


def test_kernel_unit_modulus_and_evanescent_cut():
    q = np.linspace(-3 * K, 3 * K, 1001)
    h = propagation_kernel(q, 5.0)
    prop = np.abs(q) <= K
    assert np.allclose(np.abs(h[prop]), 1.0, atol=1e-15)
    assert np.all(h[~prop] == 0)
    assert np.all(propagation_kernel(q, 0.0) == 1)


@pytest.mark.parametrize("z", [1.0, 10.0, 100.0])
def test_beam_width_matches_exact_angular_spectrum_oracle(z):
    assert beam_width(z) == pytest.approx(exact_width(z), rel=1e-9)


@pytest.mark.parametrize("z", [1.0, 10.0, 100.0])
def test_beam_width_paraxial_closed_form(z):
    assert abs(beam_width(z, PARAXIAL_W0) / paraxial_width(z, PARAXIAL_W0) - 1) < 1e-6
    # the beam does spread, by far more than the tolerance
    assert beam_width(z, PARAXIAL_W0) / PARAXIAL_W0 - 1 > 1e-4 * (z / 100) ** 2


def test_tight_beam_departs_from_paraxial_form():
    assert abs(beam_width(1.0) / paraxial_width(1.0) - 1) < 1e-6
    assert abs(beam_width(100.0) / paraxial_width(100.0) - 1) > 1e-3
    assert beam_width(0.0) == pytest.approx(W0, rel=1e-12)


def test_evanescent_slice_vanishes():
    grid = TransverseGrid(256, 8 * math.pi)
    field = np.where(np.abs(np.abs(grid.q) - 1.2 * K) < grid.dq, 1.0 + 0j, 0)
    assert np.any(field != 0)
    assert np.all(propagate_slice(field, grid.q, 1e-3) == 0)


def test_propagate_zero_distance_identity(protocol_state):
    assert propagate(protocol_state, 0.0) is protocol_state


def test_propagate_semigroup(protocol_state):
    a = propagate(propagate(protocol_state, 3.0), 7.5)
    b = propagate(protocol_state, 10.5)
    assert np.max(np.abs(a.amplitude - b.amplitude)) < 1e-9
    assert a.transmitted == pytest.approx(b.transmitted, abs=1e-12)


def test_propagate_preserves_norm_on_propagating_modes(protocol_state, grid):
    out = propagate(protocol_state, 2.0)
    keep = np.abs(grid.q) <= K
    inside = np.sum(np.abs(protocol_state.amplitude[np.ix_(keep, keep)]) ** 2) * grid.dq ** 2
    assert out.norm() == pytest.approx(inside, abs=1e-12)
    assert out.transmitted == pytest.approx(inside, abs=1e-12)


def test_propagate_negative_distance(protocol_state):
    with pytest.raises(DomainError):
        propagate(protocol_state, -1.0)


def test_wide_aperture_is_identity(protocol_state, grid):
    out = apply_aperture(protocol_state, "signal", grid.q_max / (2 * math.pi))
    assert np.max(np.abs(out.amplitude - protocol_state.amplitude)) < 1e-12
    assert out.transmitted == 1.0


def test_aperture_idempotent(protocol_state):
    once = apply_aperture(protocol_state, "signal", 0.25)
    twice = apply_aperture(once, "signal", 0.25)
    assert np.array_equal(once.amplitude != 0, twice.amplitude != 0)
    assert np.max(np.abs(once.amplitude - twice.amplitude)) < 1e-15
    assert twice.transmitted == pytest.approx(once.transmitted, rel=1e-12)


def test_aperture_destroys_image(protocol_state):
    image = ImageSpec()
    assert state_contrast(apply_aperture(protocol_state, "signal", 0.1), image) < 0.1
    assert state_contrast(apply_aperture(protocol_state, "signal", 2.0), image) > 0.9


def test_aperture_never_sharpens_partner(protocol_state, grid):
    cut = apply_aperture(protocol_state, "signal", 0.5)

    def width(c):
        m = np.sum(grid.q * c) * grid.dq
        return math.sqrt(np.sum((grid.q - m) ** 2 * c) * grid.dq)

    for q1 in (-2.0, 0.0, 1.5):
        assert width(conditional(cut, q1)) >= width(conditional(protocol_state, q1)) - grid.dq


def test_aperture_rejects_bad_cutoff(protocol_state):
    with pytest.raises(DomainError):
        apply_aperture(protocol_state, "signal", 0.0)


def test_sum_momentum_range_separable_bound(grid):
    bounded = lambda q: np.where(np.abs(q) <= K, np.exp(-q ** 2 / 50), 0)  # noqa: E731
    state = separable_state(grid, bounded, bounded)
    assert sum_momentum_range(state) <= 2 * K + 1e-12


def test_sum_momentum_beyond_single_photon_bound(grid):
    state = sum_shell_state(grid, 1.5 * K)
    assert sum_momentum_range(state) == pytest.approx(1.5 * K, abs=grid.dq)
    after = propagate(state, 5.0)
    assert sum_momentum_range(after) == pytest.approx(1.5 * K, abs=grid.dq)
    assert single_arm_bandlimit() == K
    support = np.nonzero(after.amplitude)
    assert np.all(np.abs(grid.q[support[0]]) <= K)
    assert np.all(np.abs(grid.q[support[1]]) <= K)


def test_sum_momentum_range_null(grid):
    with pytest.raises(NullStateError):
        sum_momentum_range(BiphotonState(grid, np.zeros((grid.n_points, grid.n_points))))


def test_mask_full_range_is_null(protocol_state, grid):
    with pytest.raises(NullStateError):
        apply_mask(protocol_state, "both", (-5.0, 5.0))
    assert mask_transmission(protocol_state, "both", (-5.0, 5.0)) == 0.0


def test_mask_zero_width_identity(protocol_state):
    out = apply_mask(protocol_state, "both", (0.03125, 0.03125))
    assert np.max(np.abs(out.amplitude - protocol_state.amplitude)) < 1e-12
    assert out.transmitted == 1.0


def test_mask_on_either_source_drops_rate_equally(protocol_state, geometry):
    full = geometry.opening_angle_full
    drops = [1 - mask_transmission(protocol_state, "both", (a - full / 2, a + full / 2))
             for a in geometry.source_angles]
    assert abs(drops[0] - drops[1]) < 0.1 * max(drops)


def test_mask_interval_outside_grid_blocks_nothing(protocol_state):
    out = apply_mask(protocol_state, "both", (5.0, 6.0))
    assert out.transmitted == 1.0
    with pytest.raises(DomainError):
        apply_mask(protocol_state, "both", (float("nan"), 1.0))


def test_transfer_chain(protocol_state):
    chain = [TransferFunction("free_propagation", distance=1.0),
             TransferFunction("hard_aperture", arm="signal", cutoff=0.5),
             TransferFunction("mask", arm="idler", interval=(0.2, 0.3))]
    out = apply_chain(protocol_state, chain)
    expected = apply_mask(apply_aperture(propagate(protocol_state, 1.0), "signal", 0.5),
                          "idler", (0.2, 0.3))
    assert np.array_equal(out.amplitude, expected.amplitude)
    assert [TransferFunction(**tf.to_dict()) for tf in chain] == chain


def test_transfer_function_validation():
    with pytest.raises(ValueError):
        TransferFunction("lens")
    with pytest.raises(ValueError):
        TransferFunction("hard_aperture")
    with pytest.raises(ValueError):
        TransferFunction("mask", arm="left", interval=(0, 1))
