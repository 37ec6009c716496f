import math

import numpy as np
import pytest
from scipy import integrate

from qdirsim import scenario as scn
from qdirsim.geometry import SystemGeometry
from qdirsim.optics import propagate_slice
from qdirsim.state import (
    BiphotonState,
    ImageSpec,
    TransverseGrid,
    gaussian_profile,
    make_difference_correlated_state,
    to_position,
)

P_Z = 2 * math.pi
K = 2 * math.pi
BEAM_GRID = TransverseGrid(4096, 4 * math.pi)
W0 = 4.0            # tight waist: visibly non-paraxial by z = 100
PARAXIAL_W0 = 30.0  # waist where the paraxial closed form holds to < 1e-7 up to z = 100


@pytest.fixture(scope="session")
def grid():
    return TransverseGrid()


@pytest.fixture(scope="session")
def geometry():
    return SystemGeometry(transmitter_separation=0.1, range=1.0, opening_angle_narrow=1e-3,
                          image_separation=4.0)


@pytest.fixture(scope="session")
def protocol_state(grid, geometry):
    return make_difference_correlated_state(grid, 6.0, ImageSpec(), geometry.source_momenta)


@pytest.fixture(scope="session")
def kernel_state(grid):
    """Exact difference kernel: no sum envelope."""
    return make_difference_correlated_state(grid, None, ImageSpec())


@pytest.fixture(scope="session")
def default_scenario():
    return scn.Scenario(scn.load("default_protocol"))


@pytest.fixture(scope="session")
def control_scenario():
    return scn.Scenario(scn.load("control_narrowbeams"))


def brute_force_relative_image(state):
    """Density of ``y1 - y2`` from the full 2-D position amplitude."""
    g = state.grid
    n = g.n_points
    psi = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(state.amplitude)))
    psi *= n * n * g.dq ** 2 / (2 * math.pi)
    p = np.abs(psi) ** 2 * g.dy ** 2
    i = np.arange(n)
    r = (i[:, None] - i[None, :]) % n
    dens = np.bincount(r.ravel(), weights=p.ravel(), minlength=n)
    return np.roll(dens, n // 2) / g.dy


def beam_width(z, w0=W0, grid=BEAM_GRID):
    """1/e^2 intensity radius (twice the intensity std) after propagating a waist-w0 beam."""
    f = np.exp(-grid.q ** 2 * w0 ** 2 / 4)
    psi = to_position(propagate_slice(f, grid.q, z), grid)
    p = np.abs(psi) ** 2
    p /= p.sum()
    mean = np.sum(grid.y * p)
    return 2 * math.sqrt(np.sum((grid.y - mean) ** 2 * p))


def paraxial_width(z, w0=W0, wavelength=1.0):
    return w0 * math.sqrt(1 + (z * wavelength / (math.pi * w0 ** 2)) ** 2)


def exact_width(z, w0=W0):
    """Width from the exact angular-spectrum phase: w^2 = w0^2 + 4 z^2 <q^2 / (k^2 - q^2)>."""
    weight = lambda q: math.exp(-q * q * w0 ** 2 / 2)  # noqa: E731
    lim = 12 / w0
    num = integrate.quad(lambda q: weight(q) * q * q / (K * K - q * q), -lim, lim,
                         epsabs=0, epsrel=1e-13)[0]
    den = integrate.quad(weight, -lim, lim, epsabs=0, epsrel=1e-13)[0]
    return math.sqrt(w0 ** 2 + 4 * z * z * num / den)


def sum_shell_state(grid, q_sum):
    """Pairs whose momenta all add up to ``q_sum`` (nearest grid value)."""
    n = grid.n_points
    t = int(round(q_sum / grid.dq))
    amp = np.zeros((n, n), dtype=complex)
    i = np.arange(n)
    k = t + n - i  # q[i] + q[k] == t * dq
    ok = (k >= 0) & (k < n)
    amp[i[ok], k[ok]] = gaussian_profile(3.0)(grid.q[i[ok]] - grid.q[k[ok]])
    return BiphotonState(grid, amp).normalized()
