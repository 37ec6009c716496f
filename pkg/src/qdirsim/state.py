"""Discretised biphoton joint amplitudes on a 1-D transverse grid.

A state is a complex array ``amp[i, k]`` over the transverse momenta
``(q1[i], q2[k])`` of the two photons, normalised so that
``sum |amp|**2 * dq**2 == 1``.  Axis 0 is the *signal* arm (arm 1), axis 1
the *idler* arm (arm 2).

Momentum and position axes are DFT duals: ``dq * dy == 2 pi / n``.  The
position representation uses the kernel ``exp(+i q y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .errors import AliasingError, ConditioningError, DomainError, NullStateError
from .geometry import WAVELENGTH

ARMS = ("signal", "idler")
NORM_TOL = 1e-9


def arm_axes(arm):
    """Map an arm label to the amplitude axes it addresses."""
    key = str(arm).lower()
    if key in ("signal", "1", "s"):
        return (0,)
    if key in ("idler", "2", "i"):
        return (1,)
    if key in ("both", "pair"):
        return (0, 1)
    raise ValueError(f"unknown arm {arm!r}; expected signal, idler or both")


@dataclass(frozen=True)
class TransverseGrid:
    """Momentum grid ``q = (j - n/2) * dq`` for ``j in range(n)``, spanning ``[-q_max, q_max)``."""

    n_points: int = 256
    q_max: float = 8 * math.pi

    def __post_init__(self):
        n = self.n_points
        if n < 16 or n & (n - 1):
            raise DomainError(f"n_points must be a power of two >= 16, got {n}")
        if not self.q_max > 0:
            raise DomainError("q_max must be positive")

    @property
    def dq(self):
        return 2 * self.q_max / self.n_points

    @property
    def dy(self):
        return math.pi / self.q_max

    @property
    def position_extent(self):
        return self.n_points * self.dy

    @property
    def offsets(self):
        return np.arange(self.n_points) - self.n_points // 2

    @property
    def q(self):
        return self.offsets * self.dq

    @property
    def y(self):
        return self.offsets * self.dy

    def index_of_q(self, q):
        """Nearest grid index for momentum ``q`` (clipped to the grid)."""
        j = np.rint(np.asarray(q) / self.dq).astype(int) + self.n_points // 2
        return np.clip(j, 0, self.n_points - 1)

    def index_of_y(self, y):
        j = np.rint(np.asarray(y) / self.dy).astype(int) + self.n_points // 2
        return np.clip(j, 0, self.n_points - 1)


@dataclass(frozen=True)
class ImageSpec:
    """Gaussian dots in the relative (or centre-of-mass) position coordinate.

    ``dot_width`` is the standard deviation of each dot's intensity.
    """

    dot_positions: tuple = (-2.0, 2.0)
    dot_width: float = 0.5 * WAVELENGTH
    encoding: str = "relative"

    def __post_init__(self):
        object.__setattr__(self, "dot_positions", tuple(float(d) for d in self.dot_positions))
        if len(self.dot_positions) < 1:
            raise DomainError("an image needs at least one dot")
        if self.dot_width < WAVELENGTH / 4:
            raise DomainError(f"dot_width {self.dot_width} below lambda/4")
        if self.encoding not in ("relative", "center-of-mass"):
            raise DomainError(f"unknown encoding {self.encoding!r}")

    @classmethod
    def two_dots(cls, separation, **kwargs):
        return cls(dot_positions=(-separation / 2, separation / 2), **kwargs)

    @property
    def separation(self):
        return max(self.dot_positions) - min(self.dot_positions)

    @property
    def bandwidth(self):
        """Three standard deviations of the dot intensity spectrum, in the
        momentum coordinate the image is encoded on (difference or sum)."""
        return 3.0 / self.dot_width

    def validate_for(self, grid):
        if max(abs(d) for d in self.dot_positions) >= grid.position_extent / 4:
            raise DomainError("image dots too close to the periodic wrap of the position grid")
        if self.bandwidth > grid.q_max / 2:
            raise AliasingError(
                f"image bandwidth {self.bandwidth:.3g} exceeds q_max/2 = {grid.q_max / 2:.3g}"
            )

    def amplitude(self, y):
        """Position-space amplitude; ``|amplitude|**2`` of a lone dot has std ``dot_width``."""
        y = np.asarray(y, dtype=float)
        w = self.dot_width
        return sum(np.exp(-((y - d) ** 2) / (4 * w * w)) for d in self.dot_positions)

    def spectrum(self, k):
        """Fourier transform ``int amplitude(y) exp(-i k y) dy``."""
        k = np.asarray(k, dtype=float)
        w = self.dot_width
        env = 2 * w * math.sqrt(math.pi) * np.exp(-(w * k) ** 2)
        return env * sum(np.exp(-1j * k * d) for d in self.dot_positions)


@dataclass(frozen=True, eq=False)
class BiphotonState:
    """Joint momentum amplitude of a photon pair.

    ``transmitted`` is the product of the fractions passed by every filter
    applied so far; apertures renormalise the amplitude, free propagation
    does not.
    """

    grid: TransverseGrid
    amplitude: np.ndarray = field(repr=False)
    transmitted: float = 1.0

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        n = self.grid.n_points
        if amp.shape != (n, n):
            raise ValueError(f"amplitude shape {amp.shape} does not match grid ({n}, {n})")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)

    def norm(self):
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.grid.dq ** 2)

    def probabilities(self):
        """Probability mass per (q1, q2) cell, summing to the state norm."""
        return np.abs(self.amplitude) ** 2 * self.grid.dq ** 2

    def normalized(self):
        nrm = self.norm()
        if nrm < 1e-300:
            raise NullStateError("cannot normalise a null state")
        return BiphotonState(self.grid, self.amplitude / math.sqrt(nrm), self.transmitted)

    def require_normalized(self):
        nrm = self.norm()
        if nrm < 1e-12:
            raise NullStateError("state has no probability mass")
        if abs(nrm - 1.0) > NORM_TOL:
            raise DomainError(f"state not normalised (norm={nrm:.12g})")


def _profile_values(profile, x):
    if profile is None:
        return np.ones_like(x, dtype=complex)
    if callable(profile):
        return np.asarray(profile(x), dtype=complex)
    raise TypeError("profile must be callable or None")


def from_profiles(grid, diff_profile, sum_profile=None, centers=(0.0, 0.0), periodic=None):
    """Build ``amp = F(u) G(s)`` with ``u = dq1 - dq2`` and ``s = dq1 + dq2``.

    ``dq1, dq2`` are momenta relative to the arm centres.  With
    ``periodic=True`` the difference ``u`` is wrapped into ``[-q_max, q_max)``,
    which makes a pure difference kernel exactly translation invariant on
    the grid.  Defaults to periodic only when there is no sum envelope.
    """
    if periodic is None:
        periodic = sum_profile is None
    q = grid.q
    p1 = q[:, None] - centers[0]
    p2 = q[None, :] - centers[1]
    u = p1 - p2
    if periodic:
        span = 2 * grid.q_max
        u = (u + grid.q_max) % span - grid.q_max
    amp = _profile_values(diff_profile, u) * _profile_values(sum_profile, p1 + p2)
    return BiphotonState(grid, amp).normalized()


def gaussian_profile(std, center=0.0):
    """Amplitude profile whose squared modulus is a Gaussian of the given std."""
    def profile(x):
        return np.exp(-((x - center) ** 2) / (4.0 * std * std))
    return profile


def make_difference_correlated_state(grid, sum_width, image, source_momenta=(0.0, 0.0)):
    """Biphoton whose image lives on the momentum difference.

    Parameters
    ----------
    grid : TransverseGrid
    sum_width : float or None
        Std of ``|G|**2`` along ``q1 + q2``.  ``None`` gives the exact
        difference kernel (uniform sum envelope, periodic difference).
    image : ImageSpec
        Dots in the relative coordinate ``y1 - y2`` (``encoding='relative'``)
        or in ``(y1 + y2) / 2`` (``'center-of-mass'``).
    source_momenta : (float, float)
        Transverse momenta at which each arm is centred (the transmitter
        directions times ``P_z``).

    Returns
    -------
    BiphotonState
    """
    image.validate_for(grid)
    if sum_width is not None and not 0 < sum_width < grid.q_max / 4:
        raise DomainError(f"sum_width must lie in (0, q_max/4), got {sum_width}")
    envelope = None if sum_width is None else gaussian_profile(sum_width)
    if image.encoding == "relative":
        # q1 y1 + q2 y2 = (q1 - q2)/2 * (y1 - y2) + (q1 + q2) * (y1 + y2)/2
        return from_profiles(grid, lambda u: image.spectrum(u / 2), envelope,
                             centers=source_momenta)
    return from_profiles(grid, envelope, image.spectrum, centers=source_momenta,
                         periodic=False)


def separable_state(grid, f, g):
    """Product state ``f(q1) g(q2)``; ``f`` and ``g`` are arrays or callables."""
    q = grid.q
    fa = np.asarray(f(q) if callable(f) else f, dtype=complex)
    ga = np.asarray(g(q) if callable(g) else g, dtype=complex)
    return BiphotonState(grid, np.outer(fa, ga)).normalized()


def narrow_beam_state(grid, source_momenta, beam_width):
    """Each photon confined to a narrow beam around its own source direction.

    ``beam_width`` is the std of each arm's momentum intensity.
    """
    return separable_state(grid, gaussian_profile(beam_width, source_momenta[0]),
                           gaussian_profile(beam_width, source_momenta[1]))


def marginal(state, which="signal"):
    """Single-photon momentum density of one arm (integrates to 1 with ``dq``)."""
    state.require_normalized()
    (axis,) = arm_axes(which)
    p = np.abs(state.amplitude) ** 2
    return p.sum(axis=1 - axis) * state.grid.dq


def pooled_marginal(state):
    """Density seen by a detector that cannot tell the arms apart."""
    return 0.5 * (marginal(state, "signal") + marginal(state, "idler"))


def conditional(state, measured_q, measured_arm="signal"):
    """Density of the other arm's momentum after measuring ``measured_q``.

    The measured value is snapped to the nearest grid point.
    """
    state.require_normalized()
    (axis,) = arm_axes(measured_arm)
    j = int(state.grid.index_of_q(measured_q))
    if marginal(state, measured_arm)[j] <= 1e-12:
        raise ConditioningError(f"outcome q={measured_q} has (near) zero probability")
    row = state.amplitude[j, :] if axis == 0 else state.amplitude[:, j]
    p = np.abs(row) ** 2
    return p / (p.sum() * state.grid.dq)


def relative_sum_joint(state):
    """Joint probability of ``(q1 + q2, y1 - y2)``.

    These two observables commute, so an ideal biphoton detector can record
    both.  Returns ``(q_sum, y_rel, mass)`` with ``mass`` of shape
    ``(2n - 1, n)``; ``mass`` sums to the state norm.
    """
    grid = state.grid
    n = grid.n_points
    idx = np.arange(n)
    diag = np.zeros((2 * n - 1, n), dtype=complex)
    diag[idx[:, None] + idx[None, :], idx[:, None]] = state.amplitude
    # along a fixed q1+q2 the conjugate of y1-y2 steps by dq with index i
    amp = np.fft.ifft(diag, axis=1) * n
    mass = np.abs(np.fft.fftshift(amp, axes=1)) ** 2 * grid.dq ** 2 / n
    q_sum = (np.arange(2 * n - 1) - 2 * (n // 2)) * grid.dq
    return q_sum, grid.y, mass


def coincidence_image(state):
    """Density of the relative position ``y1 - y2`` on ``grid.y``."""
    state.require_normalized()
    _, _, mass = relative_sum_joint(state)
    return mass.sum(axis=0) / state.grid.dy


def center_of_mass_image(state):
    """Density of ``(y1 + y2) / 2`` on ``grid.y / 2`` (returned as ``(axis, density)``)."""
    state.require_normalized()
    grid = state.grid
    n = grid.n_points
    idx = np.arange(n)
    diag = np.zeros((2 * n - 1, n), dtype=complex)
    diag[idx[:, None] - idx[None, :] + n - 1, idx[:, None]] = state.amplitude
    # at fixed q1-q2 the conjugate of (y1+y2)/2 is q1+q2, stepping 2 dq with i
    amp = np.fft.ifft(diag, axis=1) * n
    mass = np.abs(np.fft.fftshift(amp, axes=1)) ** 2 * grid.dq ** 2 / n
    axis = grid.y / 2
    return axis, mass.sum(axis=0) / (grid.dy / 2)


def sum_momentum_mass(state):
    """Probability mass on each anti-diagonal ``q1 + q2``; returns ``(q_sum, mass)``."""
    grid = state.grid
    n = grid.n_points
    p = state.probabilities()
    idx = np.arange(n)
    mass = np.bincount((idx[:, None] + idx[None, :]).ravel(), weights=p.ravel(),
                       minlength=2 * n - 1)
    q_sum = (np.arange(2 * n - 1) - 2 * (n // 2)) * grid.dq
    return q_sum, mass


def to_position(field_q, grid):
    """Unitary 1-D transform of a momentum amplitude onto ``grid.y``.

    ``psi(y) = sum_q f(q) exp(i q y) dq / sqrt(2 pi)``.
    """
    f = np.fft.ifftshift(np.asarray(field_q, dtype=complex))
    psi = np.fft.fftshift(np.fft.ifft(f)) * grid.n_points
    return psi * grid.dq / math.sqrt(2 * math.pi)


def to_momentum(field_y, grid):
    """Inverse of :func:`to_position`."""
    f = np.asarray(field_y, dtype=complex)
    phi = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(f)))
    return phi * grid.dy / math.sqrt(2 * math.pi)


def save_state(state, path):
    """Write a state as text: header then ``re im`` rows, q1-major.

    Debug format, not guaranteed stable.
    """
    amp = state.amplitude.ravel()
    header = (f"qdirsim biphoton state\nn_points={state.grid.n_points}\n"
              f"q_max={state.grid.q_max!r}\ntransmitted={state.transmitted!r}\n"
              "rows: q1 index major, q2 index minor; columns: real imag")
    np.savetxt(path, np.column_stack([amp.real, amp.imag]), fmt="%.17g", header=header)


def load_state(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, val = body.partition("=")
                meta[key.strip()] = val.strip()
    data = np.loadtxt(path)
    grid = TransverseGrid(int(meta["n_points"]), float(meta["q_max"]))
    amp = (data[:, 0] + 1j * data[:, 1]).reshape(grid.n_points, grid.n_points)
    return BiphotonState(grid, amp, float(meta.get("transmitted", 1.0)))
