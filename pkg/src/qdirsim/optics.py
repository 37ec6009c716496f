"""Passive optics as transfer functions acting on biphoton amplitudes.

Three elements are supported: free-space (angular spectrum) propagation,
hard spatial-frequency apertures and angular masks in the sky image.  Each
acts on one arm or on both.  Transverse modes beyond the on-shell bound
``|q| > 2 pi / lambda`` are dropped by any propagation over a positive
distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NullStateError
from .geometry import ON_SHELL_MOMENTUM, WAVELENGTH, transverse_momentum_to_angle
from .state import BiphotonState, arm_axes, sum_momentum_mass

NULL_TRANSMISSION = 1e-12
SUM_RANGE_MASS = 1e-6


def propagation_kernel(q, distance, wavelength=WAVELENGTH):
    """Angular-spectrum transfer function ``exp(i k_z z)``, zero on evanescent modes."""
    k = 2 * math.pi / wavelength
    q = np.asarray(q, dtype=float)
    if distance == 0:
        return np.ones_like(q, dtype=complex)
    propagating = np.abs(q) <= k
    kz = np.sqrt(np.where(propagating, k * k - q * q, 0.0))
    return np.where(propagating, np.exp(1j * kz * distance), 0.0)


def propagate_slice(field_q, q, distance, wavelength=WAVELENGTH):
    """Propagate a single-photon momentum amplitude over ``distance``."""
    if distance < 0:
        raise DomainError("propagation distance must be >= 0")
    return np.asarray(field_q, dtype=complex) * propagation_kernel(q, distance, wavelength)


def propagate(state, distance, wavelength_per_arm=(WAVELENGTH, WAVELENGTH)):
    """Free-space propagation of both arms.

    The amplitude is *not* renormalised; the norm lost to evanescent modes
    shows up in ``state.norm()`` and is folded into ``transmitted``.
    """
    if distance < 0:
        raise DomainError("propagation distance must be >= 0")
    return _propagate_arms(state, distance, tuple(wavelength_per_arm))


def _filter(state, keep, arm):
    """Zero the amplitude outside ``keep`` (boolean over q) on the given arm(s)."""
    amp = state.amplitude
    axes = arm_axes(arm)
    mask2d = np.ones(amp.shape, dtype=bool)
    if 0 in axes:
        mask2d &= keep[:, None]
    if 1 in axes:
        mask2d &= keep[None, :]
    before = state.norm()
    filtered = np.where(mask2d, amp, 0.0)
    after = float(np.sum(np.abs(filtered) ** 2) * state.grid.dq ** 2)
    fraction = after / before if before > 0 else 0.0
    if fraction < NULL_TRANSMISSION:
        raise NullStateError(f"filter transmitted fraction {fraction:.3g} (< {NULL_TRANSMISSION})")
    return BiphotonState(state.grid, filtered / math.sqrt(after),
                         state.transmitted * fraction), fraction


def apply_aperture(state, arm, cutoff):
    """Hard aperture passing spatial frequencies ``|q| / 2 pi <= cutoff``.

    The state is renormalised (detection is conditioned on arrival); the
    transmitted fraction multiplies ``state.transmitted``.
    """
    if not cutoff > 0:
        raise DomainError("aperture cutoff must be positive")
    keep = np.abs(state.grid.q) / (2 * math.pi) <= cutoff
    return _filter(state, keep, arm)[0]


def apply_mask(state, arm, blocked_interval, p_z=ON_SHELL_MOMENTUM):
    """Block the open angular interval ``(lo, hi)`` on the given arm(s).

    Angles are grid momenta divided by ``p_z``.  A zero-width interval
    blocks nothing; an interval reaching past the grid simply blocks to
    its edge.
    """
    lo, hi = sorted(float(v) for v in blocked_interval)
    if math.isnan(lo) or math.isnan(hi):
        raise DomainError("mask interval must not contain NaN")
    angles = transverse_momentum_to_angle(state.grid.q, p_z)
    blocked = (angles > lo) & (angles < hi)
    return _filter(state, ~blocked, arm)[0]


def mask_transmission(state, arm, blocked_interval, p_z=ON_SHELL_MOMENTUM):
    """Fraction of pairs surviving :func:`apply_mask` (0 if everything is blocked)."""
    try:
        masked = apply_mask(state, arm, blocked_interval, p_z)
    except NullStateError:
        return 0.0
    return masked.transmitted / state.transmitted


def sum_momentum_range(state):
    """Largest ``|q1 + q2|`` on an anti-diagonal holding at least 1e-6 of the mass."""
    nrm = state.norm()
    if nrm < NULL_TRANSMISSION:
        raise NullStateError("sum-momentum range of a null state is undefined")
    q_sum, mass = sum_momentum_mass(state)
    occupied = mass / nrm >= SUM_RANGE_MASS
    return float(np.max(np.abs(q_sum[occupied])))


def single_arm_bandlimit(wavelength=WAVELENGTH):
    """On-shell bound ``2 pi / lambda`` beyond which one photon cannot propagate."""
    return 2 * math.pi / wavelength


@dataclass(frozen=True)
class TransferFunction:
    """One element of an optical chain.

    ``kind`` is ``free_propagation`` (uses ``distance``), ``hard_aperture``
    (uses ``cutoff``) or ``mask`` (uses ``interval`` in radians).
    """

    kind: str
    arm: str = "both"
    distance: float | None = None
    cutoff: float | None = None
    interval: tuple | None = None
    wavelength: float = WAVELENGTH

    def __post_init__(self):
        arm_axes(self.arm)
        needs = {"free_propagation": "distance", "hard_aperture": "cutoff", "mask": "interval"}
        if self.kind not in needs:
            raise ValueError(f"unknown transfer function kind {self.kind!r}")
        if getattr(self, needs[self.kind]) is None:
            raise ValueError(f"{self.kind} requires {needs[self.kind]!r}")
        if self.interval is not None:
            object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))

    def apply(self, state, p_z=ON_SHELL_MOMENTUM):
        if self.kind == "free_propagation":
            axes = arm_axes(self.arm)
            lam = tuple(self.wavelength if ax in axes else math.inf for ax in (0, 1))
            return _propagate_arms(state, self.distance, lam)
        if self.kind == "hard_aperture":
            return apply_aperture(state, self.arm, self.cutoff)
        return apply_mask(state, self.arm, self.interval, p_z)

    def to_dict(self):
        out = {"kind": self.kind, "arm": self.arm}
        for key in ("distance", "cutoff"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.interval is not None:
            out["interval"] = list(self.interval)
        if self.kind == "free_propagation" and self.wavelength != WAVELENGTH:
            out["wavelength"] = self.wavelength
        return out


def _propagate_arms(state, distance, wavelengths):
    # an infinite wavelength marks an arm that is left untouched
    if distance == 0:
        return state
    q = state.grid.q
    kernels = [np.ones_like(q, dtype=complex) if math.isinf(lam)
               else propagation_kernel(q, distance, lam) for lam in wavelengths]
    before = state.norm()
    if before < NULL_TRANSMISSION:
        raise NullStateError("cannot propagate a null state")
    amp = state.amplitude * kernels[0][:, None] * kernels[1][None, :]
    kept = float(np.sum(np.abs(amp) ** 2) * state.grid.dq ** 2) / before
    return BiphotonState(state.grid, amp, state.transmitted * kept)


def apply_chain(state, chain, p_z=ON_SHELL_MOMENTUM):
    """Apply transfer functions in order."""
    for element in chain:
        state = element.apply(state, p_z)
    return state
