"""Unit system, two-transmitter geometry and the feasibility inequalities.

Lengths are measured in signal wavelengths (``WAVELENGTH == 1``) so the
on-shell signal photon has ``|k| = 2*pi``.  Angles are radians.

The scheme needs an image scale ``Y0`` that is large compared to the
uncertainty-limited resolution of the *full* opening angle between the
transmitters, small compared to that of the narrow angle needed to isolate
one transmitter, and no smaller than a wavelength::

    Y0 >> lambda / (4 pi dTheta0)
    Y0 << lambda / (4 pi dTheta)
    Y0 >= lambda
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

WAVELENGTH = 1.0
ON_SHELL_MOMENTUM = 2.0 * math.pi / WAVELENGTH
SMALL_ANGLE_LIMIT = 0.1
DEFAULT_MARGIN = 5.0


def angle_to_transverse_momentum(theta, p_z=ON_SHELL_MOMENTUM):
    """Transverse momentum spread associated with an opening angle.

    Small-angle relation ``dP_y ~ P_z * dTheta``.

    Parameters
    ----------
    theta : float
        Angle in radians, ``|theta| < 0.1``.
    p_z : float
        Axial momentum, must be positive.

    Raises
    ------
    DomainError
        If the angle leaves the small-angle regime or ``p_z <= 0``.
    """
    if not p_z > 0:
        raise DomainError(f"axial momentum must be positive, got {p_z!r}")
    if not abs(theta) < SMALL_ANGLE_LIMIT:
        raise DomainError(
            f"|theta|={abs(theta)!r} outside small-angle regime (< {SMALL_ANGLE_LIMIT})"
        )
    return p_z * theta


def transverse_momentum_to_angle(q, p_z=ON_SHELL_MOMENTUM):
    """Inverse of :func:`angle_to_transverse_momentum` without the range guard.

    Used to label grid points and mask intervals by angle; works on arrays.
    """
    if not p_z > 0:
        raise DomainError(f"axial momentum must be positive, got {p_z!r}")
    return q / p_z


def aperture_cutoff(width, distance, wavelength=WAVELENGTH):
    """Spatial-frequency cutoff ``w / (z * lambda)`` of an aperture.

    ``width`` is the aperture diameter and ``distance`` its range from the
    source; the ratio ``width / distance`` must stay below 0.5.
    """
    if width <= 0 or distance <= 0 or wavelength <= 0:
        raise DomainError("aperture width, distance and wavelength must be positive")
    if width / distance >= 0.5:
        raise DomainError(f"w/z = {width / distance:.3g} is not a small angle (< 0.5)")
    return width / (distance * wavelength)


@dataclass(frozen=True)
class SystemGeometry:
    """Two transmitters seen from a receiver at known range.

    ``opening_angle_full`` is derived as ``L / R``.
    """

    transmitter_separation: float
    range: float
    opening_angle_narrow: float
    image_separation: float
    pump_wavelength: float = WAVELENGTH / 2
    axial_momentum: float = ON_SHELL_MOMENTUM

    def __post_init__(self):
        for name in ("transmitter_separation", "range", "image_separation",
                     "pump_wavelength", "axial_momentum"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        full = self.opening_angle_full
        if full > SMALL_ANGLE_LIMIT:
            raise DomainError(
                f"opening angle L/R = {full:.4g} exceeds small-angle limit {SMALL_ANGLE_LIMIT}"
            )
        if not full > self.opening_angle_narrow > 0:
            raise DomainError("need opening_angle_full > opening_angle_narrow > 0")

    @classmethod
    def from_angles(cls, opening_angle_full, opening_angle_narrow, image_separation,
                    range=1.0, **kwargs):
        return cls(transmitter_separation=opening_angle_full * range, range=range,
                   opening_angle_narrow=opening_angle_narrow,
                   image_separation=image_separation, **kwargs)

    @property
    def opening_angle_full(self):
        return self.transmitter_separation / self.range

    @property
    def source_angles(self):
        """Nominal source angles, symmetric about the receiver axis."""
        half = 0.5 * self.opening_angle_full
        return (half, -half)

    @property
    def source_momenta(self):
        return tuple(angle_to_transverse_momentum(a, self.axial_momentum)
                     for a in self.source_angles)


@dataclass(frozen=True)
class FeasibilityVerdict:
    margin_lower: float
    margin_upper: float
    margin_propagation: float
    margin: float
    lower_ok: bool
    upper_ok: bool
    propagation_ok: bool

    @property
    def feasible(self):
        return self.lower_ok and self.upper_ok and self.propagation_ok

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "margin": self.margin,
            "margin_lower": self.margin_lower,
            "margin_upper": self.margin_upper,
            "margin_propagation": self.margin_propagation,
            "lower_ok": self.lower_ok,
            "upper_ok": self.upper_ok,
            "propagation_ok": self.propagation_ok,
        }


def check_feasibility(geom, margin=DEFAULT_MARGIN):
    """Evaluate the three image-scale conditions for a geometry.

    ``margin`` operationalises "much greater than": each of the two
    uncertainty ratios must be at least ``margin``.  The propagation
    condition is ``Y0 >= lambda``.
    """
    if margin < 1:
        raise DomainError(f"margin must be >= 1, got {margin!r}")
    y0 = geom.image_separation
    lower = y0 * 4 * math.pi * geom.opening_angle_full / WAVELENGTH
    upper = WAVELENGTH / (4 * math.pi * geom.opening_angle_narrow * y0)
    prop = y0 / WAVELENGTH
    return FeasibilityVerdict(
        margin_lower=lower,
        margin_upper=upper,
        margin_propagation=prop,
        margin=margin,
        lower_ok=lower >= margin,
        upper_ok=upper >= margin,
        propagation_ok=prop >= 1.0,
    )
