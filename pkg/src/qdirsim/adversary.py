"""Attacks on direction privacy and the noise countermeasure.

Angular profiles in this module are probability masses per grid cell
(summing to one), indexed like ``grid.q``; the angle of cell ``j`` is
``grid.q[j] / p_z``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, InsufficientDataError
from .geometry import ON_SHELL_MOMENTUM, transverse_momentum_to_angle
from .measurement import (
    STREAM_ATTACK,
    STREAM_NOISE,
    EventTable,
    derive_rng,
)
from .optics import apply_mask
from .state import pooled_marginal

PRIVACY_HELD = "privacy_held"
PRIVACY_BROKEN = "privacy_broken"
PROFILE_TOL = 1e-9

# attack kind -> True when a *small* statistic means the attack failed
_HELD_BELOW = {"blocking": True, "ensemble": False}


@dataclass
class AttackReport:
    """Outcome of one attack; the verdict is always derived, never stored."""

    kind: str
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _HELD_BELOW:
            raise ValueError(f"unknown attack kind {self.kind!r}")

    @property
    def verdict(self):
        if _HELD_BELOW[self.kind]:
            held = self.statistic < self.threshold
        else:
            held = self.statistic >= self.threshold
        return PRIVACY_HELD if held else PRIVACY_BROKEN

    def to_dict(self):
        return {"kind": self.kind, "statistic": self.statistic, "threshold": self.threshold,
                "verdict": self.verdict, "details": self.details}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_profile(profile, name):
    p = np.asarray(profile, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROFILE_TOL:
        raise DomainError(f"{name} must be non-negative and sum to 1")
    return p


@dataclass(frozen=True, eq=False)
class NoisePolicy:
    """Noise added by the transmitter.

    ``background_rate`` noise photons per signal photon drawn
    from ``background_profile`` (uniform when ``None``), plus
    ``offset_rate`` photons per signal photon drawn from
    ``single_photon_offset``.
    """

    background_rate: float = 0.0
    background_profile: np.ndarray | None = None
    single_photon_offset: np.ndarray | None = None
    offset_rate: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        if self.background_rate < 0 or self.offset_rate < 0:
            raise DomainError("noise rates must be >= 0")
        if self.background_profile is not None:
            object.__setattr__(self, "background_profile",
                               _check_profile(self.background_profile, "background_profile"))
        if self.single_photon_offset is not None:
            object.__setattr__(self, "single_photon_offset",
                               _check_profile(self.single_photon_offset, "single_photon_offset"))
        elif self.offset_rate > 0:
            raise DomainError("offset_rate given without single_photon_offset")

    @property
    def total_rate(self):
        return self.background_rate + self.offset_rate


def compute_marginal_bias(state, p_z=ON_SHELL_MOMENTUM):
    """Single-photon angular density minus the uniform density over the grid.

    Returned on the grid angles ``grid.q / p_z``; integrates to zero.
    """
    state.require_normalized()
    grid = state.grid
    density = pooled_marginal(state) * p_z          # per radian
    uniform = 1.0 / (grid.n_points * grid.dq / p_z)
    return density - uniform


def offset_policy(bias, grid, p_z=ON_SHELL_MOMENTUM, background_rate=0.0, offset_rate=None):
    """Noise policy whose offset cancels ``bias`` in expectation.

    With ``offset_rate=None`` the smallest rate that can flatten the
    histogram is used.  A smaller explicit rate forces negative offsets;
    those are clipped, renormalised and the leftover total-variation
    distance from uniform is stored in ``residual``.
    """
    n = grid.n_points
    dtheta = grid.dq / p_z
    signal = (np.asarray(bias) + 1.0 / (n * dtheta)) * dtheta    # mass per cell
    needed = n * signal.max() - 1.0
    if needed <= 1e-15:
        return NoisePolicy(background_rate=background_rate)
    rate = needed if offset_rate is None else float(offset_rate)
    if rate <= 0:
        return NoisePolicy(background_rate=background_rate,
                           residual=0.5 * float(np.abs(signal - 1.0 / n).sum()))
    raw = ((1.0 + rate) / n - signal) / rate
    offset = np.clip(raw, 0.0, None)
    offset /= offset.sum()
    mixed = (signal + rate * offset) / (1.0 + rate)
    residual = 0.5 * float(np.abs(mixed - 1.0 / n).sum())
    return NoisePolicy(background_rate=background_rate, single_photon_offset=offset,
                       offset_rate=rate, residual=residual)


def inject_noise(events, policy, seed, *, grid, p_z=ON_SHELL_MOMENTUM):
    """Interleave single-photon noise events into a stream.

    Rates count noise photons per signal photon, a pair carrying two.  The
    number of noise events is ``Binomial(2 k n, rate / (2 k))`` with
    ``k = ceil(rate)`` and ``n`` signal photons.  Arrival slots are uniform
    over the stream's span.  Signal events are left untouched and keep their
    relative order.
    """
    rate = policy.total_rate
    if rate == 0 or len(events) == 0:
        return events
    n = len(events) + len(events.pairs)
    rng = derive_rng(seed, STREAM_NOISE)
    k = max(1, math.ceil(rate))
    n_noise = int(rng.binomial(2 * k * n, rate / (2 * k)))
    cells = grid.n_points
    background = (policy.background_profile if policy.background_profile is not None
                  else np.full(cells, 1.0 / cells))
    from_offset = rng.random(n_noise) < policy.offset_rate / rate
    idx = np.empty(n_noise, dtype=int)
    n_off = int(from_offset.sum())
    if n_off:
        idx[from_offset] = rng.choice(cells, size=n_off, p=policy.single_photon_offset)
    if n_noise - n_off:
        idx[~from_offset] = rng.choice(cells, size=n_noise - n_off, p=background)
    span = int(events.arrival_slot.max()) + 1
    nan = np.full(n_noise, np.nan)
    noise = EventTable(
        is_pair=np.zeros(n_noise, bool), q1=grid.q[idx], q2=nan, q_sum=nan, y_rel=nan,
        arrival_slot=rng.integers(0, span, size=n_noise).astype(np.int64),
        is_noise=np.ones(n_noise, bool),
    )
    return EventTable.concatenate([events, noise]).sorted_by_slot()


def photon_angles_histogram(events, grid):
    """Counts per grid cell of every detected photon (both members of a pair)."""
    q = np.concatenate([events.singles.q1, events.pairs.q1, events.pairs.q2])
    q = q[np.isfinite(q)]
    return np.bincount(grid.index_of_q(q), minlength=grid.n_points)


def sweep_centers(grid, opening_angle, p_z=ON_SHELL_MOMENTUM):
    """Grid angles within ``[-opening_angle, +opening_angle]``."""
    angles = transverse_momentum_to_angle(grid.q, p_z)
    return angles[np.abs(angles) <= opening_angle + 1e-12]


def blocking_attack(state, geometry, mask_width, n_events, seed, threshold=0.1):
    """Sweep a sky-image mask across the source region and watch the coincidence rate.

    The mask blocks both photons inside ``(c - w/2, c + w/2)`` for each
    grid-aligned centre ``c`` in ``[-dTheta0, dTheta0]``.  Counts at each
    centre are ``Binomial(n_events, T(c))`` with ``T`` the exact masked
    transmission.  The statistic is ``(max - min) / mean`` of the measured
    rates; privacy holds while it stays below ``threshold``.
    """
    full = geometry.opening_angle_full
    if mask_width < 0 or mask_width > full * (1 + 1e-12):
        raise DomainError(f"mask width {mask_width} must lie in [0, {full}]")
    state.require_normalized()
    p_z = geometry.axial_momentum
    centers = sweep_centers(state.grid, full, p_z)
    expected = np.array([
        apply_mask(state, "both", (c - mask_width / 2, c + mask_width / 2), p_z).transmitted
        / state.transmitted
        for c in centers
    ])
    rng = derive_rng(seed, STREAM_ATTACK)
    rates = rng.binomial(n_events, np.minimum(expected, 1.0)) / n_events

    def spread(r):
        return float((r.max() - r.min()) / r.mean())

    return AttackReport("blocking", spread(rates), threshold, {
        "mask_width": mask_width,
        "centers": centers.tolist(),
        "rates": rates.tolist(),
        "expected_rates": expected.tolist(),
        "expected_statistic": spread(expected),
        "n_events": n_events,
    })


def ensemble_statistics_attack(events, window, *, grid, p_z=ON_SHELL_MOMENTUM,
                               significance=0.01, max_lag=10):
    """Look for ensemble structure: timing regularity and angular bias.

    Counts per window of ``window`` slots are tested for autocorrelation
    (Ljung-Box up to ``max_lag``); single-photon angles are tested for
    uniformity over the grid (chi-square).  The statistic is the smaller
    p-value; privacy holds when it is at least ``significance``.
    """
    from statsmodels.stats.diagnostic import acorr_ljungbox

    if len(events) == 0:
        raise InsufficientDataError("empty event stream")
    n_windows = (int(events.arrival_slot.max()) + 1) // window
    if n_windows < 10:
        raise InsufficientDataError(f"need >= 10 windows of {window} slots, got {n_windows}")
    counts = np.bincount(events.arrival_slot // window, minlength=n_windows)[:n_windows]
    lags = max(1, min(max_lag, n_windows // 5))
    if counts.var() == 0:
        # identical counts in every window: no Poisson-like process does that
        p_autocorr, lb_stat = 0.0, math.inf
    else:
        lb = acorr_ljungbox(counts.astype(float), lags=[lags])
        p_autocorr = float(lb["lb_pvalue"].iloc[0])
        lb_stat = float(lb["lb_stat"].iloc[0])
    singles = events.singles
    if len(singles):
        hist = np.bincount(grid.index_of_q(singles.q1), minlength=grid.n_points)
        chi2, p_uniform = stats.chisquare(hist)
        chi2, p_uniform = float(chi2), float(p_uniform)
    else:
        chi2, p_uniform = None, 1.0
    return AttackReport("ensemble", min(p_autocorr, p_uniform), significance, {
        "window": window,
        "n_windows": n_windows,
        "ljung_box_lags": lags,
        "ljung_box_stat": lb_stat,
        "p_autocorrelation": p_autocorr,
        "n_single_events": len(singles),
        "chi2_uniformity": chi2,
        "p_uniformity": p_uniform,
    })
