"""Image contrast, message mutual information and the aperture tradeoff sweep."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, NonIdentifiableError
from .measurement import (
    MeasurementChannel,
    derive_seed,
    estimate_source_directions,
    recoil_direction,
    sample_events,
)
from .optics import TransferFunction
from .state import center_of_mass_image, coincidence_image

NON_IDENTIFIABLE = "non-identifiable"
DEGENERATE = 1e-12


def _peak_trough(values_at, image):
    dots = sorted(image.dot_positions)
    if len(dots) < 2:
        raise DomainError("contrast needs at least two dots")
    peak = float(np.mean([values_at(d) for d in dots]))
    trough = float(np.mean([values_at(0.5 * (a + b)) for a, b in zip(dots, dots[1:])]))
    return peak, trough


def _contrast(peak, trough):
    if peak + trough < DEGENERATE:
        raise DomainError(f"degenerate image: peak + trough = {peak + trough:.3g}")
    # a midpoint brighter than the dots is simply "no image"
    return min(1.0, max(0.0, (peak - trough) / (peak + trough)))


def image_contrast(density, image, axis):
    """``(peak - trough) / (peak + trough)`` of a sampled image profile.

    Peaks are the profile at the dot positions, the trough its value midway
    between neighbouring dots (averaged when there are several), with linear
    interpolation on ``axis``.  Clipped to ``[0, 1]``.
    """
    density = np.asarray(density, dtype=float)
    return _contrast(*_peak_trough(lambda x: np.interp(x, axis, density), image))


def state_contrast(state, image):
    """Contrast of the coincidence image a wide-acceptance receiver would see."""
    if image.encoding == "center-of-mass":
        axis, density = center_of_mass_image(state)
    else:
        axis, density = state.grid.y, coincidence_image(state)
    return image_contrast(density, image, axis)


def event_contrast(y_rel, image, half_width=None):
    """Contrast estimated from sampled relative positions.

    Local densities are event counts within ``half_width`` (default half a
    dot width) of each probe position.
    """
    y = np.asarray(y_rel, dtype=float)
    y = y[np.isfinite(y)]
    if len(y) == 0:
        raise InsufficientDataError("no pair events")
    h = image.dot_width / 2 if half_width is None else half_width
    return _contrast(*_peak_trough(lambda x: np.count_nonzero(np.abs(y - x) <= h) / len(y), image))


def plugin_mutual_information(labels, outcomes, miller_madow=True):
    """Plug-in mutual information in bits between two discrete samples.

    With ``miller_madow`` each entropy gets the ``(m - 1) / 2N`` correction
    (``m`` occupied bins).  Not floored.
    """
    labels = np.asarray(labels)
    outcomes = np.asarray(outcomes)
    n = len(labels)
    _, x = np.unique(labels, return_inverse=True)
    _, y = np.unique(outcomes, return_inverse=True)
    joint = np.unique(x * (y.max() + 1) + y, return_counts=True)[1]
    px = np.bincount(x)
    py = np.bincount(y)

    def entropy(counts):
        p = counts[counts > 0] / n
        h = -np.sum(p * np.log(p))
        if miller_madow:
            h += (np.count_nonzero(counts) - 1) / (2 * n)
        return h

    return float((entropy(px) + entropy(py) - entropy(joint)) / math.log(2))


def outcome_index(events, channel, grid):
    """Grid-cell outcome of each event for the channel's recorded variables."""
    if channel.kind == "wide_acceptance_biphoton":
        return grid.index_of_y(events.y_rel)
    if channel.kind == "recoil_integrating":
        return grid.index_of_q(events.q1) * grid.n_points + grid.index_of_q(events.q2)
    return grid.index_of_q(events.q1)


def message_mutual_information(alphabet, channel, n_events, seed, make_state, p_z=None):
    """Information (bits) a receiver on ``channel`` gets about which image was sent.

    Each of the ``k`` images in ``alphabet`` is sent ``n_events // k`` times
    (equal priors).  ``make_state(image)`` builds the source state.  The
    estimate is the Miller-Madow corrected plug-in MI between label and
    grid-cell outcome, floored at 0 and capped at ``log2 k``.
    """
    k = len(alphabet)
    if k < 2:
        raise DomainError("alphabet needs at least two images")
    if n_events < 100 * k:
        raise InsufficientDataError(f"need >= {100 * k} events for {k} images, got {n_events}")
    per = n_events // k
    labels, outcomes = [], []
    for label, image in enumerate(alphabet):
        state = make_state(image)
        kwargs = {} if p_z is None else {"p_z": p_z}
        events = sample_events(state, channel, per, derive_seed(seed, "mi", label), **kwargs)
        labels.append(np.full(per, label))
        outcomes.append(outcome_index(events, channel, state.grid))
    mi = plugin_mutual_information(np.concatenate(labels), np.concatenate(outcomes))
    return min(max(mi, 0.0), math.log2(k))


@dataclass
class TradeoffReport:
    """Metrics of one aperture setting.

    ``direction_error`` is the bootstrap standard deviation (radians) of the
    single-photon direction estimate, or ``"non-identifiable"``.
    """

    scenario: str
    cutoff: float
    image_contrast: float
    message_mutual_information: float
    direction_error: float | str
    recoil_angle: float
    recoil_stderr: float

    def __post_init__(self):
        if not 0.0 <= self.image_contrast <= 1.0:
            raise ValueError("image_contrast outside [0, 1]")

    @property
    def identifiable(self):
        return self.direction_error != NON_IDENTIFIABLE

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "cutoff": self.cutoff,
            "image_contrast": self.image_contrast,
            "message_mutual_information": self.message_mutual_information,
            "direction_error": self.direction_error,
            "recoil_angle": self.recoil_angle,
            "recoil_stderr": self.recoil_stderr,
        }


CSV_FIELDS = ("scenario", "cutoff", "image_contrast", "message_mutual_information",
              "direction_error", "recoil_angle", "recoil_stderr")


def _fmt(value):
    return f"{value:.9g}" if isinstance(value, float) else str(value)


def write_tradeoff_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in reports:
            writer.writerow([_fmt(r.to_dict()[k]) for k in CSV_FIELDS])


def tradeoff_summary(reports):
    contrasts = [r.image_contrast for r in reports]
    identifiable = [r.cutoff for r in reports if r.identifiable]
    return {
        "n_points": len(reports),
        "min_contrast": min(contrasts) if reports else None,
        "max_contrast": max(contrasts) if reports else None,
        # smallest cutoff at which the sources could be told apart
        "identifiability_boundary": min(identifiable) if identifiable else None,
    }


def write_tradeoff_json(reports, path):
    payload = {"summary": tradeoff_summary(reports), "points": [r.to_dict() for r in reports]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _direction_error(events, scenario, n_boot, seed, acceptance):
    try:
        est = estimate_source_directions(events, grid=scenario.grid, p_z=scenario.p_z,
                                         n_boot=n_boot, seed=seed, acceptance=acceptance)
    except NonIdentifiableError:
        return NON_IDENTIFIABLE
    return float(np.max(est.stderr))


def tradeoff_point(scenario, cutoff, n_events, seed, index=0):
    """Metrics with an aperture of spatial-frequency ``cutoff`` appended to the chain.

    Image contrast, message information and recoil are measured on pairs
    with the aperture on the signal arm; the direction estimate uses single
    photons seen through the same aperture on both arms.
    """
    p_z = scenario.p_z
    base = scenario.channel
    chain = base.chain + (TransferFunction("hard_aperture", arm="signal", cutoff=cutoff),)
    pairs = MeasurementChannel("wide_acceptance_biphoton", chain)
    # a direction-finding detector with the same acceptance on every photon
    singles = MeasurementChannel("narrow_acceptance_single", base.chain, cutoff, arm="both")
    state = scenario.state
    contrast = state_contrast(pairs.prepare(state, p_z), scenario.image)
    run = scenario.config.run
    if len(scenario.alphabet) >= 2:
        mi = message_mutual_information(scenario.alphabet, pairs, n_events,
                                        derive_seed(seed, "point", index),
                                        scenario.make_state, p_z)
    else:
        mi = float("nan")
    pair_events = sample_events(state, pairs, n_events, derive_seed(seed, "pairs", index),
                                scenario.arrival, p_z)
    recoil = recoil_direction(pair_events, p_z)
    single_events = sample_events(state, singles, n_events,
                                  derive_seed(seed, "singles", index), scenario.arrival, p_z)
    error = _direction_error(single_events, scenario, run.bootstrap,
                             derive_seed(seed, "bootstrap", index), 2 * math.pi * cutoff / p_z)
    return TradeoffReport(scenario.name, float(cutoff), contrast, mi, error,
                          recoil.angle, recoil.stderr)


def tradeoff_scan(scenario, cutoff_values, n_events, seed):
    """One :class:`TradeoffReport` per cutoff, in input order.

    Each point uses seeds derived from ``(seed, index)`` so points are
    independent of each other and of evaluation order.
    """
    cutoffs = [float(c) for c in cutoff_values]
    if any(c <= 0 for c in cutoffs):
        raise ValueError("cutoffs must be positive")
    if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError("cutoffs must be strictly ascending")
    return [tradeoff_point(scenario, c, n_events, seed, i) for i, c in enumerate(cutoffs)]
