"""Monte Carlo detection and the estimators an observer can build from it.

Random streams
--------------
Every random draw comes from ``numpy.random.default_rng([seed, stream, part])``
where ``stream`` names the purpose (see the ``STREAM_*`` constants) and
``part`` is a partition index.  Event sampling is split into fixed-size
partitions of ``CHUNK`` events, so the result is identical whatever the
number of workers.
"""

from __future__ import annotations

import csv
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .errors import InsufficientDataError, NonIdentifiableError, NullStateError
from .geometry import ON_SHELL_MOMENTUM, transverse_momentum_to_angle
from .optics import NULL_TRANSMISSION, apply_aperture, apply_chain
from .state import marginal, pooled_marginal, relative_sum_joint

CHUNK = 1 << 16
STREAM_EVENTS = 0
STREAM_NOISE = 1
STREAM_BOOTSTRAP = 2
STREAM_ATTACK = 3

PAIR = "coincidence_pair"
SINGLE = "single_photon"
CSV_COLUMNS = ("channel", "q1", "q2", "q_sum", "y_rel", "arrival_slot")


def derive_rng(seed, stream, part=0):
    return np.random.default_rng([int(seed), int(stream), int(part)])


def derive_seed(seed, *keys):
    """Child seed (u64) for an independent sub-run labelled by ``keys``.

    String keys are folded in through CRC-32, so labels are stable across
    processes and Python versions.
    """
    words = [int(seed)] + [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class DetectionEvent:
    """One detection.  Absent coordinates are NaN.

    Pair events carry either ``(q1, q2)`` or ``(y_rel, q_sum)`` depending on
    the detector basis; single events carry their momentum in ``q1``.
    """

    channel: str
    q1: float
    q2: float
    q_sum: float
    y_rel: float
    arrival_slot: int
    is_noise: bool = False


@dataclass
class EventTable:
    """Column store of detection events, ordered by arrival slot."""

    is_pair: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q_sum: np.ndarray
    y_rel: np.ndarray
    arrival_slot: np.ndarray
    is_noise: np.ndarray

    _columns = ("is_pair", "q1", "q2", "q_sum", "y_rel", "arrival_slot", "is_noise")

    def __post_init__(self):
        n = len(self.is_pair)
        for name in self._columns:
            col = np.asarray(getattr(self, name))
            if len(col) != n:
                raise ValueError(f"column {name} has length {len(col)}, expected {n}")
            setattr(self, name, col)
        if n and self.arrival_slot.min() < 0:
            raise ValueError("arrival slots must be >= 0")

    @classmethod
    def empty(cls):
        f = np.empty(0)
        return cls(np.empty(0, bool), f, f, f, f, np.empty(0, np.int64), np.empty(0, bool))

    def __len__(self):
        return len(self.is_pair)

    def __getitem__(self, i):
        return DetectionEvent(
            channel=PAIR if self.is_pair[i] else SINGLE,
            q1=float(self.q1[i]), q2=float(self.q2[i]), q_sum=float(self.q_sum[i]),
            y_rel=float(self.y_rel[i]), arrival_slot=int(self.arrival_slot[i]),
            is_noise=bool(self.is_noise[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def select(self, mask):
        return EventTable(*(getattr(self, name)[mask] for name in self._columns))

    @property
    def pairs(self):
        return self.select(self.is_pair)

    @property
    def singles(self):
        return self.select(~self.is_pair)

    @classmethod
    def concatenate(cls, tables):
        return cls(*(np.concatenate([getattr(t, name) for t in tables])
                     for name in cls._columns))

    def sorted_by_slot(self):
        return self.select(np.argsort(self.arrival_slot, kind="stable"))

    def to_csv(self, path, debug=False):
        """Write events; floats with 9 significant digits, ``is_noise`` only if ``debug``."""
        columns = CSV_COLUMNS + (("is_noise",) if debug else ())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for i in range(len(self)):
                row = [PAIR if self.is_pair[i] else SINGLE]
                row += [f"{getattr(self, c)[i]:.9g}" for c in ("q1", "q2", "q_sum", "y_rel")]
                row.append(str(int(self.arrival_slot[i])))
                if debug:
                    row.append(str(int(self.is_noise[i])))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            return cls.empty()

        def col(name):
            return np.array([float(r[name]) for r in rows])

        noise = (np.array([r["is_noise"] == "1" for r in rows]) if "is_noise" in rows[0]
                 else np.zeros(len(rows), bool))
        return cls(np.array([r["channel"] == PAIR for r in rows]), col("q1"), col("q2"),
                   col("q_sum"), col("y_rel"),
                   np.array([int(r["arrival_slot"]) for r in rows], dtype=np.int64), noise)


@dataclass(frozen=True)
class ArrivalProcess:
    """Emission timing.  ``geometric``: i.i.d. geometric gaps with the given
    mean (a Bernoulli process over slots); ``periodic``: one event every
    ``period`` slots."""

    kind: str = "geometric"
    mean_interval: float = 4.0
    period: int = 3

    def __post_init__(self):
        if self.kind not in ("geometric", "periodic"):
            raise ValueError(f"unknown arrival process {self.kind!r}")
        if self.mean_interval < 1 or self.period < 1:
            raise ValueError("arrival intervals must be >= 1 slot")

    def gaps(self, n, rng):
        if self.kind == "periodic":
            return np.full(n, self.period, dtype=np.int64)
        return rng.geometric(1.0 / self.mean_interval, size=n).astype(np.int64)


CHANNEL_KINDS = ("wide_acceptance_biphoton", "narrow_acceptance_single", "recoil_integrating")


@dataclass(frozen=True)
class MeasurementChannel:
    """Detector configuration behind an optical chain.

    ``wide_acceptance_biphoton`` records ``(y_rel, q_sum)`` per pair with no
    extra aperture.  ``narrow_acceptance_single`` applies a hard aperture of
    spatial-frequency ``cutoff`` (if given) to ``arm`` and records single
    photons from that arm; with ``arm='both'`` the detector cannot tell the
    arms apart.  ``recoil_integrating`` records both momenta ``(q1, q2)``.
    """

    kind: str = "wide_acceptance_biphoton"
    chain: tuple = ()
    cutoff: float | None = None
    arm: str = "both"

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; expected one of {CHANNEL_KINDS}")
        object.__setattr__(self, "chain", tuple(self.chain))
        if self.cutoff is not None and self.kind != "narrow_acceptance_single":
            raise ValueError("only narrow_acceptance_single takes a cutoff")

    @property
    def records_pairs(self):
        return self.kind != "narrow_acceptance_single"

    def prepare(self, state, p_z=ON_SHELL_MOMENTUM):
        """State reaching the detector, renormalised to arrivals.

        For the single-photon channel the aperture is *not* part of this
        state: each photon is accepted on its own (see
        :meth:`single_photon_density`).
        """
        out = apply_chain(state, self.chain, p_z)
        if self.cutoff is not None and self.records_pairs:
            out = apply_aperture(out, self.arm, self.cutoff)
        return out.normalized()

    def single_photon_density(self, state, p_z=ON_SHELL_MOMENTUM):
        """Probability per grid cell of a detected single photon's momentum.

        A photon passes the aperture whether or not its partner does, so the
        acceptance truncates the one-photon marginal instead of filtering
        the joint amplitude.
        """
        prepared = self.prepare(state, p_z)
        grid = prepared.grid
        if self.arm == "both":
            density = pooled_marginal(prepared)
        else:
            density = marginal(prepared, self.arm)
        mass = density * grid.dq
        if self.cutoff is not None:
            mass = np.where(np.abs(grid.q) / (2 * math.pi) <= self.cutoff, mass, 0.0)
            total = mass.sum()
            if total < NULL_TRANSMISSION:
                raise NullStateError(f"aperture cutoff {self.cutoff} accepts no single photons")
            mass = mass / total
        return mass

    def outcome_distribution(self, state, p_z=ON_SHELL_MOMENTUM):
        """Flattened outcome probabilities and a decoder ``index -> columns``."""
        prepared = self.prepare(state, p_z)
        grid = prepared.grid
        n = grid.n_points
        if self.kind == "wide_acceptance_biphoton":
            q_sum, y_rel, mass = relative_sum_joint(prepared)

            def decode(idx):
                t, m = np.divmod(idx, n)
                return {"q_sum": q_sum[t], "y_rel": y_rel[m]}
            return mass.ravel(), decode
        if self.kind == "recoil_integrating":
            q = grid.q

            def decode(idx):
                i, k = np.divmod(idx, n)
                return {"q1": q[i], "q2": q[k], "q_sum": q[i] + q[k]}
            return prepared.probabilities().ravel(), decode
        mass = self.single_photon_density(state, p_z)

        def decode(idx):
            return {"q1": grid.q[idx]}
        return mass, decode


def _draw(cdf, gaps_process, size, seed, part):
    rng = derive_rng(seed, STREAM_EVENTS, part)
    u = rng.random(size)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return idx, gaps_process.gaps(size, rng)


def sample_events(state, channel, n_events, seed, arrival=None, p_z=ON_SHELL_MOMENTUM,
                  workers=1):
    """Draw ``n_events`` independent detections by inverse-CDF sampling.

    Parameters
    ----------
    state : BiphotonState
        Field at the receiver, before the channel's optical chain.
    channel : MeasurementChannel
    n_events : int
    seed : int
    arrival : ArrivalProcess, optional
        Emission timing; geometric gaps with mean 4 slots by default.
    workers : int
        Threads used for the partitions; does not change the result.

    Returns
    -------
    EventTable
    """
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    arrival = arrival or ArrivalProcess()
    probs, decode = channel.outcome_distribution(state, p_z)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    sizes = [min(CHUNK, n_events - start) for start in range(0, n_events, CHUNK)]
    jobs = [(cdf, arrival, size, seed, part) for part, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _draw(*job), jobs))
    else:
        parts = [_draw(*job) for job in jobs]
    idx = np.concatenate([p[0] for p in parts])
    slots = np.cumsum(np.concatenate([p[1] for p in parts])) - 1
    cols = {name: np.full(n_events, np.nan) for name in ("q1", "q2", "q_sum", "y_rel")}
    cols.update(decode(idx))
    return EventTable(
        is_pair=np.full(n_events, channel.records_pairs),
        arrival_slot=slots.astype(np.int64),
        is_noise=np.zeros(n_events, bool),
        **cols,
    )


@dataclass(frozen=True)
class RecoilEstimate:
    angle: float
    stderr: float
    n_events: int


def recoil_direction(events, p_z=ON_SHELL_MOMENTUM):
    """Mean recoil angle ``(q1 + q2) / (2 P_z)`` over pair events."""
    q_sum = events.pairs.q_sum
    q_sum = q_sum[np.isfinite(q_sum)]
    if len(q_sum) < 2:
        raise InsufficientDataError("recoil estimate needs at least two pair events")
    angles = transverse_momentum_to_angle(q_sum, 2 * p_z)
    return RecoilEstimate(float(angles.mean()),
                          float(angles.std(ddof=1) / math.sqrt(len(angles))), len(angles))


@dataclass
class DirectionEstimate:
    """Two source angles (ascending) with bootstrap covariance."""

    angles: tuple
    covariance: np.ndarray
    strategy: str
    n_events: int
    details: dict = field(default_factory=dict)

    @property
    def stderr(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def error(self):
        """Mean bootstrap standard deviation of the two angles."""
        return float(np.mean(self.stderr))


# -- two-component angular mixture ------------------------------------------

def _cell_probs(theta, dtheta, mu, s):
    p = ndtr((theta + dtheta / 2 - mu) / s) - ndtr((theta - dtheta / 2 - mu) / s)
    total = p.sum()
    return p / total if total > 0 else np.full_like(theta, 1.0 / len(theta))


@dataclass
class _Mixture:
    weights: np.ndarray     # background first
    mu: np.ndarray
    s: np.ndarray
    loglik: float = -np.inf


def _fit_mixture(theta, counts, dtheta, init, max_iter=300, tol=1e-7):
    """EM on binned angles for ``uniform background + Gaussians``."""
    n = counts.sum()
    k = len(init.mu)
    w, mu, s = init.weights.copy(), init.mu.astype(float).copy(), init.s.astype(float).copy()
    s_min = dtheta / 2
    s_max = theta[-1] - theta[0]
    background = np.full(len(theta), 1.0 / len(theta))
    occupied = counts > 0
    th, c = theta[occupied], counts[occupied]
    loglik = -np.inf
    for _ in range(max_iter):
        comp = np.vstack([background] + [_cell_probs(theta, dtheta, mu[j], s[j])
                                         for j in range(k)])[:, occupied]
        weighted = w[:, None] * comp
        total = weighted.sum(axis=0)
        new_ll = float(np.sum(c * np.log(np.maximum(total, 1e-300))))
        resp = weighted / np.maximum(total, 1e-300)
        rc = resp * c
        w = rc.sum(axis=1) / n
        for j in range(k):
            mass = rc[j + 1].sum()
            if mass <= 0:
                continue
            mu[j] = np.sum(rc[j + 1] * th) / mass
            s[j] = np.clip(math.sqrt(np.sum(rc[j + 1] * (th - mu[j]) ** 2) / mass), s_min, s_max)
        if new_ll - loglik < tol * max(1.0, abs(new_ll)):
            loglik = new_ll
            break
        loglik = new_ll
    return _polish(theta, counts, dtheta, _Mixture(w, mu, s, loglik))


def _mixture_loglik(theta, counts, dtheta, w, mu, s):
    comp = [np.full(len(theta), 1.0 / len(theta))]
    comp += [_cell_probs(theta, dtheta, m, sd) for m, sd in zip(mu, s)]
    total = np.asarray(w) @ np.vstack(comp)
    return float(np.sum(counts * np.log(np.maximum(total, 1e-300))))


def _polish(theta, counts, dtheta, fit):
    """Finish an EM fit by direct maximisation (EM crawls on flat likelihoods)."""
    k = len(fit.mu)
    s_min, s_max = dtheta / 2, theta[-1] - theta[0]
    logw = np.log(np.maximum(fit.weights, 1e-12))

    def unpack(x):
        w = np.exp(x[:k + 1] - x[:k + 1].max())
        return w / w.sum(), x[k + 1:2 * k + 1], np.exp(x[2 * k + 1:])

    def nll(x):
        return -_mixture_loglik(theta, counts, dtheta, *unpack(x))

    x0 = np.concatenate([logw - logw[0], fit.mu, np.log(fit.s)])
    bounds = ([(-30, 30)] * (k + 1) + [(theta[0], theta[-1])] * k
              + [(math.log(s_min), math.log(max(s_max, s_min)))] * k)
    res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
    if -res.fun <= fit.loglik:
        return fit
    w, mu, s = unpack(res.x)
    return _Mixture(w, mu, s, float(-res.fun))


def _initial_guesses(theta, counts, dtheta):
    """Deterministic starting points for the two-Gaussian fit."""
    cdf = np.cumsum(counts) / counts.sum()
    q25, q50, q75 = (theta[np.searchsorted(cdf, p)] for p in (0.25, 0.5, 0.75))
    spread = max((q75 - q25) / 2, dtheta)
    guesses = [
        _Mixture(np.array([0.1, 0.45, 0.45]), np.array([q25, q75]), np.array([spread / 2] * 2)),
        _Mixture(np.array([0.1, 0.45, 0.45]), np.array([q50 - spread / 2, q50 + spread / 2]),
                 np.array([spread] * 2)),
    ]
    # two largest local maxima of a lightly smoothed histogram
    smooth = np.convolve(counts, np.ones(3) / 3, mode="same")
    peaks = [i for i in range(1, len(smooth) - 1)
             if smooth[i] >= smooth[i - 1] and smooth[i] > smooth[i + 1]]
    if len(peaks) >= 2:
        top = sorted(peaks, key=lambda i: smooth[i])[-2:]
        guesses.append(_Mixture(np.array([0.1, 0.45, 0.45]), theta[sorted(top)],
                                np.array([2 * dtheta] * 2)))
    return guesses


def _split(one):
    """Two-component start that reproduces ``one`` (so the fits are nested)."""
    w0, w1 = one.weights
    mu, s = one.mu[0], one.s[0]
    return _Mixture(np.array([w0, w1 / 2, w1 / 2]), np.array([mu - s / 2, mu + s / 2]),
                    np.array([s, s]) * math.sqrt(0.75))


def _fit_two(theta, counts, dtheta, one=None):
    guesses = _initial_guesses(theta, counts, dtheta)
    if one is not None:
        guesses.append(_split(one))
    fits = [_fit_mixture(theta, counts, dtheta, g) for g in guesses]
    return max(fits, key=lambda f: f.loglik)


def _fit_one(theta, counts, dtheta):
    cdf = np.cumsum(counts) / counts.sum()
    med = theta[np.searchsorted(cdf, 0.5)]
    iqr = theta[np.searchsorted(cdf, 0.75)] - theta[np.searchsorted(cdf, 0.25)]
    s0 = max(iqr / 1.35, dtheta)
    starts = [
        _Mixture(np.array([0.1, 0.9]), np.array([med]), np.array([s0])),
        _Mixture(np.array([0.9, 0.1]), np.array([med]), np.array([s0])),
        _Mixture(np.array([0.5, 0.5]), np.array([med]), np.array([theta[-1] - theta[0]])),
    ]
    fits = [_fit_mixture(theta, counts, dtheta, init) for init in starts]
    return max(fits, key=lambda f: f.loglik)


def _ordered(fit):
    order = np.argsort(fit.mu)
    return fit.mu[order]


def estimate_source_directions(events, strategy="single_photon_ml", *, grid, p_z=ON_SHELL_MOMENTUM,
                               n_boot=200, seed=0, acceptance=None):
    """Estimate the two transmitter angles from single-photon detections.

    ``single_photon_ml`` fits ``uniform background + two Gaussians`` to the
    binned angles by maximum likelihood and accepts the split only if it
    beats a one-Gaussian fit by the BIC penalty ``3 ln n``.  ``centroid``
    splits the angles at the median and takes each half's mean.  Both return
    bootstrap covariances.

    ``acceptance`` is the detector's angular half-width; the likelihood is
    then normalised over the cells it can see, so a sharp acceptance edge
    is not mistaken for a source.

    Raises
    ------
    InsufficientDataError
        Fewer than 100 single-photon events.
    NonIdentifiableError
        The fitted angles are closer than one grid cell, or the two-source
        model is not supported by the data.
    """
    singles = events.singles
    n = len(singles)
    if n < 100:
        raise InsufficientDataError(f"direction estimate needs >= 100 single events, got {n}")
    theta_grid = transverse_momentum_to_angle(grid.q, p_z)
    dtheta = theta_grid[1] - theta_grid[0]
    idx = grid.index_of_q(singles.q1)
    rng = derive_rng(seed, STREAM_BOOTSTRAP)

    if strategy == "centroid":
        angles = theta_grid[idx]

        def centroid(sample):
            med = np.median(sample)
            lo, hi = sample[sample <= med], sample[sample > med]
            if len(hi) == 0 or len(lo) == 0:
                return None
            return np.array([lo.mean(), hi.mean()])

        est = centroid(angles)
        if est is None or est[1] - est[0] < dtheta:
            raise NonIdentifiableError("centroid split collapsed",
                                       {"separation": 0.0 if est is None else float(est[1] - est[0])})
        boots = [centroid(rng.choice(angles, n)) for _ in range(n_boot)]
        boots = np.array([b if b is not None else [np.nan, np.nan] for b in boots])
        return DirectionEstimate(tuple(float(a) for a in est), np.cov(boots.T), "centroid", n)

    if strategy != "single_photon_ml":
        raise ValueError(f"unknown strategy {strategy!r}")
    counts = np.bincount(idx, minlength=grid.n_points).astype(float)
    if acceptance is not None:
        seen = np.abs(theta_grid) <= acceptance + 1e-12
        if np.count_nonzero(seen) < 2:
            raise NonIdentifiableError("acceptance narrower than two grid cells",
                                       {"acceptance": acceptance})
        theta_grid, counts = theta_grid[seen], counts[seen]
    one = _fit_one(theta_grid, counts, dtheta)
    two = _fit_two(theta_grid, counts, dtheta, one)
    mu = _ordered(two)
    gain = 2 * (two.loglik - one.loglik)
    penalty = 3 * math.log(n)
    details = {"separation": float(mu[1] - mu[0]), "lr_gain": float(gain),
               "bic_penalty": float(penalty), "weights": two.weights.tolist(),
               "widths": two.s.tolist()}
    if mu[1] - mu[0] < dtheta:
        raise NonIdentifiableError("fitted components closer than one grid cell", details)
    if gain < penalty:
        raise NonIdentifiableError("two-source model not supported over one source", details)
    boots = []
    for _ in range(n_boot):
        resampled = rng.multinomial(n, counts / n).astype(float)
        boots.append(_ordered(_fit_mixture(theta_grid, resampled, dtheta, two)))
    cov = np.cov(np.array(boots).T)
    return DirectionEstimate((float(mu[0]), float(mu[1])), cov, strategy, n, details)
