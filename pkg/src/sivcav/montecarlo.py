"""Stochastic photon-stream simulation and HBT correlation estimation.

The three-level system is simulated as a continuous-time Markov chain with
exact exponential waiting times per state and competing-risks branch choice;
there is no time discretization. Each excited-state decay to the ground state
emits a photon with probability eta_qe (the radiative branch of the supplied
budget), tagged ZPL or PSB by the budget's branching ratio and thinned by the
detection efficiency.

Randomness comes from the counter-based Philox generator, so streams are
bit-reproducible from their seed. Draws are made in fixed per-cycle order
(pump wait, excited wait, branch coin, shelf wait, detection coin, channel
coin), vectorized over batches of cycles; unused draws are discarded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DomainError, InputFormatError, ValidationError
from .models import G2Curve, RadiativeBudget, ThreeLevelRates, _check_finite, _raise_if

RNG_ALGORITHM = "philox4x64"

CHANNEL_ZPL = 0
CHANNEL_PSB = 1
CHANNEL_LABELS = ("ZPL", "PSB")

MODE_FULL = "full"
MODE_START_STOP = "start-stop"


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Detected photon timestamps (s) with per-photon channel tags.

    channel_tags holds CHANNEL_ZPL / CHANNEL_PSB codes; ``seed`` is the seed
    of the generating simulation and ``rng_algorithm`` names the generator so
    streams can be reproduced.
    """

    timestamps: np.ndarray
    channel_tags: np.ndarray
    duration: float
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        bag = []
        ts = np.asarray(self.timestamps, dtype=float)
        tags = np.asarray(self.channel_tags, dtype=np.uint8)
        duration = _check_finite(bag, "duration", self.duration)
        if duration <= 0:
            bag.append("duration must be positive")
        if ts.ndim != 1 or tags.ndim != 1:
            bag.append("timestamps and channel_tags must be 1-D")
        if ts.shape != tags.shape:
            bag.append("timestamps and channel_tags must align")
        if ts.size:
            if not np.all(np.isfinite(ts)):
                bag.append("timestamps contain non-finite entries")
            elif not np.all(np.diff(ts) >= 0):
                bag.append("timestamps must be sorted")
            elif ts[0] < 0 or ts[-1] > duration:
                bag.append("timestamps must lie in [0, duration]")
            if not np.all(np.isin(tags, (CHANNEL_ZPL, CHANNEL_PSB))):
                bag.append("channel_tags must be ZPL/PSB codes")
        _raise_if(bag)
        ts.setflags(write=False)
        tags.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "channel_tags", tags)
        object.__setattr__(self, "duration", duration)
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self):
        return self.timestamps.size

    @property
    def detected_rate(self):
        return self.timestamps.size / self.duration

    def labels(self):
        return np.array(CHANNEL_LABELS)[self.channel_tags]


@dataclass(frozen=True, eq=False)
class HbtHistogram:
    """Coincidence histogram with the flat-background normalization.

    ``normalization`` is the expected number of coincidences per bin for
    uncorrelated light at the measured mean rate, so counts/normalization
    estimates g2 per bin.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    normalization: float
    mode: str = MODE_FULL

    MODES: ClassVar[tuple[str, str]] = (MODE_FULL, MODE_START_STOP)

    def __post_init__(self):
        bag = []
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or counts.ndim != 1:
            bag.append("bin_edges and counts must be 1-D")
        elif counts.size != edges.size - 1:
            bag.append("counts must have one entry per bin")
        if edges.size >= 2 and not np.all(np.diff(edges) > 0):
            bag.append("bin_edges must be strictly increasing")
        if counts.size and np.any(counts < 0):
            bag.append("counts must be non-negative")
        norm = _check_finite(bag, "normalization", self.normalization)
        if norm <= 0:
            bag.append("normalization must be positive")
        if self.mode not in self.MODES:
            bag.append(f"mode must be one of {self.MODES}")
        _raise_if(bag)
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "normalization", norm)

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def to_curve(self) -> G2Curve:
        """Normalized histogram as a G2Curve with Poisson uncertainties."""
        g2 = self.counts / self.normalization
        sigmas = np.sqrt(np.clip(self.counts, 1, None)) / self.normalization
        return G2Curve(self.centers, g2, sigmas)


def simulate_stream(
    rates: ThreeLevelRates,
    budget: RadiativeBudget,
    duration: float,
    detection_eff: float,
    seed: int,
) -> PhotonStream:
    """Simulate detected photon timestamps over an acquisition window.

    The budget sets the emission split: a |2> -> |1> transition emits with
    probability budget.eta_qe, lands in the ZPL channel with probability
    budget.zpl_fraction, and survives detection with probability
    detection_eff. Fully reproducible from the seed.
    """
    duration = float(duration)
    if not (duration > 0 and math.isfinite(duration)):
        raise DomainError(f"duration must be positive, got {duration}")
    detection_eff = float(detection_eff)
    if not (0.0 <= detection_eff <= 1.0):
        raise DomainError(f"detection_eff must lie in [0, 1], got {detection_eff}")

    empty = PhotonStream(
        np.empty(0), np.empty(0, dtype=np.uint8), duration, seed
    )
    q_detect = budget.eta_qe * detection_eff
    if detection_eff == 0.0:
        warnings.warn("detection_eff = 0: no photons are recorded", stacklevel=2)
        return empty
    if rates.k12 == 0.0:
        warnings.warn("k12 = 0: the emitter is never pumped", stacklevel=2)
        return empty

    k2t = rates.k21 + rates.k23
    p_shelf = rates.k23 / k2t
    zpl_fraction = budget.zpl_fraction
    mean_cycle = 1.0 / rates.k12 + 1.0 / k2t + p_shelf / rates.k31
    rng = _rng(seed)

    times = []
    tags = []
    t0 = 0.0
    while t0 <= duration:
        n = max(1024, int((duration - t0) / mean_cycle * 1.2) + 16)
        n = min(n, 5_000_000)  # cap batch memory; the loop continues if needed
        pump_wait = rng.exponential(1.0 / rates.k12, n)
        excited_wait = rng.exponential(1.0 / k2t, n)
        shelf = rng.random(n) < p_shelf
        shelf_wait = rng.exponential(1.0 / rates.k31, n)
        detected = rng.random(n) < q_detect
        zpl = rng.random(n) < zpl_fraction

        cycle = pump_wait + excited_wait + np.where(shelf, shelf_wait, 0.0)
        starts = t0 + np.concatenate(([0.0], np.cumsum(cycle[:-1])))
        emit_t = starts + pump_wait + excited_wait
        keep = (~shelf) & detected & (emit_t <= duration)
        times.append(emit_t[keep])
        tags.append(np.where(zpl[keep], CHANNEL_ZPL, CHANNEL_PSB).astype(np.uint8))
        t0 += float(cycle.sum())

    timestamps = np.concatenate(times) if times else np.empty(0)
    channel = np.concatenate(tags) if tags else np.empty(0, dtype=np.uint8)
    return PhotonStream(timestamps, channel, duration, seed)


def apply_jitter(stream: PhotonStream, sigma_irf: float, seed: int) -> PhotonStream:
    """Add independent Gaussian timing offsets to every photon and re-sort.

    Photons jittered outside the acquisition window are dropped. sigma = 0
    returns the stream unchanged. Deterministic per seed. Note that pairwise
    delays between jittered photons acquire a kernel of width sqrt(2) * sigma.
    """
    sigma_irf = float(sigma_irf)
    if sigma_irf < 0 or not math.isfinite(sigma_irf):
        raise DomainError(f"sigma_irf must be non-negative, got {sigma_irf}")
    if sigma_irf == 0.0 or len(stream) == 0:
        return stream
    rng = _rng(seed)
    jittered = stream.timestamps + rng.normal(0.0, sigma_irf, len(stream))
    inside = (jittered >= 0.0) & (jittered <= stream.duration)
    jittered = jittered[inside]
    tags = stream.channel_tags[inside]
    order = np.argsort(jittered, kind="stable")
    return PhotonStream(jittered[order], tags[order], stream.duration, stream.seed)


def correlate(
    stream: PhotonStream,
    bin_width: float,
    window: float,
    mode: str = MODE_FULL,
    seed: int = 0,
) -> HbtHistogram:
    """Estimate the intensity correlation of a photon stream.

    full mode: counts every ordered photon pair with |dt| <= window into bins
    centered on integer multiples of bin_width; the normalization
    rate^2 * duration * bin_width uses the stream's own mean detected rate,
    so counts/normalization estimates g2.

    start-stop mode: photons are split 50/50 between two virtual detectors by
    a seeded fair coin and each start is paired with the nearest subsequent
    stop (non-negative delays only). This classic estimator is unbiased only
    while rate * window << 1; beyond that pile-up suppresses large delays.
    """
    if len(stream) == 0:
        raise DomainError("cannot correlate an empty photon stream")
    bin_width = float(bin_width)
    window = float(window)
    if not (0.0 < bin_width <= window):
        raise DomainError("need 0 < bin_width <= window")
    t = stream.timestamps
    n = t.size
    duration = stream.duration

    if mode == MODE_FULL:
        n_half = max(int(round(window / bin_width)), 1)
        limit = (n_half + 0.5) * bin_width
        pos_edges = np.concatenate(([0.0], (np.arange(n_half + 1) + 0.5) * bin_width))
        pos_counts = np.zeros(n_half + 1, dtype=np.int64)
        k = 1
        while k < n:
            d = t[k:] - t[:-k]
            if float(d.min()) > limit:
                break
            pos_counts += np.histogram(d[d <= limit], pos_edges)[0]
            k += 1
        counts = np.empty(2 * n_half + 1, dtype=np.int64)
        counts[n_half] = 2 * pos_counts[0]
        counts[n_half + 1 :] = pos_counts[1:]
        counts[:n_half] = pos_counts[1:][::-1]
        edges = (np.arange(-n_half, n_half + 2) - 0.5) * bin_width
        rate = n / duration
        normalization = rate**2 * duration * bin_width
        return HbtHistogram(edges, counts, normalization, MODE_FULL)

    if mode == MODE_START_STOP:
        coin = _rng(seed).random(n) < 0.5
        starts = t[coin]
        stops = t[~coin]
        if starts.size == 0 or stops.size == 0:
            raise DomainError("start-stop split left one detector empty")
        idx = np.searchsorted(stops, starts, side="right")
        valid = idx < stops.size
        delays = stops[idx[valid]] - starts[valid]
        n_bins = max(int(math.ceil(window / bin_width)), 1)
        edges = np.arange(n_bins + 1) * bin_width
        counts = np.histogram(delays[delays <= edges[-1]], edges)[0]
        normalization = starts.size * (stops.size / duration) * bin_width
        return HbtHistogram(edges, counts.astype(np.int64), normalization, MODE_START_STOP)

    raise DomainError(f"unknown correlation mode {mode!r}")


def merge_histograms(histograms) -> HbtHistogram:
    """Merge per-trajectory histograms (associative and commutative)."""
    histograms = list(histograms)
    if not histograms:
        raise DomainError("nothing to merge")
    first = histograms[0]
    counts = np.zeros_like(first.counts)
    norm = 0.0
    for h in histograms:
        if h.mode != first.mode or not np.array_equal(h.bin_edges, first.bin_edges):
            raise DomainError("histograms must share binning and mode to merge")
        counts = counts + h.counts
        norm += h.normalization
    return HbtHistogram(first.bin_edges, counts, norm, first.mode)


# --- file formats -------------------------------------------------------------
#
# PhotonStream CSV: '# key=value' headers (seed, rng, duration_s, optionally
# rates_hz and detection_eff), then rows 'timestamp_s,channel'.
# HbtHistogram CSV: '# key=value' headers, then rows 'tau_s,g2,sigma'.


def save_stream(stream: PhotonStream, path, rates: ThreeLevelRates | None = None, meta=None):
    with open(path, "w") as fh:
        fh.write(f"# seed={stream.seed}\n")
        fh.write(f"# rng={stream.rng_algorithm}\n")
        fh.write(f"# duration_s={stream.duration!r}\n")
        if rates is not None:
            fh.write(f"# rates_hz={rates.k12!r},{rates.k21!r},{rates.k23!r},{rates.k31!r}\n")
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("# timestamp_s,channel\n")
        labels = stream.labels()
        for ts, label in zip(stream.timestamps, labels):
            fh.write(f"{float(ts)!r},{label}\n")


def load_stream(path):
    """Load a stream CSV. Returns (PhotonStream, metadata dict)."""
    meta = {}
    times = []
    tags = []
    code = {label: i for i, label in enumerate(CHANNEL_LABELS)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise InputFormatError(path, lineno, "expected 'timestamp_s,channel'")
            try:
                times.append(float(parts[0]))
            except ValueError:
                raise InputFormatError(path, lineno, "bad timestamp") from None
            label = parts[1].strip()
            if label not in code:
                raise InputFormatError(path, lineno, f"unknown channel {label!r}")
            tags.append(code[label])
    try:
        duration = float(meta["duration_s"])
        seed = int(meta.get("seed", 0))
    except (KeyError, ValueError):
        raise InputFormatError(path, 0, "missing or bad '# duration_s=' header") from None
    try:
        stream = PhotonStream(
            np.asarray(times, dtype=float),
            np.asarray(tags, dtype=np.uint8),
            duration,
            seed,
            meta.get("rng", RNG_ALGORITHM),
        )
    except ValidationError as err:
        raise InputFormatError(path, 0, str(err)) from None
    return stream, meta


def save_histogram(hist: HbtHistogram, path):
    curve = hist.to_curve()
    with open(path, "w") as fh:
        fh.write(f"# mode={hist.mode}\n")
        fh.write(f"# normalization={hist.normalization!r}\n")
        fh.write("# tau_s,g2,sigma\n")
        for tau, g2, sig in zip(curve.delays, curve.values, curve.sigmas):
            fh.write(f"{float(tau)!r},{float(g2)!r},{float(sig)!r}\n")


def load_g2_csv(path) -> G2Curve:
    """Load a correlation curve CSV with columns tau_s,g2[,sigma]."""
    delays, values, sigmas = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) not in (2, 3):
                raise InputFormatError(path, lineno, "expected 'tau_s,g2[,sigma]'")
            try:
                vals = [float(tok) for tok in parts]
            except ValueError:
                raise InputFormatError(path, lineno, "bad numeric value") from None
            delays.append(vals[0])
            values.append(vals[1])
            if len(vals) == 3:
                sigmas.append(vals[2])
    if not delays:
        raise InputFormatError(path, 0, "no data rows")
    sig = np.asarray(sigmas) if len(sigmas) == len(delays) else None
    try:
        return G2Curve(np.asarray(delays), np.asarray(values), sig)
    except ValidationError as err:
        raise InputFormatError(path, 0, str(err)) from None
