"""Spectral bookkeeping across cavity-tuning steps and polarization mixing.

Digital etching blue-shifts the cavity modes step by step; this module tracks
labeled modes through a series of PL spectra by re-fitting Lorentzians and
associating peaks to tracks by nearest center (threshold three previous
linewidths), locates the tuning step where a mode crosses an emitter line,
extracts on/off-resonance intensity-enhancement ratios, and evaluates the
phenomenological polarization-mixing model: an incoherent sum of cos^2
intensity channels, each cavity channel weighted by its Lorentzian spectral
overlap with the emitter line, whose argmax angle follows from the Stokes
vector of the summed components.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks, peak_widths

from . import fitting, purcell
from .errors import DomainError, InputFormatError, RankDeficiencyError, ValidationError
from .models import CavityMode, EmitterLine, PLSpectrum, _check_finite, _raise_if


@dataclass(frozen=True)
class PolarizedChannel:
    """One linearly polarized intensity channel: angle (deg) and weight."""

    angle: float
    weight: float

    def __post_init__(self):
        bag = []
        ang = _check_finite(bag, "angle", self.angle)
        w = _check_finite(bag, "weight", self.weight)
        if w < 0:
            bag.append("weight must be non-negative")
        _raise_if(bag)
        object.__setattr__(self, "angle", ang)
        object.__setattr__(self, "weight", w)


@dataclass(frozen=True)
class TrackPoint:
    step: int
    center: float
    fwhm: float


@dataclass(frozen=True, eq=False)
class ModeTrack:
    """Per-step fitted center/fwhm of one tracked mode.

    ``terminated_at`` records the first step where no peak fell within the
    association threshold; ``non_monotonic_steps`` flags steps where the
    center moved to the red in a blue-tuning series (flagged, never
    rejected).
    """

    label: str
    points: tuple[TrackPoint, ...]
    terminated_at: int | None = None
    non_monotonic_steps: tuple[int, ...] = ()

    @property
    def centers(self):
        return np.array([p.center for p in self.points])

    @property
    def steps(self):
        return np.array([p.step for p in self.points])

    def tuning_rate(self) -> float:
        """Mean center shift per step (negative for blue tuning), nm/step."""
        if len(self.points) < 2:
            raise DomainError(f"mode {self.label!r} has fewer than 2 tracked steps")
        steps = self.steps.astype(float)
        return float(np.mean(np.diff(self.centers) / np.diff(steps)))


@dataclass(frozen=True, eq=False)
class TuningSeries:
    """A tuning run: (step_index, spectrum) pairs plus per-mode tracks."""

    steps: tuple
    tracked_modes: dict

    def __post_init__(self):
        bag = []
        steps = tuple(self.steps)
        indices = [s for s, _ in steps]
        if any(not isinstance(spec, PLSpectrum) for _, spec in steps):
            bag.append("steps must hold PLSpectrum instances")
        if indices != sorted(indices) or len(set(indices)) != len(indices):
            bag.append("step indices must be strictly increasing")
        _raise_if(bag)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "tracked_modes", dict(self.tracked_modes))

    def spectrum(self, step: int) -> PLSpectrum:
        for s, spec in self.steps:
            if s == step:
                return spec
        raise DomainError(f"no spectrum for step {step}")

    def tuning_rate(self, label: str) -> float:
        return self.tracked_modes[label].tuning_rate()


@dataclass(frozen=True)
class ResonanceSearch:
    """Where (and whether) a tracked mode crosses an emitter line."""

    found: bool
    step: int | None
    r_lambda_by_step: tuple
    min_detuning: float


@dataclass(frozen=True)
class EnhancementResult:
    ratio: float
    on_step: int
    off_step: int
    on_area: float
    off_area: float


def _detect_peaks(spectrum: PLSpectrum, min_prominence_frac=0.02, max_peaks=6):
    """Candidate peaks (center, fwhm) per step.

    Local maxima above a prominence floor seed one joint multi-Lorentzian
    refit of the whole spectrum, which keeps blended neighbors (e.g. a narrow
    emitter line riding on a cavity mode) from contaminating each other's
    center and width. Falls back to the raw maxima if the joint fit fails.
    """
    counts = spectrum.intensities
    wl = spectrum.wavelengths
    dyn = float(counts.max() - counts.min())
    if dyn <= 0:
        return []
    idx, props = find_peaks(counts, prominence=min_prominence_frac * dyn)
    if idx.size == 0:
        return []
    if idx.size > max_peaks:
        keep = np.argsort(props["prominences"])[::-1][:max_peaks]
        idx = np.sort(idx[keep])
    widths = peak_widths(counts, idx, rel_height=0.5)[0]
    dx = float(np.median(np.diff(wl)))
    raw = [(float(wl[i]), max(float(w) * dx, dx)) for i, w in zip(idx, widths)]
    inits = [(c, w, None) for c, w in raw]
    try:
        fit = fitting.fit_lorentzians(spectrum, len(inits), inits)
    except (DomainError, RankDeficiencyError, ValidationError):
        return raw
    if not fit.converged:
        return raw
    refined = []
    for peak in fitting.lorentzian_peak_summary(fit, len(inits)):
        if peak["amplitude"] > 0:
            refined.append((peak["center"], abs(peak["fwhm"])))
    return refined if refined else raw


def track_modes(steps, seed_peaks, association_fwhm=3.0) -> TuningSeries:
    """Track labeled modes through a series of spectra.

    steps      : sequence of (step_index, PLSpectrum), indices increasing
    seed_peaks : {label: (center_nm, fwhm_nm)} at the first step

    Each step's peaks are re-fitted Lorentzians; a track claims an unclaimed
    peak within ``association_fwhm`` times its previous fwhm of its previous
    center. Claims are resolved greedily by a cost that combines center
    distance with linewidth mismatch, so an almost stationary mode keeps its
    peak when another track sweeps past, and a broad mode is not captured by
    a narrow line it passes. A track with no candidate is terminated at that
    step, never an exception.
    """
    steps = sorted(((int(s), spec) for s, spec in steps), key=lambda pair: pair[0])
    if not steps:
        raise DomainError("no spectra supplied")
    if not seed_peaks:
        raise DomainError("no seed peaks supplied")

    state = {
        label: {
            "center": float(c),
            "fwhm": float(w),
            "points": [],
            "terminated": None,
            "flags": [],
        }
        for label, (c, w) in seed_peaks.items()
    }

    for step_index, spectrum in steps:
        peaks = _detect_peaks(spectrum)
        active = [lbl for lbl, st in state.items() if st["terminated"] is None]
        pairs = []
        for lbl in active:
            st = state[lbl]
            threshold = association_fwhm * st["fwhm"]
            for j, (center, fwhm) in enumerate(peaks):
                dist = abs(center - st["center"])
                if dist <= threshold:
                    cost = dist / threshold + abs(math.log(fwhm / st["fwhm"]))
                    pairs.append((cost, lbl, j))
        pairs.sort(key=lambda item: item[0])
        claimed_modes = set()
        claimed_peaks = set()
        for _cost, lbl, j in pairs:
            if lbl in claimed_modes or j in claimed_peaks:
                continue
            claimed_modes.add(lbl)
            claimed_peaks.add(j)
            center, fwhm = peaks[j]
            st = state[lbl]
            if st["points"] and center > st["points"][-1].center:
                st["flags"].append(step_index)
            st["points"].append(TrackPoint(step_index, center, fwhm))
            st["center"] = center
            st["fwhm"] = fwhm
        for lbl in active:
            if lbl not in claimed_modes:
                state[lbl]["terminated"] = step_index

    tracks = {
        lbl: ModeTrack(lbl, tuple(st["points"]), st["terminated"], tuple(st["flags"]))
        for lbl, st in state.items()
    }
    return TuningSeries(tuple(steps), tracks)


def find_resonance(series: TuningSeries, mode_label: str, line: EmitterLine) -> ResonanceSearch:
    """Locate the tuning step where a tracked mode crosses an emitter line.

    Reports the spectral overlap R_lambda at every tracked step (shared
    implementation with the Purcell algebra) and the step of minimum
    detuning. If the track never comes within 5 linewidths of the line the
    result has found=False.
    """
    if mode_label not in series.tracked_modes:
        raise DomainError(f"no tracked mode {mode_label!r}")
    track = series.tracked_modes[mode_label]
    if not track.points:
        raise DomainError(f"mode {mode_label!r} has no tracked points")
    overlaps = []
    best = None
    for point in track.points:
        mode = CavityMode(point.center, point.center / point.fwhm, 1.0, label=mode_label)
        overlaps.append((point.step, purcell.spectral_overlap(line, mode)))
        detuning = abs(point.center - line.lambda_i)
        if best is None or detuning < best[0]:
            best = (detuning, point)
    min_detuning, best_point = best
    found = min_detuning <= 5.0 * best_point.fwhm
    return ResonanceSearch(
        found=found,
        step=best_point.step if found else None,
        r_lambda_by_step=tuple(overlaps),
        min_detuning=min_detuning,
    )


def _fit_line_area(series: TuningSeries, step: int, line: EmitterLine, mode_tracks) -> float:
    """Background-subtracted Lorentzian area of the emitter line in a step.

    A tracked cavity mode overlapping the line is fitted jointly as a second
    Lorentzian; the line component keeps its identity through the
    initialization order. Only the supplied mode tracks contribute companion
    components (the line's own track, if any, is the line).
    """
    spectrum = series.spectrum(step)
    wl = spectrum.wavelengths
    line_fwhm = max(line.linewidth, 2.0 * float(np.median(np.diff(wl))))
    half_window = 8.0 * line_fwhm
    inits = [(line.lambda_i, line_fwhm, None)]
    for track in mode_tracks.values():
        for point in track.points:
            if point.step == step and abs(point.center - line.lambda_i) <= half_window + point.fwhm:
                inits.append((point.center, point.fwhm, None))
                half_window = max(half_window, 2.0 * point.fwhm)
    sel = (wl >= line.lambda_i - half_window) & (wl <= line.lambda_i + half_window)
    if sel.sum() < 6 + 3 * len(inits):
        raise DomainError(f"too few points around {line.lambda_i} nm in step {step}")
    window = PLSpectrum(wl[sel], spectrum.intensities[sel])
    clipped = [(min(max(c, window.wavelengths[0]), window.wavelengths[-1]), w, a) for c, w, a in inits]
    fit = fitting.fit_lorentzians(window, len(clipped), clipped)
    if not fit.converged:
        raise DomainError(f"emitter line unresolvable in step {step}: fit did not converge")
    amplitude = fit["amplitude_1"]
    fwhm = abs(fit["fwhm_1"])
    if amplitude <= 0:
        raise DomainError(f"emitter line unresolvable in step {step}: non-positive amplitude")
    return amplitude * fwhm  # proportional to the Lorentzian area


def enhancement_ratio(
    series: TuningSeries, line: EmitterLine, mode_labels=None
) -> EnhancementResult:
    """On/off-resonance ratio of the fitted emitter-line areas.

    The on step minimizes the detuning of the nearest tracked cavity mode to
    the line; the off step maximizes it. ``mode_labels`` restricts which
    tracks count as tuning modes; by default a track that never leaves the
    immediate neighborhood of the line (the emitter's own peak, if tracked)
    is excluded automatically. Peak areas are baseline-subtracted by
    construction (the Lorentzian fits include a constant background).
    """
    tracks = series.tracked_modes
    if mode_labels is not None:
        missing = [lbl for lbl in mode_labels if lbl not in tracks]
        if missing:
            raise DomainError(f"unknown mode labels: {missing}")
        tracks = {lbl: tracks[lbl] for lbl in mode_labels}
    else:
        tracks = {
            lbl: tr
            for lbl, tr in tracks.items()
            if tr.points
            and max(abs(p.center - line.lambda_i) for p in tr.points)
            > 5.0 * max(line.linewidth, np.median([p.fwhm for p in tr.points]))
        }
    if not tracks:
        raise DomainError("no tuning-mode tracks to select on/off steps from")
    detuning_by_step = {}
    for step, _ in series.steps:
        dists = [
            abs(point.center - line.lambda_i)
            for track in tracks.values()
            for point in track.points
            if point.step == step
        ]
        if dists:
            detuning_by_step[step] = min(dists)
    if len(detuning_by_step) < 2:
        raise DomainError("need tracked modes in at least two steps")
    on_step = min(detuning_by_step, key=detuning_by_step.get)
    off_step = max(detuning_by_step, key=detuning_by_step.get)
    on_area = _fit_line_area(series, on_step, line, tracks)
    off_area = _fit_line_area(series, off_step, line, tracks)
    if off_area <= 0:
        raise DomainError(f"emitter line unresolvable in step {off_step}")
    return EnhancementResult(on_area / off_area, on_step, off_step, on_area, off_area)


def polarization_mixture(
    emitter: PolarizedChannel,
    modes,
    line_lambda: float,
    detunings,
) -> np.ndarray:
    """Effective polarization angle of the summed emission versus detuning.

    The total polar pattern at a common mode shift d is

        I(phi; d) = w_e cos^2(phi - phi_e)
                    + sum_k w_k R_lambda(mode_k shifted by d) cos^2(phi - phi_k)

    an incoherent intensity sum (no interference terms). Its argmax angle is
    half the phase of the Stokes vector sum of the components. Returns the
    angle (degrees, folded into (-90, 90]) for every detuning. Raises
    DomainError when the pattern is isotropic or all weights vanish.
    """
    modes = list(modes)
    if not modes:
        raise DomainError("need at least one cavity mode channel")
    detunings = np.atleast_1d(np.asarray(detunings, dtype=float))
    if not np.all(np.isfinite(detunings)):
        raise DomainError("detunings must be finite")
    line = EmitterLine(line_lambda)
    angles = np.empty(detunings.size)
    for i, d in enumerate(detunings):
        weights = [emitter.weight]
        channel_angles = [emitter.angle]
        for channel, mode in modes:
            shifted = replace(mode, lambda_c=mode.lambda_c + d)
            weights.append(channel.weight * purcell.spectral_overlap(line, shifted))
            channel_angles.append(channel.angle)
        total = float(np.sum(weights))
        if total <= 0.0:
            raise DomainError("all polarization weights vanish")
        two_phi = np.radians(2.0 * np.asarray(channel_angles))
        s1 = float(np.dot(weights, np.cos(two_phi)))
        s2 = float(np.dot(weights, np.sin(two_phi)))
        if math.hypot(s1, s2) < 1e-12 * total:
            raise DomainError(
                f"polar pattern is isotropic at detuning {d}: no effective angle"
            )
        angles[i] = fitting.fold_angle(math.degrees(0.5 * math.atan2(s2, s1)))
    return angles


# --- file formats -------------------------------------------------------------
#
# Spectrum CSV: rows 'wavelength_nm,counts' with optional '#' comments.
# Tuning manifest JSON: {"steps": [{"index": 0, "file": "step00.csv"}, ...]},
# file paths relative to the manifest location.


def save_spectrum(spectrum: PLSpectrum, path):
    with open(path, "w") as fh:
        fh.write("# wavelength_nm,counts\n")
        for wl, c in zip(spectrum.wavelengths, spectrum.intensities):
            fh.write(f"{float(wl)!r},{float(c)!r}\n")


def load_spectrum(path) -> PLSpectrum:
    wavelengths, counts = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise InputFormatError(path, lineno, "expected 'wavelength_nm,counts'")
            try:
                wavelengths.append(float(parts[0]))
                counts.append(float(parts[1]))
            except ValueError:
                raise InputFormatError(path, lineno, "bad numeric value") from None
    if not wavelengths:
        raise InputFormatError(path, 0, "no data rows")
    try:
        return PLSpectrum(np.asarray(wavelengths), np.asarray(counts))
    except ValidationError as err:
        raise InputFormatError(path, 0, str(err)) from None


def load_manifest(path):
    """Load a tuning manifest; returns a list of (step_index, spectrum)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise InputFormatError(path, err.lineno, f"bad JSON: {err.msg}") from None
    if not isinstance(doc, dict) or "steps" not in doc:
        raise InputFormatError(path, 0, "manifest must be an object with a 'steps' list")
    base = os.path.dirname(os.path.abspath(path))
    steps = []
    for entry in doc["steps"]:
        try:
            index = int(entry["index"])
            rel = entry["file"]
        except (TypeError, KeyError):
            raise InputFormatError(path, 0, "each step needs 'index' and 'file'") from None
        steps.append((index, load_spectrum(os.path.join(base, rel))))
    if not steps:
        raise InputFormatError(path, 0, "manifest lists no steps")
    return steps
