"""Three-level population dynamics and intensity-correlation predictions.

States are (|1> ground, |2> excited, |3> shelved) with pump k12, total decay
k21, shelving k23 and deshelving k31. The column-stochastic generator G acts
on the population vector p as dp/dt = G p. The normalized intensity
correlation is the conditional excited-state population after a detection,

    g2(tau) = p2(tau | p(0) = e1) / p2(steady state),

always computed from the generator spectrum (matrix exponential fallback for
degenerate eigenvalues), never from a hand-derived closed form. For distinct
relaxation eigenvalues the spectral decomposition is exactly the
two-exponential form held by G2Params.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import ClassVar

import numpy as np
from scipy.linalg import expm

from .errors import (
    DegenerateEigenvaluesWarning,
    DomainError,
    InfeasibleMeasurementError,
    InputFormatError,
)
from .models import (
    G2Curve,
    G2Params,
    SaturationCurve,
    ThreeLevelRates,
    _check_finite,
    _check_finite_array,
    _raise_if,
)
from . import fitting

DEGENERACY_RTOL = 1e-6


@dataclass(frozen=True)
class PumpModel:
    """Linear pump law k12 = sigma * P with sigma in Hz per mW."""

    sigma: float

    UNITS: ClassVar[str] = "Hz/mW"

    def __post_init__(self):
        bag = []
        s = _check_finite(bag, "sigma", self.sigma)
        if s <= 0:
            bag.append("sigma must be positive")
        _raise_if(bag)
        object.__setattr__(self, "sigma", s)

    def k12(self, power_mw):
        return self.sigma * np.asarray(power_mw, dtype=float)

    def p_sat(self, rates: ThreeLevelRates) -> float:
        """Saturation power (mW): excited population reaches half its
        infinite-power limit at k12 = (k21 + k23) k31 / (k31 + k23)."""
        return (rates.k21 + rates.k23) * rates.k31 / ((rates.k31 + rates.k23) * self.sigma)

    def to_dict(self):
        return {"sigma": self.sigma, "units": self.UNITS}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["sigma"])


@dataclass(frozen=True, eq=False)
class PowerSweep:
    """Fitted g2 parameters across excitation powers.

    ``params`` entries may be None at a power where the two relaxation
    eigenvalues are degenerate and no two-exponential form exists.
    """

    powers: np.ndarray
    params: tuple
    counts: np.ndarray | None = None

    def __post_init__(self):
        bag = []
        powers = _check_finite_array(bag, "powers", self.powers)
        if powers.ndim != 1:
            bag.append("powers must be 1-D")
        if powers.size and np.any(powers <= 0):
            bag.append("powers must be positive")
        if powers.size >= 2 and not np.all(np.diff(powers) > 0):
            bag.append("powers must be strictly increasing")
        params = tuple(self.params)
        if len(params) != powers.size:
            bag.append("params must align with powers")
        if any(p is not None and not isinstance(p, G2Params) for p in params):
            bag.append("params entries must be G2Params or None")
        counts = self.counts
        if counts is not None:
            counts = _check_finite_array(bag, "counts", counts)
            if counts.shape != powers.shape:
                bag.append("counts must align with powers")
        _raise_if(bag)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return self.powers.size


@dataclass(frozen=True)
class ZeroPowerFit:
    """Result of extrapolating a power sweep to vanishing pump.

    tau1_zero = 1/(k21 + k23) is the zero-power antibunching time constant;
    k21 alone (held in ``rates``) is the decay rate subject to spontaneous-
    emission modification.
    """

    tau1_zero: float
    rates: ThreeLevelRates
    sigma: float
    fit: fitting.FitResult


def generator(rates: ThreeLevelRates) -> np.ndarray:
    """Column-stochastic rate matrix G with dp/dt = G p for p = (p1, p2, p3)."""
    k12, k21, k23, k31 = rates.k12, rates.k21, rates.k23, rates.k31
    return np.array(
        [
            [-k12, k21, k31],
            [k12, -(k21 + k23), 0.0],
            [0.0, k23, -k31],
        ]
    )


def steady_state(rates: ThreeLevelRates) -> np.ndarray:
    """Stationary populations (p1, p2, p3): the normalized kernel of G."""
    a = generator(rates).copy()
    a[0, :] = 1.0  # replace one balance row by the normalization constraint
    b = np.array([1.0, 0.0, 0.0])
    p = np.linalg.solve(a, b)
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def _relaxation_spectrum(rates: ThreeLevelRates):
    """Nonzero eigenvalues of G and the g2 expansion coefficients.

    Returns (lam_fast, lam_slow, a, p2ss, degenerate) where g2(t) =
    1 + c_fast e^(lam_fast t) + c_slow e^(lam_slow t) with c_slow = a and
    c_fast = -(1 + a); `degenerate` flags nearly equal eigenvalues.
    """
    g = generator(rates)
    w, v = np.linalg.eig(g)
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        raise DomainError("generator has no relaxation dynamics")
    if np.max(np.abs(w.imag)) > 1e-9 * scale:
        raise DomainError(
            "complex relaxation eigenvalues: the rate set does not describe "
            "an incoherent three-level cascade (check the input rates)"
        )
    w = w.real
    v = v.real
    order = np.argsort(np.abs(w))
    k_zero, k_slow, k_fast = order[0], order[1], order[2]
    p2ss = float(steady_state(rates)[1])
    if p2ss <= 0.0:
        raise DomainError("steady-state excited population vanishes (k12 = 0)")
    alpha = np.linalg.solve(v, np.array([1.0, 0.0, 0.0]))
    c_slow = float(v[1, k_slow] * alpha[k_slow]) / p2ss
    lam_fast = float(w[k_fast])
    lam_slow = float(w[k_slow])
    degenerate = abs(lam_fast - lam_slow) <= DEGENERACY_RTOL * max(abs(lam_fast), abs(lam_slow))
    return lam_fast, lam_slow, c_slow, p2ss, degenerate


def g2_analytic(rates: ThreeLevelRates, delays) -> G2Curve:
    """Normalized intensity correlation on a delay grid (any sign; |tau| is used).

    g2(0) = 0 exactly and g2 -> 1 at large delays. Computed from the
    eigendecomposition of the generator, with a matrix-exponential fallback
    when the relaxation eigenvalues are degenerate.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.ndim != 1 or delays.size < 1:
        raise DomainError("delays must be a non-empty 1-D array")
    if delays.size >= 2 and not np.all(np.diff(delays) > 0):
        raise DomainError("delays must be strictly increasing")
    at = np.abs(delays)
    lam_fast, lam_slow, a, p2ss, degenerate = _relaxation_spectrum(rates)
    if not degenerate:
        # c_fast = -(1 + a) enforces the initial condition p2(0) = 0; the
        # grouping below keeps it exact in floating point at tau = 0
        e_fast = np.exp(lam_fast * at)
        e_slow = np.exp(lam_slow * at)
        values = (1.0 - e_fast) + a * (e_slow - e_fast)
    else:
        g = generator(rates)
        e1 = np.array([1.0, 0.0, 0.0])
        values = np.empty_like(at)
        for i, t in enumerate(at):
            values[i] = (expm(g * t) @ e1)[1] / p2ss
    return G2Curve(delays, np.clip(values, 0.0, None))


def g2_params_from_rates(rates: ThreeLevelRates) -> G2Params | None:
    """Two-exponential parameters (tau1, tau2, a) implied by a rate set.

    tau1 = -1/lambda_fast, tau2 = -1/lambda_slow, and `a` is the slow-mode
    amplitude from the spectral decomposition, so the closed form matches
    g2_analytic pointwise. Returns None (with a DegenerateEigenvaluesWarning)
    when the eigenvalues are equal to within 1e-6 relative and the form does
    not exist; callers should fall back to sampling g2_analytic.
    """
    lam_fast, lam_slow, a, _, degenerate = _relaxation_spectrum(rates)
    if degenerate:
        warnings.warn(
            "relaxation eigenvalues are degenerate; no two-exponential "
            "parametrization exists (sample g2_analytic instead)",
            DegenerateEigenvaluesWarning,
            stacklevel=2,
        )
        return None
    if a < -1e-9:
        raise DomainError(f"negative bunching amplitude a = {a:.3g} (unphysical input)")
    if a <= 0.0:
        a = 0.0  # also folds round-off negatives and -0.0
    return G2Params(-1.0 / lam_fast, -1.0 / lam_slow, a)


def power_sweep(rates_at_unit_power: ThreeLevelRates, pump: PumpModel, powers) -> PowerSweep:
    """Predicted g2 parameters across powers with k12 = sigma * P.

    The k12 field of ``rates_at_unit_power`` is ignored; the pump model sets
    it per power.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.size < 1 or np.any(powers <= 0):
        raise DomainError("powers must be positive")
    params = []
    for p in powers:
        r = replace(rates_at_unit_power, k12=float(pump.k12(p)))
        params.append(g2_params_from_rates(r))
    return PowerSweep(powers, tuple(params))


def _sweep_observables(powers, k21, k23, k31, sigma):
    out = np.empty(3 * len(powers))
    for i, p in enumerate(powers):
        try:
            r = ThreeLevelRates(sigma * p, k21, k23, k31)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateEigenvaluesWarning)
                g2p = g2_params_from_rates(r)
        except DomainError:
            g2p = None
        if g2p is None:
            out[i::len(powers)] = np.inf  # reject this parameter point
        else:
            out[i] = g2p.tau1
            out[i + len(powers)] = g2p.tau2
            out[i + 2 * len(powers)] = g2p.a
    return out


def extrapolate_zero_power(sweep: PowerSweep) -> ZeroPowerFit:
    """Fit (k21, k23, k31, sigma) to the observed (tau1, tau2, a) triples.

    Residuals are relative for the time constants and scaled by a floor for
    the bunching amplitude, so all three observables contribute comparably.
    Raises RankDeficiencyError naming the parameter when the sweep does not
    identify it.
    """
    usable = [(p, g) for p, g in zip(sweep.powers, sweep.params) if g is not None]
    if len(usable) < 3:
        raise DomainError("zero-power extrapolation needs at least 3 usable powers")
    powers = np.array([p for p, _ in usable])
    t1 = np.array([g.tau1 for _, g in usable])
    t2 = np.array([g.tau2 for _, g in usable])
    a = np.array([g.a for _, g in usable])

    # initial guesses: 1/tau1 is nearly linear in P; tau2 tracks 1/k31;
    # the bunching amplitude fixes k23 through a ~ k12 k23 / (k31 (k12+k21+k23))
    slope, intercept = np.polyfit(powers, 1.0 / t1, 1)
    intercept = max(intercept, 0.1 * float(np.median(1.0 / t1)))
    sigma0 = max(slope, 0.05 * intercept / float(np.median(powers)))
    k31_0 = 1.0 / float(np.median(t2))
    a_hi = float(a[-1])
    k12_hi = sigma0 * float(powers[-1])
    if a_hi > 1e-6 and k12_hi > 0:
        k23_0 = a_hi * k31_0 * (k12_hi + intercept) / k12_hi
        k23_0 = min(k23_0, 0.9 * intercept)
    else:
        k23_0 = 0.0
    k21_0 = max(intercept - k23_0, 0.1 * intercept)

    def model(_x, k21, k23, k31, sigma):
        return _sweep_observables(powers, k21, k23, k31, sigma)

    # the amplitude-based heuristic can land where the relaxation eigenvalues
    # turn complex; fall back to progressively blander starting points
    candidates = [
        (k21_0, k23_0, k31_0, sigma0),
        (0.9 * intercept, 0.1 * intercept, k31_0, sigma0),
        (intercept, 0.0, k31_0, sigma0),
    ]
    p0 = candidates[-1]
    for candidate in candidates:
        if np.all(np.isfinite(model(None, *candidate))):
            p0 = candidate
            break

    y = np.concatenate([t1, t2, a])
    a_floor = max(0.05, float(np.median(np.abs(a))))
    sig = np.concatenate([t1, t2, np.full_like(a, a_floor)])

    eps = 1e-6 * intercept
    fit = fitting.least_squares(
        model,
        powers,
        y,
        p0,
        sigma=sig,
        bounds=[(eps, None), (0.0, None), (eps, None), (eps, None)],
        names=("k21", "k23", "k31", "sigma"),
        scales=(intercept, intercept, k31_0, sigma0),
        jitter_retries=5,
    )
    k21, k23, k31, sigma = (float(v) for v in fit.values)
    rates = ThreeLevelRates(0.0, k21, k23, k31)
    return ZeroPowerFit(1.0 / (k21 + k23), rates, sigma, fit)


def saturation_curve(
    rates_at_unit_power: ThreeLevelRates,
    pump: PumpModel,
    collection_eff: float,
    powers,
    eta_qe: float = 1.0,
) -> SaturationCurve:
    """Detected count rate versus power,
    rate(P) = collection_eff * eta_qe * k21 * p2_steady(P)."""
    collection_eff = float(collection_eff)
    if not (0.0 < collection_eff <= 1.0):
        raise DomainError(f"collection_eff must lie in (0, 1], got {collection_eff}")
    if not (0.0 <= eta_qe <= 1.0):
        raise DomainError(f"eta_qe must lie in [0, 1], got {eta_qe}")
    powers = np.asarray(powers, dtype=float)
    rates = np.empty_like(powers)
    for i, p in enumerate(powers):
        r = replace(rates_at_unit_power, k12=float(pump.k12(p)))
        p2 = float(steady_state(r)[1])
        rates[i] = collection_eff * eta_qe * r.k21 * p2
    return SaturationCurve(powers, rates)


def qe_from_saturation(
    r_inf: float,
    p_sat: float,
    rates_fit: ThreeLevelRates,
    collection_eff: float,
) -> float:
    """Radiative quantum efficiency from a fitted saturation plateau.

    eta = R_inf / (collection_eff * k21 * p2_max) with p2_max the
    infinite-power excited population k31 / (k31 + k23). The fitted
    saturation power is carried along for reporting but does not enter the
    estimator. Values above 1.05 indicate an inconsistent calibration.
    """
    collection_eff = float(collection_eff)
    if collection_eff <= 0:
        raise DomainError("collection_eff must be positive")
    if r_inf < 0 or p_sat <= 0:
        raise DomainError("r_inf must be non-negative and p_sat positive")
    p2_max = rates_fit.k31 / (rates_fit.k31 + rates_fit.k23)
    eta = float(r_inf) / (collection_eff * rates_fit.k21 * p2_max)
    if eta > 1.05:
        raise InfeasibleMeasurementError(
            f"implied quantum efficiency {eta:.3f} exceeds 1: the saturation "
            "plateau is inconsistent with the fitted rates and collection efficiency"
        )
    return eta


# --- power-sweep CSV format --------------------------------------------------
#
# Columns: power_mW, tau1_ns, tau2_ns, a[, rate_cps]; lines starting with '#'
# are comments. Times are converted to seconds on load.


def save_power_sweep(sweep: PowerSweep, path):
    with open(path, "w") as fh:
        cols = "power_mW,tau1_ns,tau2_ns,a"
        if sweep.counts is not None:
            cols += ",rate_cps"
        fh.write(f"# {cols}\n")
        for i, (p, g) in enumerate(zip(sweep.powers, sweep.params)):
            if g is None:
                continue
            row = f"{float(p)!r},{g.tau1 * 1e9!r},{g.tau2 * 1e9!r},{g.a!r}"
            if sweep.counts is not None:
                row += f",{float(sweep.counts[i])!r}"
            fh.write(row + "\n")


def load_power_sweep(path) -> PowerSweep:
    powers, params, counts = [], [], []
    have_counts = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) not in (4, 5):
                raise InputFormatError(path, lineno, "expected 4 or 5 comma-separated columns")
            try:
                vals = [float(tok) for tok in parts]
            except ValueError:
                raise InputFormatError(path, lineno, "bad numeric value") from None
            powers.append(vals[0])
            try:
                params.append(G2Params(vals[1] * 1e-9, vals[2] * 1e-9, vals[3]))
            except Exception as err:
                raise InputFormatError(path, lineno, f"bad g2 parameters: {err}") from None
            if len(vals) == 5:
                have_counts = True
                counts.append(vals[4])
            else:
                counts.append(math.nan)
    if not powers:
        raise InputFormatError(path, 0, "no data rows")
    counts_arr = np.array(counts) if have_counts else None
    return PowerSweep(np.array(powers), tuple(params), counts_arr)
