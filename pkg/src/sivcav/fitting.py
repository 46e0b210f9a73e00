"""Nonlinear least squares and model-specific curve fitters.

The engine is a damped Gauss-Newton iteration with a Levenberg-Marquardt
trust parameter, numerical forward-difference Jacobians (step
sqrt(machine epsilon) times a per-parameter scale) and an accept/reject rule
that never lets the cost increase. Convergence is declared when the relative
parameter step falls below ``step_rtol`` or the relative cost decrease falls
below ``cost_rtol``. Weighting is 1/sigma^2 when uncertainties are supplied
and uniform otherwise.

On top of the engine sit the fitters used throughout the package: the
two-exponential g2 model (optionally convolved with a Gaussian instrument
response), multi-Lorentzian spectra, cos^2 polarization scans, and
two-parameter saturation curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RankDeficiencyError
from .models import G2Curve, G2Params, PLSpectrum, PolarizationScan, SaturationCurve

SQRT_EPS = math.sqrt(np.finfo(float).eps)
RANK_TOL = 1e-12
MAX_DAMPING = 1e14


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit.

    ``residual_norm`` is the root of the weighted sum of squared residuals;
    ``cost_trace`` records the cost after every accepted iteration (it is
    non-increasing by construction).
    """

    names: tuple[str, ...]
    values: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    cost_trace: tuple[float, ...]
    dof: int

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def sigma(self, name):
        i = self.names.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    @property
    def sigmas(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self):
        sig = self.sigmas
        return {
            "params": {
                name: {"value": float(v), "sigma": float(s)}
                for name, v, s in zip(self.names, self.values, sig)
            },
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def poisson_sigmas(counts):
    """Per-bin uncertainties sqrt(max(count, 1)) for histogram counts."""
    return np.sqrt(np.clip(np.asarray(counts, dtype=float), 1.0, None))


CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


def numerical_jacobian(func, p, scales=None, bounds=None, central=False):
    """Finite-difference Jacobian of a vector function at p.

    Forward differences with step sqrt(machine epsilon) * scales[j] by
    default; ``central=True`` switches to central differences with
    eps^(1/3) steps (used for the final polish and covariance, where the
    lower cancellation noise matters). The default scale is max(|p_j|, 1);
    pass explicit scales for shift parameters whose response length differs
    from their absolute value (e.g. a peak center). When a step would leave
    the bounds the difference is taken one-sided on the feasible side.
    """
    p = np.asarray(p, dtype=float)
    r0 = np.asarray(func(p), dtype=float)
    n = p.size
    jac = np.empty((r0.size, n))
    if scales is None:
        scales = np.maximum(np.abs(p), 1.0)
    for j in range(n):
        h = (CBRT_EPS if central else SQRT_EPS) * abs(scales[j])
        if h == 0.0:
            h = SQRT_EPS
        lo = hi = None
        if bounds is not None:
            lo, hi = bounds[j]
        if central and (lo is None or p[j] - h >= lo) and (hi is None or p[j] + h <= hi):
            up, dn = p.copy(), p.copy()
            up[j] += h
            dn[j] -= h
            h_eff = up[j] - dn[j]
            jac[:, j] = (
                np.asarray(func(up), dtype=float) - np.asarray(func(dn), dtype=float)
            ) / h_eff
            continue
        if hi is not None and p[j] + h > hi and (lo is None or p[j] - h >= lo):
            h = -h
        stepped = p.copy()
        stepped[j] += h
        h_eff = stepped[j] - p[j]  # the step actually representable at p[j]
        jac[:, j] = (np.asarray(func(stepped), dtype=float) - r0) / h_eff
    return jac


def _project(p, bounds):
    if bounds is None:
        return p
    out = p.copy()
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None and out[j] < lo:
            out[j] = lo
        if hi is not None and out[j] > hi:
            out[j] = hi
    return out


def _singular_direction_names(jac, names):
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s[0] == 0.0:
        return list(names), 0.0
    ratio = s[-1] / s[0]
    v = np.abs(vt[-1])
    involved = [names[j] for j in range(len(names)) if v[j] >= 0.3 * v.max()]
    return involved, ratio


def _lm_iterate(residual_fn, p0, bounds, jac_scales, names, max_iterations, step_rtol, cost_rtol):
    p = _project(np.asarray(p0, dtype=float).copy(), bounds)
    r = residual_fn(p)
    if not np.all(np.isfinite(r)):
        raise DomainError("residuals are not finite at the initial parameters")
    cost = 0.5 * float(r @ r)
    trace = [cost]
    lam = 1e-3
    converged = False
    iterations = 0

    jac = numerical_jacobian(residual_fn, p, jac_scales(p), bounds)
    involved, ratio = _singular_direction_names(jac, names)
    if ratio < RANK_TOL:
        raise RankDeficiencyError(
            "singular normal equations: parameters "
            + ", ".join(involved)
            + " are not independently identifiable",
            parameters=involved,
        )

    while iterations < max_iterations:
        grad = jac.T @ r
        if np.max(np.abs(grad)) < 1e-14 * max(1.0, cost):
            converged = True
            break
        normal = jac.T @ jac
        diag = np.diag(normal).copy()
        floor = diag.max() if diag.max() > 0 else 1.0
        diag[diag <= 0] = floor * 1e-12
        accepted = False
        while lam <= MAX_DAMPING:
            try:
                delta = np.linalg.solve(normal + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = _project(p + delta, bounds)
            r_new = residual_fn(p_new)
            if np.all(np.isfinite(r_new)):
                cost_new = 0.5 * float(r_new @ r_new)
                if cost_new < cost:
                    accepted = True
                    break
                if cost_new == cost:
                    converged = True
                    break
            lam *= 10.0
        if not accepted:
            break
        iterations += 1
        step_rel = float(np.linalg.norm(p_new - p)) / (float(np.linalg.norm(p)) + 1e-300)
        cost_rel = (cost - cost_new) / max(cost, 1e-300)
        p, r, cost = p_new, r_new, cost_new
        trace.append(cost)
        lam = max(lam / 3.0, 1e-14)
        jac = numerical_jacobian(residual_fn, p, jac_scales(p), bounds)
        if step_rel < step_rtol or cost_rel < cost_rtol:
            converged = True
            break

    if converged:
        # a few undamped Gauss-Newton polish steps with central-difference
        # Jacobians remove the residual bias that forward-difference noise
        # and the trust parameter leave on (near-)linear problems
        for _ in range(3):
            jac = numerical_jacobian(residual_fn, p, jac_scales(p), bounds, central=True)
            try:
                delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(delta)):
                break
            p_new = _project(p + delta, bounds)
            r_new = residual_fn(p_new)
            if not np.all(np.isfinite(r_new)):
                break
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new > cost:
                break
            improved = cost_new < cost
            p, r, cost = p_new, r_new, cost_new
            trace.append(cost)
            if not improved:
                break
    # covariance uses the low-noise central-difference Jacobian at the solution
    jac = numerical_jacobian(residual_fn, p, jac_scales(p), bounds, central=True)

    return p, r, cost, trace, iterations, converged, jac


def least_squares(
    model,
    xdata,
    ydata,
    p0,
    sigma=None,
    bounds=None,
    names=None,
    scales=None,
    max_iterations=500,
    step_rtol=1e-10,
    cost_rtol=1e-12,
    fixup=None,
    jitter_retries=0,
    jitter_seed=1234,
):
    """Fit ``model(x, *params)`` to data by damped Gauss-Newton iteration.

    Parameters
    ----------
    model : callable
        model(x, *params) -> predicted y.
    xdata, ydata : array_like
        Data arrays; x is passed through to the model untouched.
    p0 : array_like
        Initial parameter values (must lie within bounds).
    sigma : array_like, optional
        Per-point 1-sigma uncertainties; residuals are divided by sigma.
    bounds : sequence of (lo, hi), optional
        Per-parameter box bounds; None entries are unbounded. Steps are
        projected onto the box.
    names : sequence of str, optional
        Parameter names used in results and error messages.
    scales : array_like, optional
        Characteristic magnitude per parameter, used to size the numerical
        Jacobian steps; defaults to |p0| (1.0 where p0 is zero). Supply these
        when a parameter legitimately starts at zero on a non-unit scale.
    fixup : callable, optional
        params -> params canonicalization applied to every candidate before
        evaluation (used e.g. to keep tau1 < tau2 ordered during g2 fits).
    jitter_retries : int
        When the base fit does not converge, retry from this many jittered
        starting points (deterministic via jitter_seed) and keep the best.

    Returns
    -------
    FitResult with covariance = (Jt W J)^-1 scaled by the reduced chi-square.

    Raises
    ------
    RankDeficiencyError when the Jacobian is numerically rank deficient,
    naming the unidentifiable parameter combination. Non-convergence is NOT
    an exception; it is reported via ``converged=False``.
    """
    y = np.asarray(ydata, dtype=float).ravel()
    p0 = np.asarray(p0, dtype=float)
    n = p0.size
    if names is None:
        names = tuple(f"p{i}" for i in range(n))
    names = tuple(names)
    if sigma is None:
        weights = np.ones_like(y)
    else:
        sig = np.asarray(sigma, dtype=float).ravel()
        if sig.shape != y.shape or np.any(sig <= 0):
            raise DomainError("sigma must be positive and match ydata in length")
        weights = 1.0 / sig
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p0))):
        raise DomainError("data and initial parameters must be finite")
    if bounds is not None:
        if len(bounds) != n:
            raise DomainError("bounds must supply one (lo, hi) pair per parameter")
        for j, (lo, hi) in enumerate(bounds):
            if lo is not None and hi is not None and lo > hi:
                raise DomainError(f"bound for {names[j]} has lo > hi")
            if (lo is not None and p0[j] < lo) or (hi is not None and p0[j] > hi):
                raise DomainError(f"initial value of {names[j]} violates its bounds")

    def residual_fn(p):
        if fixup is not None:
            p = fixup(p.copy())
        with np.errstate(all="ignore"):
            pred = np.asarray(model(xdata, *p), dtype=float).ravel()
        return (pred - y) * weights

    if scales is None:
        base_scales = np.where(np.abs(p0) > 0, np.abs(p0), 1.0)

        def jac_scales(p):
            return np.maximum(np.abs(p), base_scales)
    else:
        fixed_scales = np.abs(np.asarray(scales, dtype=float))
        if fixed_scales.shape != p0.shape or np.any(fixed_scales <= 0):
            raise DomainError("scales must be positive and match p0 in length")

        def jac_scales(_p):
            return fixed_scales

    def run(start):
        return _lm_iterate(
            residual_fn, start, bounds, jac_scales, names,
            max_iterations, step_rtol, cost_rtol,
        )

    p, r, cost, trace, iterations, converged, jac = run(p0)

    if not converged and jitter_retries > 0:
        rng = np.random.default_rng(jitter_seed)
        best = (p, r, cost, trace, iterations, converged, jac)
        for _ in range(jitter_retries):
            start = p0 * (1.0 + 0.25 * rng.uniform(-1.0, 1.0, size=n))
            start = np.where(np.abs(start) > 0, start, 0.1 * rng.standard_normal(n))
            start = _project(start, bounds)
            try:
                attempt = run(start)
            except (DomainError, RankDeficiencyError):
                continue
            if attempt[5] and (not best[5] or attempt[2] < best[2]):
                best = attempt
            elif not best[5] and attempt[2] < best[2]:
                best = attempt
        p, r, cost, trace, iterations, converged, jac = best

    if fixup is not None:
        p = fixup(p.copy())

    # directions that became degenerate at the solution surface as very large
    # covariance entries (unresolved components), not as an error; structural
    # degeneracy is caught at the starting point inside _lm_iterate
    dof = max(y.size - n, 1)
    chi2_red = (2.0 * cost) / dof
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    s = np.clip(s, max(s[0], 1e-300) * RANK_TOL, None)
    cov = (vt.T * (1.0 / s**2)) @ vt * chi2_red
    return FitResult(
        names=names,
        values=p,
        covariance=cov,
        residual_norm=math.sqrt(2.0 * cost),
        iterations=iterations,
        converged=converged,
        cost_trace=tuple(trace),
        dof=dof,
    )


# --- model zoo ---------------------------------------------------------------


def g2_model(tau, a, tau1, tau2):
    """Two-exponential intensity correlation
    1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2).

    Grouped so that g2(0) = 0 holds exactly in floating point.
    """
    at = np.abs(np.asarray(tau, dtype=float))
    e1 = np.exp(-at / tau1)
    e2 = np.exp(-at / tau2)
    return (1.0 - e1) + a * (e2 - e1)


def g2_model_irf(tau, a, tau1, tau2, irf_sigma, n_nodes=121):
    """g2 model convolved with a Gaussian timing kernel of width irf_sigma.

    Direct quadrature on a kernel grid truncated at 6 sigma; the weights are
    renormalized so a flat model stays flat. Note that jitter applied
    independently to each photon widens the *pair delay* kernel by sqrt(2)
    relative to the single-photon jitter.
    """
    if irf_sigma <= 0:
        return g2_model(tau, a, tau1, tau2)
    s = np.linspace(-6.0 * irf_sigma, 6.0 * irf_sigma, n_nodes)
    w = np.exp(-0.5 * (s / irf_sigma) ** 2)
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= w.sum()
    tau = np.asarray(tau, dtype=float)
    shifted = tau[..., None] - s
    return g2_model(shifted, a, tau1, tau2) @ w


def lorentzian_peak(x, center, fwhm, amplitude):
    """Lorentzian with peak height ``amplitude`` and full width ``fwhm``."""
    hw = fwhm / 2.0
    return amplitude * hw**2 / ((np.asarray(x, dtype=float) - center) ** 2 + hw**2)


def multi_lorentzian(x, *params):
    """Sum of Lorentzians plus a constant baseline.

    params = (center_1, fwhm_1, amplitude_1, ..., center_n, fwhm_n,
    amplitude_n, baseline).
    """
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, params[-1])
    for k in range(0, len(params) - 1, 3):
        out += lorentzian_peak(x, params[k], params[k + 1], params[k + 2])
    return out


def cos2_model(phi_deg, phi0, i_max, i_min):
    """Polarizer transmission i_min + (i_max - i_min) cos^2(phi - phi0)."""
    c = np.cos(np.radians(np.asarray(phi_deg, dtype=float) - phi0))
    return i_min + (i_max - i_min) * c**2


def saturation_model(power, r_inf, p_sat):
    """Two-level saturation curve r_inf * P / (P + P_sat)."""
    power = np.asarray(power, dtype=float)
    return r_inf * power / (power + p_sat)


def fold_angle(angle_deg):
    """Fold an angle into the canonical polarization range (-90, 90]."""
    a = float(angle_deg) % 180.0
    if a > 90.0:
        a -= 180.0
    return a


# --- model-specific fitters --------------------------------------------------


def _g2_init(curve: G2Curve) -> G2Params:
    at = np.abs(curve.delays)
    v = curve.values
    span = float(at.max())
    a0 = max(float(v.max()) - 1.0, 0.02)
    threshold = 1.0 - (1.0 + a0) * math.exp(-1.0)
    risen = at[(v >= threshold) & (at > 0)]
    tau1_0 = float(risen.min()) if risen.size else span / 20.0
    tau1_0 = min(max(tau1_0, span * 1e-4), span / 3.0)
    excess = np.clip(v - 1.0, 0.0, None)
    excess[at <= 2.0 * tau1_0] = 0.0
    if excess.sum() > 1e-3:
        tau2_0 = float((at * excess).sum() / excess.sum())
    else:
        tau2_0 = span / 5.0
    tau2_0 = min(max(tau2_0, 3.0 * tau1_0), span / 2.0)
    return G2Params(tau1_0, tau2_0, a0)


def _g2_fixup(p):
    # keep a >= 0 and tau2 strictly above tau1 (documented tie-break for the
    # exchange degeneracy between the two exponentials)
    if p[0] < 0:
        p[0] = 0.0
    if p[1] > p[2]:
        p[1], p[2] = p[2], p[1]
    if p[2] <= p[1]:
        p[2] = p[1] * (1.0 + 1e-9)
    return p


def fit_g2(curve: G2Curve, init: G2Params | None = None, irf_sigma: float | None = None) -> FitResult:
    """Fit the two-exponential g2 model to a correlation curve.

    Parameters are (a, tau1, tau2) with bounds a >= 0, tau2 > tau1 > 0. When
    ``irf_sigma`` is given the model is convolved with a Gaussian of that
    width on the delay axis (for histograms of pairwise delays between
    independently jittered photons this is sqrt(2) times the per-photon
    jitter). Uses the curve's sigmas as weights when present.
    """
    if len(curve) < 8:
        raise DomainError("g2 fit needs at least 8 points")
    if init is None:
        init = _g2_init(curve)
    span = float(np.abs(curve.delays).max())
    if span <= init.tau2:
        raise DomainError(
            f"curve must span beyond the tau2 estimate ({init.tau2:.3g} s); "
            f"maximum |delay| is {span:.3g} s"
        )

    if irf_sigma is not None and irf_sigma > 0:
        def model(tau, a, tau1, tau2):
            return g2_model_irf(tau, a, tau1, tau2, irf_sigma)
    else:
        model = g2_model

    tiny = span * 1e-9
    return least_squares(
        model,
        curve.delays,
        curve.values,
        [init.a, init.tau1, init.tau2],
        sigma=curve.sigmas,
        bounds=[(0.0, None), (tiny, None), (tiny, None)],
        names=("a", "tau1", "tau2"),
        fixup=_g2_fixup,
        jitter_retries=5,
    )


def g2_params_from_fit(result: FitResult) -> G2Params:
    return G2Params(result["tau1"], result["tau2"], result["a"])


def fit_lorentzians(spectrum: PLSpectrum, n_peaks: int, init, poisson_weights=False) -> FitResult:
    """Fit ``n_peaks`` Lorentzians plus a constant baseline to a spectrum.

    ``init`` is a sequence of per-peak initializers: either centers (nm) or
    (center, fwhm, amplitude) triples. Overlapping unresolved peaks surface
    as large covariance entries rather than as errors.
    """
    if n_peaks < 1:
        raise DomainError("n_peaks must be >= 1")
    if len(init) != n_peaks:
        raise DomainError("need one initializer per peak")
    wl = spectrum.wavelengths
    counts = spectrum.intensities
    lo, hi = float(wl.min()), float(wl.max())
    span = hi - lo
    baseline0 = float(np.percentile(counts, 10))
    p0 = []
    names = []
    bounds = []
    scales = []
    amp_scale = max(float(counts.max() - counts.min()), 1.0)
    for k, item in enumerate(init, start=1):
        if np.isscalar(item):
            center, fwhm, amp = float(item), span / 20.0, None
        else:
            center, fwhm, amp = item
            center = float(center)
            fwhm = float(fwhm)
            amp = None if amp is None else float(amp)
        if not (lo <= center <= hi):
            raise DomainError(f"initial center {center} nm outside the data range [{lo}, {hi}]")
        if amp is None:
            amp = float(np.interp(center, wl, counts)) - baseline0
        p0 += [center, fwhm, amp]
        names += [f"center_{k}", f"fwhm_{k}", f"amplitude_{k}"]
        bounds += [(lo, hi), (span * 1e-6, span), (None, None)]
        # a center moves the model on the linewidth scale, not on the scale
        # of its own absolute value
        scales += [fwhm, fwhm, max(abs(amp), 0.05 * amp_scale)]
    p0.append(baseline0)
    names.append("baseline")
    bounds.append((None, None))
    scales.append(max(abs(baseline0), 0.05 * amp_scale))
    sigma = poisson_sigmas(counts) if poisson_weights else None
    return least_squares(
        multi_lorentzian, wl, counts, p0,
        sigma=sigma, bounds=bounds, names=tuple(names), scales=scales,
        jitter_retries=5,
    )


def lorentzian_peak_summary(result: FitResult, n_peaks: int):
    """Per-peak summary with quality factor Q = center / fwhm and its
    uncertainty propagated from the fit covariance."""
    peaks = []
    for k in range(1, n_peaks + 1):
        ic = result.names.index(f"center_{k}")
        iw = result.names.index(f"fwhm_{k}")
        c = float(result.values[ic])
        w = float(result.values[iw])
        q = c / w
        grad = np.zeros(len(result.names))
        grad[ic] = 1.0 / w
        grad[iw] = -c / w**2
        var = float(grad @ result.covariance @ grad)
        peaks.append(
            {
                "center": c,
                "center_sigma": result.sigma(f"center_{k}"),
                "fwhm": w,
                "fwhm_sigma": result.sigma(f"fwhm_{k}"),
                "amplitude": result[f"amplitude_{k}"],
                "amplitude_sigma": result.sigma(f"amplitude_{k}"),
                "q": q,
                "q_sigma": math.sqrt(max(var, 0.0)),
            }
        )
    return peaks


def _cos2_fixup(p):
    # i_max < i_min is the same curve with the axis rotated by 90 degrees;
    # swapping keeps the parametrization canonical without changing the model
    if p[1] < p[2]:
        p[1], p[2] = p[2], p[1]
        p[0] += 90.0
    p[0] = fold_angle(p[0])
    return p


def fit_cos2(scan: PolarizationScan) -> FitResult:
    """Fit I(phi) = i_min + (i_max - i_min) cos^2(phi - phi0) to a scan.

    phi0 is reported in the canonical range (-90, 90].
    """
    if scan.angles.size < 5:
        raise DomainError("cos^2 fit needs at least 5 angles")
    span = float(scan.angles.max() - scan.angles.min())
    if span < 135.0:
        raise DomainError(f"angles must span at least 135 degrees, got {span:.1f}")
    i_max0 = float(scan.intensities.max())
    i_min0 = float(scan.intensities.min())
    phi0_0 = fold_angle(float(scan.angles[np.argmax(scan.intensities)]))
    return least_squares(
        cos2_model,
        scan.angles,
        scan.intensities,
        [phi0_0, i_max0, i_min0],
        bounds=[(-270.0, 270.0), (0.0, None), (0.0, None)],
        names=("phi0", "i_max", "i_min"),
        fixup=_cos2_fixup,
        jitter_retries=5,
    )


def cos2_visibility(result: FitResult) -> float:
    i_max, i_min = result["i_max"], result["i_min"]
    total = i_max + i_min
    return (i_max - i_min) / total if total > 0 else 0.0


def fit_saturation(curve: SaturationCurve) -> FitResult:
    """Fit R(P) = R_inf * P / (P + P_sat) to a saturation curve.

    With all powers far below the knee, P_sat is barely constrained and this
    surfaces as a large covariance entry, not as an error.
    """
    if curve.powers.size < 4:
        raise DomainError("saturation fit needs at least 4 powers")
    r_max = float(curve.rates.max())
    if r_max <= 0:
        raise DomainError("saturation fit needs nonzero count rates")
    r_inf0 = 1.5 * r_max
    half = 0.5 * r_inf0
    p_sat0 = float(np.interp(half, curve.rates, curve.powers))
    if not (curve.powers.min() < p_sat0 < curve.powers.max()):
        p_sat0 = float(np.median(curve.powers))
    return least_squares(
        saturation_model,
        curve.powers,
        curve.rates,
        [r_inf0, p_sat0],
        bounds=[(0.0, None), (1e-12, None)],
        names=("r_inf", "p_sat"),
        jitter_retries=5,
    )
