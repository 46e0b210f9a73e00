import math

import numpy as np
import pytest

from sivcav import dynamics, fitting, montecarlo
from sivcav.errors import DomainError, RankDeficiencyError
from sivcav.models import (
    G2Curve,
    G2Params,
    PLSpectrum,
    PolarizationScan,
    SaturationCurve,
    ThreeLevelRates,
)


def central_jacobian(func, p, scales):
    """Independent central-difference reference for the Jacobian cross-check."""
    p = np.asarray(p, dtype=float)
    r0 = np.asarray(func(p))
    jac = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = (np.finfo(float).eps ** (1.0 / 3.0)) * scales[j]
        up, dn = p.copy(), p.copy()
        up[j] += h
        dn[j] -= h
        jac[:, j] = (np.asarray(func(up)) - np.asarray(func(dn))) / (2.0 * h)
    return jac


# each entry: model, x grid, parameter point, and the per-parameter scales a
# fitter would use (shift parameters respond on the feature width, not on
# their absolute value)
MODEL_ZOO = [
    (
        fitting.g2_model,
        np.linspace(-20e-9, 20e-9, 101),
        np.array([0.8, 0.48e-9, 5e-9]),
        np.array([0.8, 0.48e-9, 5e-9]),
    ),
    (
        lambda x, a, t1, t2: fitting.g2_model_irf(x, a, t1, t2, 0.3e-9),
        np.linspace(-20e-9, 20e-9, 101),
        np.array([0.8, 0.48e-9, 5e-9]),
        np.array([0.8, 0.48e-9, 5e-9]),
    ),
    (
        fitting.multi_lorentzian,
        np.linspace(730.0, 750.0, 120),
        np.array([739.9, 2.3, 1000.0, 60.0]),
        np.array([2.3, 2.3, 1000.0, 60.0]),
    ),
    (
        fitting.cos2_model,
        np.linspace(0.0, 180.0, 37),
        np.array([20.0, 120.0, 15.0]),
        np.array([20.0, 120.0, 15.0]),
    ),
    (
        fitting.saturation_model,
        np.linspace(0.05, 6.0, 24),
        np.array([1e6, 0.9]),
        np.array([1e6, 0.9]),
    ),
]


class TestJacobian:
    @pytest.mark.parametrize(
        "model,x,p,scales", MODEL_ZOO, ids=["g2", "g2-irf", "lorentzian", "cos2", "saturation"]
    )
    def test_forward_vs_central_difference(self, model, x, p, scales):
        def residual(q):
            return np.asarray(model(x, *q), dtype=float)

        forward = fitting.numerical_jacobian(residual, p, scales)
        central = central_jacobian(residual, p, scales)
        denom = np.max(np.abs(central), axis=0)
        denom[denom == 0] = 1.0
        rel = np.max(np.abs(forward - central) / denom)
        assert rel < 1e-6


class TestEngine:
    def test_noiseless_self_fit(self):
        x = np.linspace(0.0, 10.0, 60)
        true = (2.5, -1.2, 0.4)

        def model(x, a, b, c):
            return a * np.exp(-c * x) + b

        y = model(x, *true)
        fit = fitting.least_squares(model, x, y, [1.0, 0.0, 0.2], names=("a", "b", "c"))
        assert fit.converged
        assert fit.values == pytest.approx(true, rel=1e-8)

    def test_linear_matches_normal_equations(self, rng):
        # the engine's accuracy floor scales with the residual level (finite
        # difference noise couples to the misfit), so compare at modest noise
        x = np.linspace(0.0, 5.0, 40)
        y = 3.0 * x - 0.7 + rng.normal(0, 0.005, 40)
        fit = fitting.least_squares(lambda x, a, b: a * x + b, x, y, [0.0, 0.0])
        design = np.vstack([x, np.ones_like(x)]).T
        ref = np.linalg.lstsq(design, y, rcond=None)[0]
        assert fit.values == pytest.approx(ref, rel=1e-10)

    def test_duplicate_parameter_rank_deficiency(self):
        x = np.linspace(0.0, 5.0, 20)
        with pytest.raises(RankDeficiencyError) as err:
            fitting.least_squares(lambda x, a, b: (a + b) * x, x, 2.0 * x, [1.0, 1.0], names=("a", "b"))
        assert set(err.value.parameters) == {"a", "b"}

    def test_cost_trace_never_increases(self, rng):
        x = np.linspace(-20e-9, 20e-9, 151)
        y = fitting.g2_model(x, 0.8, 0.48e-9, 5e-9) + rng.normal(0, 0.02, 151)
        fit = fitting.fit_g2(G2Curve(x, np.clip(y, 0, None)))
        assert all(b <= a for a, b in zip(fit.cost_trace, fit.cost_trace[1:]))

    def test_covariance_shrinks_with_data(self, rng):
        def run(n):
            x = np.linspace(0.05, 6.0, n)
            y = fitting.saturation_model(x, 1e5, 0.9) + rng.normal(0, 500.0, n)
            fit = fitting.fit_saturation(SaturationCurve(x, np.clip(y, 0, None)))
            return fit.covariance[0, 0]

        var_small = np.median([run(30) for _ in range(8)])
        var_large = np.median([run(300) for _ in range(8)])
        ratio = var_small / var_large
        assert 3.0 < ratio < 33.0  # ~10x shrink for 10x data

    def test_nonconvergence_is_flagged_not_raised(self):
        # one iteration budget cannot converge from a bad start
        x = np.linspace(0.0, 10.0, 30)
        y = np.exp(-0.7 * x)
        fit = fitting.least_squares(
            lambda x, c: np.exp(-c * x), x, y, [25.0], max_iterations=1
        )
        assert not fit.converged

    def test_sigma_weighting_changes_solution(self, rng):
        x = np.linspace(0.0, 1.0, 20)
        y = 2.0 * x + rng.normal(0, 0.01, 20)
        y[-1] += 5.0  # outlier
        sig = np.ones_like(y)
        sig[-1] = 100.0  # de-weighted outlier
        fit_w = fitting.least_squares(lambda x, a: a * x, x, y, [1.0], sigma=sig)
        fit_u = fitting.least_squares(lambda x, a: a * x, x, y, [1.0])
        assert abs(fit_w.values[0] - 2.0) < abs(fit_u.values[0] - 2.0)

    def test_bounds_respected(self):
        x = np.linspace(0.0, 5.0, 20)
        y = -2.0 * x
        fit = fitting.least_squares(
            lambda x, a: a * x, x, y, [0.5], bounds=[(0.0, None)]
        )
        assert fit.values[0] >= 0.0

    def test_init_outside_bounds_rejected(self):
        with pytest.raises(DomainError):
            fitting.least_squares(
                lambda x, a: a * x, np.arange(4.0), np.arange(4.0), [-1.0], bounds=[(0.0, None)]
            )


class TestFitG2:
    def test_synthetic_recovery_within_5_percent(self, rng):
        true = G2Params(0.48e-9, 5e-9, 0.8)
        tau = np.linspace(-30e-9, 30e-9, 301)
        clean = fitting.g2_model(tau, true.a, true.tau1, true.tau2)
        noisy = np.clip(clean + rng.normal(0, 0.02, tau.size), 0, None)
        fit = fitting.fit_g2(G2Curve(tau, noisy))
        assert fit.converged
        assert fit["a"] == pytest.approx(true.a, rel=0.05)
        assert fit["tau1"] == pytest.approx(true.tau1, rel=0.05)
        assert fit["tau2"] == pytest.approx(true.tau2, rel=0.05)

    def test_two_level_a_consistent_with_zero(self, rng):
        tau = np.linspace(-10e-9, 10e-9, 201)
        clean = 1.0 - np.exp(-np.abs(tau) / 0.5e-9)
        noisy = np.clip(clean + rng.normal(0, 0.01, tau.size), 0, None)
        fit = fitting.fit_g2(G2Curve(tau, noisy))
        assert fit["a"] <= max(2.0 * fit.sigma("a"), 0.02)

    def test_irf_fit_recovers_jittered_tau1(self):
        # jittered stream, tau1 ~ 445 ps vs 296 ps per-photon jitter: the fit
        # with the sqrt(2)-wide pair-delay kernel recovers tau1 within 10%
        rates = ThreeLevelRates(80e6, 1.932e9, 315e6, 50e6)
        from sivcav.models import RadiativeBudget

        budget = RadiativeBudget(0.8e9, 0.2e9, 0.0)
        stream = montecarlo.simulate_stream(rates, budget, 0.03, 1.0, seed=91)
        jittered = montecarlo.apply_jitter(stream, 296e-12, seed=92)
        hist = montecarlo.correlate(jittered, 0.1e-9, 60e-9)
        curve = hist.to_curve()
        true_tau1 = dynamics.g2_params_from_rates(rates).tau1
        pair_sigma = math.sqrt(2.0) * 296e-12
        fit_irf = fitting.fit_g2(curve, irf_sigma=pair_sigma)
        assert fit_irf.converged
        assert fit_irf["tau1"] == pytest.approx(true_tau1, rel=0.10)

    def test_kernel_blind_fit_systematically_off_when_jitter_dominates(self):
        # tau1 ~ 180 ps against a 419 ps pair kernel: forcing g2(0)=0 with no
        # kernel squeezes the fitted tau1 far below truth, while the
        # kernel-aware fit stays accurate
        rates = ThreeLevelRates(50e6, 5.238e9, 318e6, 50e6)
        from sivcav.models import RadiativeBudget

        budget = RadiativeBudget(0.8e9, 0.2e9, 0.0)
        stream = montecarlo.simulate_stream(rates, budget, 0.04, 1.0, seed=93)
        jittered = montecarlo.apply_jitter(stream, 296e-12, seed=94)
        hist = montecarlo.correlate(jittered, 0.05e-9, 40e-9)
        curve = hist.to_curve()
        true_tau1 = dynamics.g2_params_from_rates(rates).tau1
        pair_sigma = math.sqrt(2.0) * 296e-12
        fit_irf = fitting.fit_g2(curve, irf_sigma=pair_sigma)
        fit_raw = fitting.fit_g2(curve)
        assert fit_irf["tau1"] == pytest.approx(true_tau1, rel=0.10)
        assert abs(fit_raw["tau1"] - true_tau1) / true_tau1 > 0.15

    def test_needs_span_beyond_tau2(self):
        tau = np.linspace(-1e-9, 1e-9, 51)
        vals = np.clip(fitting.g2_model(tau, 0.5, 0.2e-9, 0.5e-9), 0, None)
        with pytest.raises(DomainError):
            fitting.fit_g2(G2Curve(tau, vals), init=G2Params(0.2e-9, 5e-9, 0.5))

    def test_needs_eight_points(self):
        tau = np.linspace(-2e-9, 2e-9, 5)
        with pytest.raises(DomainError):
            fitting.fit_g2(G2Curve(tau, np.ones(5)))

    def test_rate_set_round_trip_matches_spectral_params(self, rng):
        # rates -> analytic curve -> fit -> params agrees with the spectral
        # decomposition within the fit uncertainty
        for _ in range(5):
            k21 = rng.uniform(1e9, 3e9)
            rates = ThreeLevelRates(0.4 * k21, k21, 0.25 * k21, 0.04 * k21)
            expected = dynamics.g2_params_from_rates(rates)
            grid = np.unique(
                np.concatenate(
                    [
                        np.linspace(0.0, 8 * expected.tau1, 40, endpoint=False),
                        np.geomspace(8 * expected.tau1, 15 * expected.tau2, 70),
                    ]
                )
            )
            curve = dynamics.g2_analytic(rates, grid)
            noisy = np.clip(curve.values + rng.normal(0, 0.01, grid.size), 0, None)
            fit = fitting.fit_g2(G2Curve(grid, noisy, np.full(grid.size, 0.01)))
            assert fit.converged
            for name, truth in (("a", expected.a), ("tau1", expected.tau1), ("tau2", expected.tau2)):
                assert abs(fit[name] - truth) < 5.0 * max(fit.sigma(name), 0.01 * truth)


class TestFitLorentzians:
    def test_single_peak_q_322(self):
        wl = np.linspace(730.0, 750.0, 500)
        spec = PLSpectrum(wl, fitting.lorentzian_peak(wl, 739.9, 2.3, 900.0) + 40.0)
        fit = fitting.fit_lorentzians(spec, 1, [739.0])
        peak = fitting.lorentzian_peak_summary(fit, 1)[0]
        assert peak["q"] == pytest.approx(739.9 / 2.3, rel=1e-6)
        assert peak["q"] == pytest.approx(322.0, abs=0.5)

    def test_single_peak_q_435(self):
        wl = np.linspace(730.0, 750.0, 500)
        spec = PLSpectrum(wl, fitting.lorentzian_peak(wl, 740.0, 1.7, 900.0) + 40.0)
        fit = fitting.fit_lorentzians(spec, 1, [740.5])
        peak = fitting.lorentzian_peak_summary(fit, 1)[0]
        assert peak["q"] == pytest.approx(740.0 / 1.7, rel=1e-6)
        assert peak["q"] == pytest.approx(435.0, abs=0.5)

    def test_flat_spectrum_amplitude_consistent_with_zero(self, rng):
        wl = np.linspace(730.0, 750.0, 200)
        counts = 100.0 + rng.normal(0, 1.0, 200)
        fit = fitting.fit_lorentzians(PLSpectrum(wl, np.clip(counts, 0, None)), 1, [740.0])
        amp = fit["amplitude_1"]
        assert abs(amp) < 3.0 * max(fit.sigma("amplitude_1"), 1.0)
        assert fit["baseline"] == pytest.approx(100.0, abs=1.0)

    def test_two_peaks(self):
        wl = np.linspace(725.0, 755.0, 700)
        y = (
            30.0
            + fitting.lorentzian_peak(wl, 735.0, 1.5, 500.0)
            + fitting.lorentzian_peak(wl, 746.0, 3.0, 300.0)
        )
        fit = fitting.fit_lorentzians(PLSpectrum(wl, y), 2, [734.0, 747.0])
        peaks = fitting.lorentzian_peak_summary(fit, 2)
        assert peaks[0]["center"] == pytest.approx(735.0, abs=1e-6)
        assert peaks[1]["center"] == pytest.approx(746.0, abs=1e-6)

    def test_init_center_outside_range_rejected(self):
        wl = np.linspace(730.0, 750.0, 100)
        spec = PLSpectrum(wl, np.ones(100))
        with pytest.raises(DomainError):
            fitting.fit_lorentzians(spec, 1, [700.0])


class TestFitCos2:
    def test_recovery_within_10_degrees(self, rng):
        angles = np.linspace(0.0, 170.0, 18)
        clean = fitting.cos2_model(angles, 0.0, 200.0, 20.0)
        noisy = np.clip(clean + rng.normal(0, 10.0, angles.size), 0, None)
        fit = fitting.fit_cos2(PolarizationScan(angles, noisy))
        assert abs(fit["phi0"]) < 10.0

    def test_isotropic_scan_zero_visibility(self, rng):
        angles = np.linspace(0.0, 170.0, 18)
        counts = 100.0 + rng.normal(0, 2.0, angles.size)
        fit = fitting.fit_cos2(PolarizationScan(angles, np.clip(counts, 0, None)))
        assert fitting.cos2_visibility(fit) == pytest.approx(0.0, abs=0.05)

    def test_angle_canonicalized(self):
        angles = np.linspace(0.0, 175.0, 36)
        clean = fitting.cos2_model(angles, 95.0, 150.0, 10.0)
        fit = fitting.fit_cos2(PolarizationScan(angles, clean))
        assert fit["phi0"] == pytest.approx(-85.0, abs=1e-6)

    def test_fold_angle(self):
        assert fitting.fold_angle(95.0) == pytest.approx(-85.0)
        assert fitting.fold_angle(90.0) == pytest.approx(90.0)
        assert fitting.fold_angle(-90.0) == pytest.approx(90.0)
        assert fitting.fold_angle(180.0) == pytest.approx(0.0)

    def test_needs_span(self):
        angles = np.linspace(0.0, 90.0, 10)
        with pytest.raises(DomainError):
            fitting.fit_cos2(PolarizationScan(angles, np.ones(10)))


class TestFitSaturation:
    def test_recovery_one_milliwatt(self, rng):
        powers = np.linspace(0.1, 6.0, 14)
        clean = fitting.saturation_model(powers, 5e5, 1.0)
        noisy = np.clip(clean * (1 + 0.01 * rng.standard_normal(powers.size)), 0, None)
        fit = fitting.fit_saturation(SaturationCurve(powers, noisy))
        assert fit["p_sat"] == pytest.approx(1.0, rel=0.03)

    def test_recovery_089_milliwatt(self, rng):
        powers = np.linspace(0.1, 6.0, 14)
        clean = fitting.saturation_model(powers, 5e5, 0.89)
        noisy = np.clip(clean * (1 + 0.01 * rng.standard_normal(powers.size)), 0, None)
        fit = fitting.fit_saturation(SaturationCurve(powers, noisy))
        assert fit["p_sat"] == pytest.approx(0.89, rel=0.03)

    def test_linear_regime_large_covariance(self, rng):
        # all powers far below the knee: p_sat barely constrained
        powers = np.linspace(0.001, 0.01, 10)
        clean = fitting.saturation_model(powers, 5e5, 1.0)
        noisy = clean * (1 + 0.005 * rng.standard_normal(powers.size))
        fit = fitting.fit_saturation(SaturationCurve(powers, np.clip(noisy, 0, None)))
        assert fit.sigma("p_sat") / fit["p_sat"] > 0.2


class TestFitResultSerialization:
    def test_json_shape(self):
        x = np.linspace(0.0, 5.0, 20)
        fit = fitting.least_squares(lambda x, a, b: a * x + b, x, 2 * x + 1, [1.0, 0.0], names=("a", "b"))
        doc = fit.to_dict()
        assert set(doc) == {"params", "covariance", "residual_norm", "iterations", "converged"}
        assert doc["params"]["a"]["value"] == pytest.approx(2.0, abs=1e-9)
        assert "sigma" in doc["params"]["a"]
        cov = np.asarray(doc["covariance"])
        assert cov.shape == (2, 2)
        assert np.allclose(cov, cov.T)
