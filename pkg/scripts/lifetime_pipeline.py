#!/usr/bin/env python3
"""End-to-end synthetic lifetime-reduction experiment.

Builds the cavity-coupled and bandgap-only rate budgets of the bundled
deterministic-placement scenario, simulates detector-jittered photon streams
on and off resonance, correlates them, fits the two-exponential model with
the Gaussian pair-delay kernel, and reports the lifetime reduction.
Optionally writes the two normalized histograms as CSV.
"""

import argparse
import math

import numpy as np

from sivcav import dynamics, fitting, montecarlo, purcell
from sivcav.models import PhotonicEnvironment, RadiativeBudget, ThreeLevelRates

parser = argparse.ArgumentParser()
parser.add_argument("--seed", type=int, default=8001)
parser.add_argument("--jitter", type=float, default=296e-12)
parser.add_argument("--f-cav", type=float, default=5.15)
parser.add_argument("--f-phc", type=float, default=0.25)
parser.add_argument("--out-prefix", default=None, help="write <prefix>_{on,off}.csv histograms")
args = parser.parse_args()

budget = RadiativeBudget(1.0 / 1.44e-9, 1.0 / 5.75e-9, 1.0 / 583e-12)
cav = purcell.modified_budget(budget, PhotonicEnvironment.cavity_coupled(args.f_cav, args.f_phc))
phc = purcell.modified_budget(budget, PhotonicEnvironment.bandgap_only(args.f_phc))
pair_sigma = math.sqrt(2.0) * args.jitter

fits = {}
for idx, (label, modified, duration) in enumerate(
    (("on", cav, 0.06), ("off", phc, 0.8))
):
    rates = ThreeLevelRates(50e6, modified.gamma_total, 0.318e9, 50e6)
    emission = RadiativeBudget(modified.channel_zpl, modified.channel_psb, modified.channel_nr)
    stream = montecarlo.simulate_stream(rates, emission, duration, 1.0, seed=args.seed + 2 * idx)
    jittered = montecarlo.apply_jitter(stream, args.jitter, seed=args.seed + 2 * idx + 1)
    hist = montecarlo.correlate(jittered, 0.05e-9, 60e-9)
    if args.out_prefix:
        montecarlo.save_histogram(hist, f"{args.out_prefix}_{label}.csv")
    fit = fitting.fit_g2(hist.to_curve(), irf_sigma=pair_sigma)
    true = dynamics.g2_params_from_rates(rates)
    fits[label] = fit
    print(
        f"{label:>3}: {len(stream):>8d} photons, tau1 fit {fit['tau1'] * 1e12:6.1f} ps "
        f"(true {true.tau1 * 1e12:6.1f} ps), tau2 {fit['tau2'] * 1e9:5.1f} ns, a {fit['a']:.3f}"
    )

ratio = fits["on"]["tau1"] / fits["off"]["tau1"]
print(f"lifetime ratio on/off = {ratio:.3f}  ->  reduction factor {1.0 / ratio:.2f}x")
