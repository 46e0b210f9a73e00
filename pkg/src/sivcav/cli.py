"""Command-line interface.

Subcommands wrap the analysis modules into reproducible runs: JSON reports go
to stdout (or --out), human summaries to stderr. Exit codes: 0 success,
2 input/validation error (machine-readable error JSON on stderr), 3 analysis
non-convergence. The only environment variable honored is SIVCAV_SEED, the
default random seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from . import dynamics, fitting, montecarlo, purcell, report, spectra
from .errors import (
    DomainError,
    InfeasibleMeasurementError,
    InputFormatError,
    RankDeficiencyError,
    ValidationError,
)
from .models import (
    CavityMode,
    EmitterLine,
    G2Params,
    PhotonicEnvironment,
    PolarizationScan,
    RadiativeBudget,
    ThreeLevelRates,
)

NONCONVERGED_EXIT = 3


def _default_seed():
    try:
        return int(os.environ.get("SIVCAV_SEED", "0"))
    except ValueError:
        return 0


def _parse_vector(text, n, flag):
    parts = text.split(",")
    if len(parts) != n:
        raise DomainError(f"{flag} needs {n} comma-separated values")
    try:
        return [float(tok) for tok in parts]
    except ValueError:
        raise DomainError(f"{flag} has a non-numeric component: {text!r}") from None


def _unit(v):
    normed = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(normed))
    if norm == 0:
        raise DomainError("zero-length axis vector")
    return tuple(normed / norm)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise InputFormatError(path, err.lineno, f"bad JSON: {err.msg}") from None


def _load_budget(path):
    doc = _load_json(path)
    return RadiativeBudget.from_dict(doc), {path: report.file_sha256(path)}


def _scenario_dir():
    return resources.files("sivcav").joinpath("scenarios")


def _load_scenario(name):
    path = _scenario_dir().joinpath(f"{name}.json")
    if not path.is_file():
        available = sorted(p.name[:-5] for p in _scenario_dir().iterdir() if p.name.endswith(".json"))
        raise DomainError(f"unknown scenario {name!r}; available: {', '.join(available)}")
    with path.open() as fh:
        return json.load(fh)


def _num(value, units, sigma=None):
    return report.result_entry(value, units, sigma)


def _rates_entry(modified):
    return {"value": modified.to_dict(), "units": "Hz"}


# --- purcell -------------------------------------------------------------------


def cmd_purcell(args):
    files = {}
    mode = line = None
    field_axis = None
    fieldmap = None
    fieldmap_pos = None
    budget = None
    f_phc = args.f_phc

    if args.scenario:
        doc = _load_scenario(args.scenario)
        f_phc = doc.get("f_phc", f_phc)
        if doc.get("budget"):
            budget = RadiativeBudget.from_dict(doc["budget"])
        if doc.get("mode"):
            mode = CavityMode.from_dict(doc["mode"])
        if doc.get("line"):
            line = EmitterLine.from_dict(doc["line"])
        if doc.get("field_axis"):
            field_axis = _unit(doc["field_axis"])
        if doc.get("fieldmap"):
            map_path = _scenario_dir().joinpath(doc["fieldmap"])
            with resources.as_file(map_path) as real:
                fieldmap = purcell.load_field_map(real)
                files[str(real)] = report.file_sha256(real)
            fieldmap_pos = doc.get("fieldmap_position")

    if args.q is not None or args.vmode is not None or args.lambda_c is not None:
        if None in (args.q, args.vmode, args.lambda_c):
            raise DomainError("--q, --vmode and --lambda-c must be given together")
        mode = CavityMode(args.lambda_c, args.q, args.vmode)
    if args.lambda_i is not None:
        dipole = _unit(_parse_vector(args.dipole, 3, "--dipole")) if args.dipole else (1.0, 0.0, 0.0)
        line = EmitterLine(args.lambda_i, args.line_width, dipole)
    if args.field_axis:
        field_axis = _unit(_parse_vector(args.field_axis, 3, "--field-axis"))
    if args.fieldmap:
        fieldmap = purcell.load_field_map(args.fieldmap)
        files[args.fieldmap] = report.file_sha256(args.fieldmap)
        if args.pos is None:
            raise DomainError("--fieldmap requires --pos x,y")
        fieldmap_pos = _parse_vector(args.pos, 2, "--pos")
    if args.budget:
        budget, extra = _load_budget(args.budget)
        files.update(extra)

    results = {}
    f_cav = None
    if mode is not None:
        f_p = purcell.ideal_purcell(mode)
        r_lambda = purcell.spectral_overlap(line, mode) if line is not None else 1.0
        if field_axis is not None and line is not None:
            r_mu = purcell.orientation_overlap(line.dipole_axis, field_axis)
        else:
            r_mu = 1.0
        if fieldmap is not None and fieldmap_pos is not None:
            r_r = purcell.spatial_overlap(fieldmap, fieldmap_pos)
        else:
            r_r = 1.0
        overlaps = purcell.OverlapFactors(r_lambda, r_mu, r_r)
        f_cav = purcell.effective_purcell(f_p, overlaps)
        results["f_p"] = _num(f_p, "dimensionless")
        results["r_lambda"] = _num(r_lambda, "dimensionless")
        results["r_mu"] = _num(r_mu, "dimensionless")
        results["r_r"] = _num(r_r, "dimensionless")
        results["f_cav"] = _num(f_cav, "dimensionless")
        if f_phc is not None:
            results["i_pl"] = _num(purcell.pl_enhancement(f_cav, f_phc), "dimensionless")

    if budget is not None:
        bulk = purcell.modified_budget(budget, PhotonicEnvironment.bulk())
        results["rates_bulk"] = _rates_entry(bulk)
        results["eta_qe_bulk"] = _num(bulk.eta_qe, "dimensionless")
        if f_phc is not None and f_phc < 1.0:
            bandgap = purcell.modified_budget(budget, PhotonicEnvironment.bandgap_only(f_phc))
            results["rates_phc"] = _rates_entry(bandgap)
            results["eta_qe_phc"] = _num(bandgap.eta_qe, "dimensionless")
        if f_cav is not None and f_phc is not None:
            cavity = purcell.modified_budget(
                budget, PhotonicEnvironment.cavity_coupled(f_cav, f_phc)
            )
            beta_total, beta_radiative = purcell.mode_emission_fractions(cavity)
            results["rates_cav"] = _rates_entry(cavity)
            results["eta_qe_cav"] = _num(cavity.eta_qe, "dimensionless")
            results["beta_total"] = _num(beta_total, "dimensionless")
            results["beta_radiative"] = _num(beta_radiative, "dimensionless")

    if not results:
        raise DomainError("nothing to compute: supply --scenario, mode flags or --budget")

    inputs = _inputs_echo(args, files)
    doc = report.build_report("purcell", inputs, results)
    summary = [f"purcell: {name} = {entry['value']:.6g}" for name, entry in results.items()
               if isinstance(entry.get("value"), (int, float))]
    report.emit_report(doc, args.out, summary)
    return 0


# --- simulate ------------------------------------------------------------------


def cmd_simulate(args):
    rates = ThreeLevelRates(*_parse_vector(args.rates, 4, "--rates"))
    files = {}
    if args.budget:
        budget, extra = _load_budget(args.budget)
        files.update(extra)
    else:
        budget = RadiativeBudget(1.0, 0.0, 0.0)  # fully radiative, all-ZPL split
    stream = montecarlo.simulate_stream(rates, budget, args.duration, args.det_eff, args.seed)
    if args.jitter and args.jitter > 0 and len(stream):
        stream = montecarlo.apply_jitter(stream, args.jitter, args.seed + 1)
    montecarlo.save_stream(
        stream, args.out_stream, rates=rates,
        meta={"detection_eff": args.det_eff, "jitter_s": args.jitter or 0.0},
    )
    files[args.out_stream] = report.file_sha256(args.out_stream)

    p2 = float(dynamics.steady_state(rates)[1])
    predicted = args.det_eff * budget.eta_qe * rates.k21 * p2
    results = {
        "photon_count": _num(len(stream), "photons"),
        "detected_rate": _num(stream.detected_rate if len(stream) else 0.0, "cps"),
        "predicted_rate": _num(predicted, "cps"),
        "duration": _num(stream.duration, "s"),
    }
    doc = report.build_report(
        "simulate", _inputs_echo(args, files), results, seed=args.seed,
        extra_provenance={"rng_algorithm": stream.rng_algorithm},
    )
    summary = [
        f"simulate: {len(stream)} photons in {stream.duration:.3g} s "
        f"({stream.detected_rate if len(stream) else 0.0:.4g} cps, predicted {predicted:.4g} cps)"
    ]
    report.emit_report(doc, args.out, summary)
    return 0


# --- g2 --------------------------------------------------------------------------


def cmd_g2_fit(args):
    curve = montecarlo.load_g2_csv(args.hist)
    files = {args.hist: report.file_sha256(args.hist)}
    init = None
    if args.init:
        a, t1, t2 = _parse_vector(args.init, 3, "--init")
        init = G2Params(t1, t2, a)
    fit = fitting.fit_g2(curve, init=init, irf_sigma=args.irf)
    results = {
        "a": _num(fit["a"], "dimensionless", fit.sigma("a")),
        "tau1": _num(fit["tau1"], "s", fit.sigma("tau1")),
        "tau2": _num(fit["tau2"], "s", fit.sigma("tau2")),
        "converged": {"value": fit.converged, "units": "flag"},
        "fit": {"value": fit.to_dict(), "units": "json"},
    }
    doc = report.build_report("g2-fit", _inputs_echo(args, files), results)
    summary = [
        f"g2 fit: tau1 = {fit['tau1']:.4g} s, tau2 = {fit['tau2']:.4g} s, "
        f"a = {fit['a']:.4g} (converged={fit.converged})"
    ]
    report.emit_report(doc, args.out, summary)
    return 0 if fit.converged else NONCONVERGED_EXIT


def cmd_g2_correlate(args):
    stream, _meta = montecarlo.load_stream(args.stream)
    files = {args.stream: report.file_sha256(args.stream)}
    hist = montecarlo.correlate(stream, args.bin_width, args.window, args.mode, seed=args.seed)
    montecarlo.save_histogram(hist, args.out_hist)
    files[args.out_hist] = report.file_sha256(args.out_hist)
    results = {
        "n_photons": _num(len(stream), "photons"),
        "n_bins": _num(int(hist.counts.size), "bins"),
        "total_pairs": _num(int(hist.counts.sum()), "pairs"),
        "normalization": _num(hist.normalization, "pairs/bin"),
        "mode": {"value": hist.mode, "units": "label"},
    }
    doc = report.build_report(
        "g2-correlate", _inputs_echo(args, files), results, seed=args.seed
    )
    report.emit_report(doc, args.out, [f"correlate: {hist.counts.sum()} pairs in {hist.counts.size} bins"])
    return 0


def cmd_g2_sweep(args):
    sweep = dynamics.load_power_sweep(args.sweep)
    files = {args.sweep: report.file_sha256(args.sweep)}
    zero = dynamics.extrapolate_zero_power(sweep)
    fit = zero.fit
    results = {
        "tau1_zero": _num(zero.tau1_zero, "s"),
        "k21": _num(zero.rates.k21, "Hz", fit.sigma("k21")),
        "k23": _num(zero.rates.k23, "Hz", fit.sigma("k23")),
        "k31": _num(zero.rates.k31, "Hz", fit.sigma("k31")),
        "sigma_pump": _num(zero.sigma, "Hz/mW", fit.sigma("sigma")),
        "converged": {"value": fit.converged, "units": "flag"},
        "fit": {"value": fit.to_dict(), "units": "json"},
    }
    doc = report.build_report("g2-sweep", _inputs_echo(args, files), results)
    summary = [
        f"sweep: tau1(P->0) = {zero.tau1_zero:.4g} s, k21 = {zero.rates.k21:.6g} Hz"
    ]
    report.emit_report(doc, args.out, summary)
    return 0 if fit.converged else NONCONVERGED_EXIT


# --- spectra ---------------------------------------------------------------------


def _parse_seed_peaks(text):
    seeds = {}
    for item in text.split(","):
        if "=" not in item or ":" not in item.split("=", 1)[1]:
            raise DomainError(
                "--seeds must look like label=center:fwhm[,label=center:fwhm...]"
            )
        label, rest = item.split("=", 1)
        center, fwhm = rest.split(":", 1)
        try:
            seeds[label.strip()] = (float(center), float(fwhm))
        except ValueError:
            raise DomainError(f"bad seed peak {item!r}") from None
    return seeds


def cmd_spectra_fit(args):
    spectrum = spectra.load_spectrum(args.spectrum)
    files = {args.spectrum: report.file_sha256(args.spectrum)}
    inits = []
    for item in args.peaks.split(","):
        parts = item.split(":")
        try:
            if len(parts) == 1:
                inits.append(float(parts[0]))
            elif len(parts) == 3:
                inits.append((float(parts[0]), float(parts[1]), float(parts[2])))
            else:
                raise ValueError
        except ValueError:
            raise DomainError(f"bad --peaks entry {item!r} (use center or center:fwhm:amp)") from None
    fit = fitting.fit_lorentzians(spectrum, len(inits), inits, poisson_weights=args.poisson)
    peaks = fitting.lorentzian_peak_summary(fit, len(inits))
    results = {
        "peaks": {"value": peaks, "units": "nm,counts"},
        "baseline": _num(fit["baseline"], "counts", fit.sigma("baseline")),
        "converged": {"value": fit.converged, "units": "flag"},
        "fit": {"value": fit.to_dict(), "units": "json"},
    }
    doc = report.build_report("spectra-fit", _inputs_echo(args, files), results)
    summary = [
        f"peak {k + 1}: center {p['center']:.4f} nm, fwhm {p['fwhm']:.4f} nm, "
        f"Q = {p['q']:.1f} +- {p['q_sigma']:.1f}"
        for k, p in enumerate(peaks)
    ]
    report.emit_report(doc, args.out, summary)
    return 0 if fit.converged else NONCONVERGED_EXIT


def _manifest_series(args, files):
    steps = spectra.load_manifest(args.manifest)
    files[args.manifest] = report.file_sha256(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    for entry in _load_json(args.manifest)["steps"]:
        path = os.path.join(base, entry["file"])
        files[path] = report.file_sha256(path)
    seeds = _parse_seed_peaks(args.seeds)
    return spectra.track_modes(steps, seeds)


def cmd_spectra_track(args):
    files = {}
    series = _manifest_series(args, files)
    modes = {}
    for label, track in series.tracked_modes.items():
        entry = {
            "n_steps": len(track.points),
            "terminated_at": track.terminated_at,
            "non_monotonic_steps": list(track.non_monotonic_steps),
        }
        if len(track.points) >= 2:
            entry["rate_nm_per_step"] = track.tuning_rate()
        modes[label] = entry
    results = {"modes": {"value": modes, "units": "nm/step"}}
    if args.emit_curves:
        with open(args.emit_curves, "w") as fh:
            fh.write("# label,step,center_nm,fwhm_nm\n")
            for label, track in series.tracked_modes.items():
                for p in track.points:
                    fh.write(f"{label},{p.step},{p.center!r},{p.fwhm!r}\n")
    doc = report.build_report("spectra-track", _inputs_echo(args, files), results)
    summary = [
        f"track {label}: {entry.get('rate_nm_per_step', float('nan')):+.3f} nm/step "
        f"over {entry['n_steps']} steps"
        for label, entry in modes.items()
        if "rate_nm_per_step" in entry
    ]
    report.emit_report(doc, args.out, summary)
    return 0


def cmd_spectra_enhance(args):
    files = {}
    series = _manifest_series(args, files)
    line = EmitterLine(args.lambda_i, args.line_width)
    mode_labels = args.modes.split(",") if args.modes else None
    result = spectra.enhancement_ratio(series, line, mode_labels=mode_labels)
    results = {
        "enhancement_ratio": _num(result.ratio, "dimensionless"),
        "on_step": _num(result.on_step, "step"),
        "off_step": _num(result.off_step, "step"),
    }
    doc = report.build_report("spectra-enhance", _inputs_echo(args, files), results)
    report.emit_report(
        doc, args.out,
        [f"enhancement: x{result.ratio:.3g} (step {result.on_step} vs {result.off_step})"],
    )
    return 0


def cmd_spectra_polarization(args):
    files = {}
    results = {}
    summary = []
    if args.scan:
        scan_doc = np.loadtxt(args.scan, delimiter=",", comments="#", ndmin=2)
        if scan_doc.shape[1] != 2:
            raise InputFormatError(args.scan, 0, "expected two columns angle_deg,counts")
        files[args.scan] = report.file_sha256(args.scan)
        scan = PolarizationScan(scan_doc[:, 0], scan_doc[:, 1])
        fit = fitting.fit_cos2(scan)
        results.update(
            {
                "phi0": _num(fit["phi0"], "deg", fit.sigma("phi0")),
                "i_max": _num(fit["i_max"], "counts", fit.sigma("i_max")),
                "i_min": _num(fit["i_min"], "counts", fit.sigma("i_min")),
                "visibility": _num(fitting.cos2_visibility(fit), "dimensionless"),
                "converged": {"value": fit.converged, "units": "flag"},
                "fit": {"value": fit.to_dict(), "units": "json"},
            }
        )
        summary.append(f"cos^2 fit: phi0 = {fit['phi0']:.2f} deg, visibility {fitting.cos2_visibility(fit):.3f}")
        exit_code = 0 if fit.converged else NONCONVERGED_EXIT
    elif args.mixture:
        doc = _load_json(args.mixture)
        files[args.mixture] = report.file_sha256(args.mixture)
        emitter = spectra.PolarizedChannel(doc["emitter"]["angle"], doc["emitter"]["weight"])
        modes = []
        for m in doc["modes"]:
            channel = spectra.PolarizedChannel(m["angle"], m["weight"])
            mode = CavityMode(m["lambda_c"], m["q_factor"], m.get("mode_volume", 1.0))
            modes.append((channel, mode))
        dspec = doc["detunings"]
        detunings = np.linspace(dspec["start"], dspec["stop"], int(dspec["num"]))
        angles = spectra.polarization_mixture(emitter, modes, doc["line_lambda"], detunings)
        if args.emit_curves:
            with open(args.emit_curves, "w") as fh:
                fh.write("# detuning_nm,phi_deg\n")
                for d, phi in zip(detunings, angles):
                    fh.write(f"{float(d)!r},{float(phi)!r}\n")
        results.update(
            {
                "phi_first": _num(float(angles[0]), "deg"),
                "phi_last": _num(float(angles[-1]), "deg"),
                "n_detunings": _num(int(detunings.size), "points"),
            }
        )
        summary.append(
            f"mixture: phi sweeps {angles[0]:.1f} -> {angles[-1]:.1f} deg over "
            f"[{detunings[0]:.3g}, {detunings[-1]:.3g}] nm"
        )
        exit_code = 0
    else:
        raise DomainError("supply --scan CSV or --mixture JSON")
    doc = report.build_report("spectra-polarization", _inputs_echo(args, files), results)
    report.emit_report(doc, args.out, summary)
    return exit_code


# --- wiring ----------------------------------------------------------------------


def _inputs_echo(args, files):
    skip = {"func"}
    echo = {
        key: value
        for key, value in vars(args).items()
        if key not in skip and isinstance(value, (int, float, str, bool, type(None)))
    }
    return {"flags": echo, "files": files}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sivcav",
        description="Emitter-cavity coupling analysis: Purcell rates, photon "
        "statistics simulation, g2/spectral/polarization fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("purcell", help="Purcell chain and modified rate budgets")
    p.add_argument("--scenario", help="bundled scenario name (siv1, siv3, siv4)")
    p.add_argument("--q", type=float, help="mode quality factor")
    p.add_argument("--vmode", type=float, help="mode volume in (lambda/n)^3")
    p.add_argument("--lambda-c", type=float, help="mode wavelength, nm")
    p.add_argument("--lambda-i", type=float, help="emitter wavelength, nm")
    p.add_argument("--line-width", type=float, default=0.0, help="emitter linewidth, nm")
    p.add_argument("--dipole", help="dipole axis x,y,z (normalized on input)")
    p.add_argument("--field-axis", help="cavity field axis x,y,z")
    p.add_argument("--fieldmap", help="field map CSV")
    p.add_argument("--pos", help="emitter position x,y in the map frame, nm")
    p.add_argument("--f-phc", type=float, default=None, help="bandgap inhibition factor")
    p.add_argument("--budget", help="RadiativeBudget JSON file")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_purcell)

    p = sub.add_parser("simulate", help="simulate a detected photon stream")
    p.add_argument("--rates", required=True, help="k12,k21,k23,k31 in Hz")
    p.add_argument("--duration", type=float, required=True, help="acquisition time, s")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--jitter", type=float, default=0.0, help="detector timing jitter sigma, s")
    p.add_argument("--det-eff", type=float, default=1.0, help="detection efficiency (0, 1]")
    p.add_argument("--budget", help="RadiativeBudget JSON controlling the emission split")
    p.add_argument("--out-stream", required=True, help="photon stream CSV to write")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("g2", help="correlation analysis")
    gsub = p.add_subparsers(dest="g2_command", required=True)

    g = gsub.add_parser("fit", help="fit the two-exponential model to a histogram CSV")
    g.add_argument("--hist", required=True, help="CSV with tau_s,g2[,sigma]")
    g.add_argument("--irf", type=float, default=None, help="Gaussian kernel width on the delay axis, s")
    g.add_argument("--init", help="a,tau1_s,tau2_s initial guess")
    g.add_argument("--out")
    g.set_defaults(func=cmd_g2_fit)

    g = gsub.add_parser("correlate", help="histogram a photon stream")
    g.add_argument("--stream", required=True, help="photon stream CSV")
    g.add_argument("--bin-width", type=float, required=True, help="bin width, s")
    g.add_argument("--window", type=float, required=True, help="maximum |delay|, s")
    g.add_argument("--mode", choices=[montecarlo.MODE_FULL, montecarlo.MODE_START_STOP],
                   default=montecarlo.MODE_FULL)
    g.add_argument("--seed", type=int, default=_default_seed(), help="seed for the start-stop splitter")
    g.add_argument("--out-hist", required=True, help="histogram CSV to write")
    g.add_argument("--out")
    g.set_defaults(func=cmd_g2_correlate)

    g = gsub.add_parser("sweep", help="zero-power extrapolation of a power sweep CSV")
    g.add_argument("--sweep", required=True, help="CSV with power_mW,tau1_ns,tau2_ns,a")
    g.add_argument("--out")
    g.set_defaults(func=cmd_g2_sweep)

    p = sub.add_parser("spectra", help="spectral and polarization analysis")
    ssub = p.add_subparsers(dest="spectra_command", required=True)

    s = ssub.add_parser("fit", help="multi-Lorentzian peak fit of a spectrum CSV")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--peaks", required=True,
                   help="initial peaks: center[,center...] or center:fwhm:amp entries")
    s.add_argument("--poisson", action="store_true", help="use sqrt(N) count weighting")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectra_fit)

    s = ssub.add_parser("track", help="track modes across a tuning manifest")
    s.add_argument("--manifest", required=True, help="tuning manifest JSON")
    s.add_argument("--seeds", required=True, help="label=center:fwhm[,...] at the first step")
    s.add_argument("--emit-curves", help="write per-step track CSV here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectra_track)

    s = ssub.add_parser("enhance", help="on/off-resonance line enhancement from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--seeds", required=True)
    s.add_argument("--lambda-i", type=float, required=True, help="emitter line wavelength, nm")
    s.add_argument("--line-width", type=float, default=0.0)
    s.add_argument("--modes", help="comma-separated track labels to treat as tuning modes")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectra_enhance)

    s = ssub.add_parser("polarization", help="cos^2 scan fit or mixture-model sweep")
    s.add_argument("--scan", help="CSV with angle_deg,counts")
    s.add_argument("--mixture", help="mixture model JSON")
    s.add_argument("--emit-curves", help="write the mixture sweep CSV here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectra_polarization)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        return report.emit_error("validation", str(err), err.violations)
    except InputFormatError as err:
        return report.emit_error("input-format", str(err))
    except (InfeasibleMeasurementError, DomainError) as err:
        return report.emit_error("domain", str(err))
    except RankDeficiencyError as err:
        return report.emit_error("rank-deficiency", str(err))
    except FileNotFoundError as err:
        return report.emit_error("missing-file", str(err))
    except OSError as err:
        return report.emit_error("io", str(err))
    except (KeyError, TypeError, ValueError) as err:
        return report.emit_error("input-format", f"malformed input document: {err!r}")


def entry():  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
