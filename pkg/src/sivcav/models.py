"""Domain types for emitter-cavity rate modeling and photon-statistics analysis.

Unit conventions used throughout the package: rates in Hz, times in seconds,
wavelengths in nanometers, powers in milliwatts, angles in degrees. Conversion
to or from any other scale happens only at I/O boundaries.

All types are immutable after construction. Constructors validate eagerly and
raise :class:`~sivcav.errors.ValidationError` carrying *every* violated
invariant, so callers can report complete diagnostics in one pass. Every type
serializes to a flat JSON document (``to_dict`` / ``from_dict``) whose field
names match the constructor arguments and which carries a ``units`` tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import DomainError, ValidationError

UNIT_NORM_TOL = 1e-9
FIELD_NORMALIZATION_TOL = 1e-6

ENV_BULK = "bulk"
ENV_BANDGAP = "bandgap_only"
ENV_CAVITY = "cavity_coupled"


def _check_finite(bag, name, value):
    try:
        v = float(value)
    except (TypeError, ValueError):
        bag.append(f"{name} is not a number")
        return math.nan
    if not math.isfinite(v):
        bag.append(f"{name} is not finite")
    return v


def _check_finite_array(bag, name, values, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if arr.size and not np.all(np.isfinite(arr)):
        bag.append(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _raise_if(bag):
    if bag:
        raise ValidationError(bag)


def _expect_units(doc, expected):
    units = doc.get("units", expected)
    if units != expected:
        raise ValidationError([f"units mismatch: expected '{expected}', got '{units}'"])


def lifetime_from_rate(rate):
    """Reciprocal conversion rate (Hz) -> lifetime (s)."""
    rate = float(rate)
    if not math.isfinite(rate) or rate <= 0.0:
        raise DomainError(f"rate must be positive and finite, got {rate}")
    return 1.0 / rate


def rate_from_lifetime(lifetime):
    """Reciprocal conversion lifetime (s) -> rate (Hz)."""
    lifetime = float(lifetime)
    if not math.isfinite(lifetime) or lifetime <= 0.0:
        raise DomainError(f"lifetime must be positive and finite, got {lifetime}")
    return 1.0 / lifetime


@dataclass(frozen=True)
class RadiativeBudget:
    """Intrinsic decay channels of the emitter, in Hz.

    gamma_zpl : radiative rate into the zero-phonon line
    gamma_psb : radiative rate into the phonon side bands
    gamma_nr  : non-radiative decay rate
    """

    gamma_zpl: float
    gamma_psb: float
    gamma_nr: float

    UNITS: ClassVar[str] = "Hz"

    def __post_init__(self):
        bag = []
        z = _check_finite(bag, "gamma_zpl", self.gamma_zpl)
        p = _check_finite(bag, "gamma_psb", self.gamma_psb)
        n = _check_finite(bag, "gamma_nr", self.gamma_nr)
        if z < 0:
            bag.append("gamma_zpl negative")
        if p < 0:
            bag.append("gamma_psb negative")
        if n < 0:
            bag.append("gamma_nr negative")
        if not (z > 0 or p > 0):
            bag.append("at least one radiative rate must be positive")
        _raise_if(bag)
        object.__setattr__(self, "gamma_zpl", z)
        object.__setattr__(self, "gamma_psb", p)
        object.__setattr__(self, "gamma_nr", n)

    @property
    def gamma_rad(self):
        return self.gamma_zpl + self.gamma_psb

    @property
    def gamma_total(self):
        return self.gamma_rad + self.gamma_nr

    @property
    def eta_qe(self):
        """Intrinsic quantum efficiency gamma_rad / (gamma_rad + gamma_nr)."""
        return self.gamma_rad / self.gamma_total

    @property
    def zpl_fraction(self):
        return self.gamma_zpl / self.gamma_rad

    def to_dict(self):
        return {
            "gamma_zpl": self.gamma_zpl,
            "gamma_psb": self.gamma_psb,
            "gamma_nr": self.gamma_nr,
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(doc["gamma_zpl"], doc["gamma_psb"], doc["gamma_nr"])


@dataclass(frozen=True, eq=False)
class FieldMap:
    """Mid-plane map of the normalized cavity field amplitude.

    grid[iy, ix] holds the (real or complex) field amplitude at
    x = origin[0] + ix * spacing, y = origin[1] + iy * spacing (nm).
    ``normalization`` is the global maximum amplitude; if omitted it is
    computed from the grid. The map is the paper's epsilon(r) once divided
    by ``normalization``.
    """

    grid: np.ndarray
    spacing: float
    origin: tuple[float, float]
    normalization: float | None = None

    UNITS: ClassVar[str] = "nm"

    def __post_init__(self):
        bag = []
        grid = np.asarray(self.grid)
        if grid.ndim != 2 or min(grid.shape) < 2:
            bag.append("grid must be 2-D with at least 2 points per axis")
        if np.iscomplexobj(grid):
            grid = grid.astype(complex)
        else:
            grid = grid.astype(float)
        if grid.size and not np.all(np.isfinite(np.abs(grid))):
            bag.append("grid contains non-finite entries")
        spacing = _check_finite(bag, "spacing", self.spacing)
        if spacing <= 0:
            bag.append("spacing must be positive")
        origin = tuple(float(v) for v in self.origin)
        if len(origin) != 2:
            bag.append("origin must have two components")
        for v in origin:
            if not math.isfinite(v):
                bag.append("origin contains non-finite entries")
        peak = float(np.max(np.abs(grid))) if grid.size else 0.0
        if peak <= 0:
            bag.append("grid has no nonzero amplitude")
        norm = self.normalization
        if norm is None:
            norm = peak
        else:
            norm = _check_finite(bag, "normalization", norm)
            if norm <= 0:
                bag.append("normalization must be positive")
            elif peak > 0 and abs(peak / norm - 1.0) > FIELD_NORMALIZATION_TOL:
                bag.append(
                    f"normalization {norm} is not the global field maximum {peak}"
                )
        _raise_if(bag)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "normalization", norm)

    @property
    def shape(self):
        return self.grid.shape

    def extent(self):
        """((xmin, xmax), (ymin, ymax)) covered by the grid, in nm."""
        ny, nx = self.grid.shape
        x0, y0 = self.origin
        return ((x0, x0 + (nx - 1) * self.spacing), (y0, y0 + (ny - 1) * self.spacing))

    def to_dict(self):
        doc = {
            "spacing": self.spacing,
            "origin": list(self.origin),
            "normalization": self.normalization,
            "units": self.UNITS,
        }
        if np.iscomplexobj(self.grid):
            doc["grid_real"] = self.grid.real.tolist()
            doc["grid_imag"] = self.grid.imag.tolist()
        else:
            doc["grid"] = self.grid.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        if "grid" in doc:
            grid = np.asarray(doc["grid"], dtype=float)
        else:
            grid = np.asarray(doc["grid_real"], dtype=float) + 1j * np.asarray(
                doc["grid_imag"], dtype=float
            )
        return cls(grid, doc["spacing"], tuple(doc["origin"]), doc.get("normalization"))


@dataclass(frozen=True)
class CavityMode:
    """One optical resonance of the photonic-crystal cavity.

    lambda_c    : center wavelength, nm
    q_factor    : quality factor
    mode_volume : mode volume in units of (lambda/n)^3
    pol_angle   : linear polarization angle in the slab plane, degrees in (-90, 90]
    """

    lambda_c: float
    q_factor: float
    mode_volume: float
    pol_angle: float = 0.0
    field_map: FieldMap | None = None
    label: str = ""

    UNITS: ClassVar[str] = "nm"

    def __post_init__(self):
        bag = []
        lam = _check_finite(bag, "lambda_c", self.lambda_c)
        q = _check_finite(bag, "q_factor", self.q_factor)
        v = _check_finite(bag, "mode_volume", self.mode_volume)
        ang = _check_finite(bag, "pol_angle", self.pol_angle)
        if lam <= 0:
            bag.append("lambda_c must be positive")
        if q <= 0:
            bag.append("q_factor must be positive")
        if v <= 0:
            bag.append("mode_volume must be positive")
        if not (-90.0 < ang <= 90.0):
            bag.append("pol_angle must lie in (-90, 90] degrees")
        if self.field_map is not None and not isinstance(self.field_map, FieldMap):
            bag.append("field_map must be a FieldMap")
        _raise_if(bag)
        object.__setattr__(self, "lambda_c", lam)
        object.__setattr__(self, "q_factor", q)
        object.__setattr__(self, "mode_volume", v)
        object.__setattr__(self, "pol_angle", ang)

    @property
    def linewidth(self):
        """Cavity linewidth lambda_c / Q, nm."""
        return self.lambda_c / self.q_factor

    def to_dict(self):
        doc = {
            "lambda_c": self.lambda_c,
            "q_factor": self.q_factor,
            "mode_volume": self.mode_volume,
            "pol_angle": self.pol_angle,
            "label": self.label,
            "units": self.UNITS,
        }
        if self.field_map is not None:
            doc["field_map"] = self.field_map.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        fmap = doc.get("field_map")
        return cls(
            doc["lambda_c"],
            doc["q_factor"],
            doc["mode_volume"],
            doc.get("pol_angle", 0.0),
            FieldMap.from_dict(fmap) if fmap is not None else None,
            doc.get("label", ""),
        )


@dataclass(frozen=True, eq=False)
class EmitterLine:
    """A single optical transition of the emitter.

    lambda_i    : transition wavelength, nm
    linewidth   : FWHM, nm
    dipole_axis : unit 3-vector of the transition dipole
    position    : emitter position in lattice coordinates, nm
                  (origin at the cavity center, axes along the lattice vectors)
    """

    lambda_i: float
    linewidth: float = 0.0
    dipole_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    label: str = ""

    UNITS: ClassVar[str] = "nm"

    def __post_init__(self):
        bag = []
        lam = _check_finite(bag, "lambda_i", self.lambda_i)
        width = _check_finite(bag, "linewidth", self.linewidth)
        if lam <= 0:
            bag.append("lambda_i must be positive")
        if width < 0:
            bag.append("linewidth must be non-negative")
        axis = _check_finite_array(bag, "dipole_axis", self.dipole_axis)
        pos = _check_finite_array(bag, "position", self.position)
        if axis.shape != (3,):
            bag.append("dipole_axis must have three components")
        elif abs(float(np.linalg.norm(axis)) - 1.0) > UNIT_NORM_TOL:
            bag.append("dipole_axis must have unit norm")
        if pos.shape != (3,):
            bag.append("position must have three components")
        _raise_if(bag)
        object.__setattr__(self, "lambda_i", lam)
        object.__setattr__(self, "linewidth", width)
        object.__setattr__(self, "dipole_axis", tuple(float(v) for v in axis))
        object.__setattr__(self, "position", tuple(float(v) for v in pos))

    def to_dict(self):
        return {
            "lambda_i": self.lambda_i,
            "linewidth": self.linewidth,
            "dipole_axis": list(self.dipole_axis),
            "position": list(self.position),
            "label": self.label,
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(
            doc["lambda_i"],
            doc.get("linewidth", 0.0),
            tuple(doc.get("dipole_axis", (1.0, 0.0, 0.0))),
            tuple(doc.get("position", (0.0, 0.0, 0.0))),
            doc.get("label", ""),
        )

    def __eq__(self, other):
        if not isinstance(other, EmitterLine):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class PhotonicEnvironment:
    """Photonic surroundings of the emitter.

    kind  : one of 'bulk', 'bandgap_only', 'cavity_coupled'
    f_phc : bandgap inhibition factor in (0, 1]; exactly 1 for 'bulk'
    f_cav : effective Purcell factor; present only for 'cavity_coupled'
    """

    kind: str
    f_phc: float = 1.0
    f_cav: float | None = None

    UNITS: ClassVar[str] = "dimensionless"
    KINDS: ClassVar[tuple[str, ...]] = (ENV_BULK, ENV_BANDGAP, ENV_CAVITY)

    def __post_init__(self):
        bag = []
        if self.kind not in self.KINDS:
            bag.append(f"kind must be one of {self.KINDS}, got {self.kind!r}")
        f_phc = _check_finite(bag, "f_phc", self.f_phc)
        if not (0.0 < f_phc <= 1.0):
            bag.append("f_phc must lie in (0, 1]")
        if self.kind == ENV_BULK and f_phc != 1.0:
            bag.append("bulk requires f_phc = 1")
        f_cav = self.f_cav
        if self.kind == ENV_CAVITY:
            if f_cav is None:
                bag.append("cavity_coupled requires f_cav")
            else:
                f_cav = _check_finite(bag, "f_cav", f_cav)
                if f_cav < 0:
                    bag.append("f_cav must be non-negative")
        elif f_cav is not None:
            bag.append(f"f_cav is only meaningful for cavity_coupled, not {self.kind!r}")
        _raise_if(bag)
        object.__setattr__(self, "f_phc", f_phc)
        object.__setattr__(self, "f_cav", None if f_cav is None else float(f_cav))

    @classmethod
    def bulk(cls):
        return cls(ENV_BULK, 1.0)

    @classmethod
    def bandgap_only(cls, f_phc):
        return cls(ENV_BANDGAP, f_phc)

    @classmethod
    def cavity_coupled(cls, f_cav, f_phc):
        return cls(ENV_CAVITY, f_phc, f_cav)

    def to_dict(self):
        doc = {"kind": self.kind, "f_phc": self.f_phc, "units": self.UNITS}
        if self.f_cav is not None:
            doc["f_cav"] = self.f_cav
        return doc

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(doc["kind"], doc.get("f_phc", 1.0), doc.get("f_cav"))


@dataclass(frozen=True)
class ThreeLevelRates:
    """Transition rates of the pumped three-level system, in Hz.

    k12 : ground -> excited pump rate
    k21 : excited -> ground total decay rate
    k23 : excited -> shelving rate
    k31 : shelving -> ground deshelving rate
    """

    k12: float
    k21: float
    k23: float
    k31: float

    UNITS: ClassVar[str] = "Hz"

    def __post_init__(self):
        bag = []
        k12 = _check_finite(bag, "k12", self.k12)
        k21 = _check_finite(bag, "k21", self.k21)
        k23 = _check_finite(bag, "k23", self.k23)
        k31 = _check_finite(bag, "k31", self.k31)
        if k12 < 0:
            bag.append("k12 negative")
        if k21 <= 0:
            bag.append("k21 must be positive")
        if k23 < 0:
            bag.append("k23 negative")
        if k31 <= 0:
            bag.append("k31 must be positive")
        _raise_if(bag)
        object.__setattr__(self, "k12", k12)
        object.__setattr__(self, "k21", k21)
        object.__setattr__(self, "k23", k23)
        object.__setattr__(self, "k31", k31)

    def to_dict(self):
        return {
            "k12": self.k12,
            "k21": self.k21,
            "k23": self.k23,
            "k31": self.k31,
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(doc["k12"], doc["k21"], doc["k23"], doc["k31"])


@dataclass(frozen=True)
class G2Params:
    """Two-exponential parametrization of the intensity correlation,

        g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2).

    Construction canonicalizes the ordering so that tau2 > tau1.
    """

    tau1: float
    tau2: float
    a: float

    UNITS: ClassVar[str] = "s"

    def __post_init__(self):
        bag = []
        t1 = _check_finite(bag, "tau1", self.tau1)
        t2 = _check_finite(bag, "tau2", self.tau2)
        a = _check_finite(bag, "a", self.a)
        if t1 <= 0:
            bag.append("tau1 must be positive")
        if t2 <= 0:
            bag.append("tau2 must be positive")
        if a < 0:
            bag.append("a must be non-negative")
        if t1 == t2:
            bag.append("tau1 and tau2 must be distinct")
        _raise_if(bag)
        if t1 > t2:
            t1, t2 = t2, t1
        object.__setattr__(self, "tau1", t1)
        object.__setattr__(self, "tau2", t2)
        object.__setattr__(self, "a", a)

    def to_dict(self):
        return {"tau1": self.tau1, "tau2": self.tau2, "a": self.a, "units": self.UNITS}

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(doc["tau1"], doc["tau2"], doc["a"])


@dataclass(frozen=True, eq=False)
class G2Curve:
    """Sampled normalized intensity-correlation function.

    delays in seconds (strictly increasing, may be negative), values
    dimensionless and non-negative, optional 1-sigma uncertainties.
    """

    delays: np.ndarray
    values: np.ndarray
    sigmas: np.ndarray | None = None

    UNITS: ClassVar[str] = "s"

    def __post_init__(self):
        bag = []
        delays = _check_finite_array(bag, "delays", self.delays)
        values = _check_finite_array(bag, "values", self.values)
        if delays.ndim != 1 or values.ndim != 1:
            bag.append("delays and values must be 1-D")
        if delays.shape != values.shape:
            bag.append("delays and values must have equal length")
        if delays.size >= 2 and not np.all(np.diff(delays) > 0):
            bag.append("delays must be strictly increasing")
        if values.size and np.any(values < 0):
            bag.append("values must be non-negative")
        sigmas = self.sigmas
        if sigmas is not None:
            sigmas = _check_finite_array(bag, "sigmas", sigmas)
            if sigmas.shape != delays.shape:
                bag.append("sigmas must match delays in length")
            elif sigmas.size and np.any(sigmas <= 0):
                bag.append("sigmas must be positive")
        _raise_if(bag)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sigmas", sigmas)

    def __len__(self):
        return self.delays.size

    def to_dict(self):
        doc = {
            "delays": self.delays.tolist(),
            "values": self.values.tolist(),
            "units": self.UNITS,
        }
        if self.sigmas is not None:
            doc["sigmas"] = self.sigmas.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        sig = doc.get("sigmas")
        return cls(
            np.asarray(doc["delays"], dtype=float),
            np.asarray(doc["values"], dtype=float),
            None if sig is None else np.asarray(sig, dtype=float),
        )


@dataclass(frozen=True, eq=False)
class PLSpectrum:
    """Photoluminescence spectrum: wavelength (nm) vs intensity (counts)."""

    wavelengths: np.ndarray
    intensities: np.ndarray
    meta: str = ""

    UNITS: ClassVar[str] = "nm,counts"

    def __post_init__(self):
        bag = []
        wl = _check_finite_array(bag, "wavelengths", self.wavelengths)
        counts = _check_finite_array(bag, "intensities", self.intensities)
        if wl.ndim != 1 or counts.ndim != 1:
            bag.append("wavelengths and intensities must be 1-D")
        if wl.shape != counts.shape:
            bag.append("wavelengths and intensities must have equal length")
        if wl.size >= 2 and not np.all(np.diff(wl) > 0):
            bag.append("wavelengths must be strictly increasing")
        if counts.size and np.any(counts < 0):
            bag.append("intensities must be non-negative")
        _raise_if(bag)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "intensities", counts)

    def __len__(self):
        return self.wavelengths.size

    def to_dict(self):
        return {
            "wavelengths": self.wavelengths.tolist(),
            "intensities": self.intensities.tolist(),
            "meta": self.meta,
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(
            np.asarray(doc["wavelengths"], dtype=float),
            np.asarray(doc["intensities"], dtype=float),
            doc.get("meta", ""),
        )


@dataclass(frozen=True, eq=False)
class PolarizationScan:
    """Detected intensity versus analyzer angle (degrees)."""

    angles: np.ndarray
    intensities: np.ndarray

    UNITS: ClassVar[str] = "deg,counts"

    def __post_init__(self):
        bag = []
        ang = _check_finite_array(bag, "angles", self.angles)
        counts = _check_finite_array(bag, "intensities", self.intensities)
        if ang.ndim != 1 or counts.ndim != 1:
            bag.append("angles and intensities must be 1-D")
        if ang.shape != counts.shape:
            bag.append("angles and intensities must have equal length")
        if counts.size and np.any(counts < 0):
            bag.append("intensities must be non-negative")
        _raise_if(bag)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "intensities", counts)

    def reduced_angles(self):
        """Angles folded into one polarization period [0, 180) degrees."""
        return np.mod(self.angles, 180.0)

    def to_dict(self):
        return {
            "angles": self.angles.tolist(),
            "intensities": self.intensities.tolist(),
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(
            np.asarray(doc["angles"], dtype=float),
            np.asarray(doc["intensities"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class SaturationCurve:
    """Detected count rate (counts/s) versus excitation power (mW)."""

    powers: np.ndarray
    rates: np.ndarray

    UNITS: ClassVar[str] = "mW,cps"

    def __post_init__(self):
        bag = []
        p = _check_finite_array(bag, "powers", self.powers)
        r = _check_finite_array(bag, "rates", self.rates)
        if p.ndim != 1 or r.ndim != 1:
            bag.append("powers and rates must be 1-D")
        if p.shape != r.shape:
            bag.append("powers and rates must have equal length")
        if p.size and np.any(p <= 0):
            bag.append("powers must be positive")
        if p.size >= 2 and not np.all(np.diff(p) > 0):
            bag.append("powers must be strictly increasing")
        if r.size and np.any(r < 0):
            bag.append("rates must be non-negative")
        _raise_if(bag)
        object.__setattr__(self, "powers", p)
        object.__setattr__(self, "rates", r)

    def to_dict(self):
        return {
            "powers": self.powers.tolist(),
            "rates": self.rates.tolist(),
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        _expect_units(doc, cls.UNITS)
        return cls(
            np.asarray(doc["powers"], dtype=float),
            np.asarray(doc["rates"], dtype=float),
        )


def validate_model(budget, env):
    """Collect every invariant violation for a budget/environment pair.

    Accepts constructed instances or plain dicts (as loaded from JSON).
    Returns a list of violation messages; an empty list means valid. Unlike
    the constructors this never raises on invalid *values*, so a caller can
    report the complete list in one pass.
    """
    violations = []
    for obj, cls, label in (
        (budget, RadiativeBudget, "budget"),
        (env, PhotonicEnvironment, "environment"),
    ):
        if isinstance(obj, cls):
            continue
        if isinstance(obj, dict):
            doc = dict(obj)
            doc.setdefault("units", cls.UNITS)
            try:
                cls.from_dict(doc)
            except ValidationError as err:
                violations.extend(f"{label}: {v}" for v in err.violations)
            except KeyError as err:
                violations.append(f"{label}: missing field {err.args[0]!r}")
        else:
            violations.append(f"{label}: expected {cls.__name__} or dict")
    return violations
