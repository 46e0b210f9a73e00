"""Purcell enhancement and bandgap-inhibition rate algebra.

The effective Purcell factor of a transition coupled to a cavity mode is the
ideal factor F_P = 3 Q / (4 pi^2 V) (mode volume V in (lambda/n)^3 units)
reduced by three overlap factors,

    F_cav = F_P * R_lambda * R_mu * R_r,

with the spectral overlap R_lambda = (1 + 4 Q^2 (lambda_i/lambda_c - 1)^2)^-1,
the orientation overlap R_mu = (eps_hat . mu_hat)^2 and the spatial overlap
R_r = |eps(r)|^2 of the normalized field at the emitter position.

Rate budgets: inside the bandgap all radiative channels are inhibited by
F_PhC < 1; with a mode tuned to the ZPL only that channel is enhanced,

    gamma_cav = F_cav * gamma_zpl + F_PhC * gamma_psb + gamma_nr
    gamma_phc = F_PhC * (gamma_zpl + gamma_psb) + gamma_nr.

This module implements the forward algebra, its exact inversion from measured
rates, quantum-efficiency bookkeeping, and the nanosphere rate reduction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import (
    DomainError,
    InfeasibleMeasurementError,
    InputFormatError,
    NarrowCavityWarning,
    ValidationError,
)
from .models import (
    ENV_BANDGAP,
    ENV_BULK,
    ENV_CAVITY,
    CavityMode,
    EmitterLine,
    FieldMap,
    PhotonicEnvironment,
    RadiativeBudget,
    _check_finite,
    _raise_if,
)

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class OverlapFactors:
    """Spectral, orientation and spatial overlap factors, each in [0, 1]."""

    r_lambda: float = 1.0
    r_mu: float = 1.0
    r_r: float = 1.0

    UNITS: ClassVar[str] = "dimensionless"

    def __post_init__(self):
        bag = []
        for name in ("r_lambda", "r_mu", "r_r"):
            v = _check_finite(bag, name, getattr(self, name))
            if not (0.0 <= v <= 1.0):
                bag.append(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, v)
        _raise_if(bag)

    def product(self):
        return self.r_lambda * self.r_mu * self.r_r

    def to_dict(self):
        return {
            "r_lambda": self.r_lambda,
            "r_mu": self.r_mu,
            "r_r": self.r_r,
            "units": self.UNITS,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["r_lambda"], doc["r_mu"], doc["r_r"])


@dataclass(frozen=True)
class ModifiedRates:
    """Channel-resolved decay rates in a photonic environment, in Hz.

    ``kind`` records which environment produced the budget ('bulk',
    'bandgap_only' or 'cavity_coupled'); some derived quantities are only
    defined for the cavity-coupled case.
    """

    gamma_total: float
    channel_zpl: float
    channel_psb: float
    channel_nr: float
    eta_qe: float
    kind: str

    UNITS: ClassVar[str] = "Hz"
    REL_TOL: ClassVar[float] = 1e-12

    def __post_init__(self):
        bag = []
        total = _check_finite(bag, "gamma_total", self.gamma_total)
        zpl = _check_finite(bag, "channel_zpl", self.channel_zpl)
        psb = _check_finite(bag, "channel_psb", self.channel_psb)
        nr = _check_finite(bag, "channel_nr", self.channel_nr)
        eta = _check_finite(bag, "eta_qe", self.eta_qe)
        if min(zpl, psb, nr) < 0:
            bag.append("channel rates must be non-negative")
        if total <= 0:
            bag.append("gamma_total must be positive")
        else:
            if abs(total - (zpl + psb + nr)) > self.REL_TOL * total:
                bag.append("gamma_total must equal the sum of channel rates")
            if abs(eta - (zpl + psb) / total) > self.REL_TOL:
                bag.append("eta_qe must equal (channel_zpl + channel_psb) / gamma_total")
        if self.kind not in PhotonicEnvironment.KINDS:
            bag.append(f"kind must be one of {PhotonicEnvironment.KINDS}")
        _raise_if(bag)

    @property
    def lifetime(self):
        return 1.0 / self.gamma_total

    def to_dict(self):
        return {
            "gamma_total": self.gamma_total,
            "channel_zpl": self.channel_zpl,
            "channel_psb": self.channel_psb,
            "channel_nr": self.channel_nr,
            "eta_qe": self.eta_qe,
            "kind": self.kind,
            "units": self.UNITS,
        }


def ideal_purcell(mode: CavityMode) -> float:
    """Ideal Purcell factor 3 Q / (4 pi^2 V) of a cavity mode.

    The mode volume is stored in (lambda/n)^3 units, so the (lambda_c/n)^3
    factor of the textbook formula cancels.
    """
    return 3.0 * mode.q_factor / (4.0 * math.pi**2 * mode.mode_volume)


def spectral_overlap(line: EmitterLine, mode: CavityMode) -> float:
    """Lorentzian spectral overlap R_lambda of an emitter line and a mode.

    Warns (NarrowCavityWarning) when the cavity linewidth is smaller than
    the emitter linewidth, where the point-emitter approximation degrades.
    """
    if mode.linewidth < line.linewidth:
        warnings.warn(
            f"cavity linewidth {mode.linewidth:.3g} nm is below the emitter "
            f"linewidth {line.linewidth:.3g} nm; R_lambda is approximate",
            NarrowCavityWarning,
            stacklevel=2,
        )
    detuning = line.lambda_i / mode.lambda_c - 1.0
    return 1.0 / (1.0 + 4.0 * mode.q_factor**2 * detuning**2)


def orientation_overlap(dipole_axis, field_axis) -> float:
    """Orientation overlap R_mu = (dipole . field)^2 of two unit vectors."""
    d = np.asarray(dipole_axis, dtype=float)
    f = np.asarray(field_axis, dtype=float)
    for name, v in (("dipole_axis", d), ("field_axis", f)):
        if v.shape != (3,):
            raise DomainError(f"{name} must be a 3-vector")
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{name} contains non-finite entries")
        if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOL:
            raise DomainError(f"{name} must have unit norm, got |v| = {np.linalg.norm(v):.12g}")
    r_mu = float(np.dot(d, f)) ** 2
    return min(r_mu, 1.0)


def spatial_overlap(field: FieldMap, position) -> float:
    """Spatial overlap R_r = |eps(r)|^2 at a lattice position (x, y) in nm.

    The normalized amplitude is interpolated bilinearly; positions outside
    the grid raise a DomainError naming the violated bound.
    """
    pos = np.asarray(position, dtype=float)
    if pos.shape != (2,):
        raise DomainError("position must be a 2-vector (x, y) in lattice coordinates")
    if not np.all(np.isfinite(pos)):
        raise DomainError("position contains non-finite entries")
    (xmin, xmax), (ymin, ymax) = field.extent()
    x, y = float(pos[0]), float(pos[1])
    if not (xmin <= x <= xmax):
        raise DomainError(f"position x = {x} outside field grid x-range [{xmin}, {xmax}]")
    if not (ymin <= y <= ymax):
        raise DomainError(f"position y = {y} outside field grid y-range [{ymin}, {ymax}]")
    fx = (x - field.origin[0]) / field.spacing
    fy = (y - field.origin[1]) / field.spacing
    ny, nx = field.grid.shape
    ix = min(int(math.floor(fx)), nx - 2)
    iy = min(int(math.floor(fy)), ny - 2)
    tx = fx - ix
    ty = fy - iy
    g = field.grid
    value = (
        g[iy, ix] * (1 - tx) * (1 - ty)
        + g[iy, ix + 1] * tx * (1 - ty)
        + g[iy + 1, ix] * (1 - tx) * ty
        + g[iy + 1, ix + 1] * tx * ty
    )
    eps = abs(value) / field.normalization
    return min(float(eps) ** 2, 1.0)


def effective_purcell(f_p: float, overlaps: OverlapFactors) -> float:
    """Effective Purcell factor F_cav = F_P * R_lambda * R_mu * R_r."""
    f_p = float(f_p)
    if not math.isfinite(f_p) or f_p <= 0:
        raise DomainError(f"f_p must be positive, got {f_p}")
    return f_p * overlaps.product()


def modified_budget(budget: RadiativeBudget, env: PhotonicEnvironment) -> ModifiedRates:
    """Channel rates of a budget placed in a photonic environment.

    Cavity coupling applies f_cav to the ZPL channel only (mode tuned to the
    ZPL); the side band keeps the bandgap inhibition f_phc and the
    non-radiative channel is untouched. To model a mode coupled to a
    side-band transition instead, swap the roles of gamma_zpl and gamma_psb
    in the input budget.
    """
    if env.kind == ENV_BULK:
        zpl, psb = budget.gamma_zpl, budget.gamma_psb
    elif env.kind == ENV_BANDGAP:
        zpl = env.f_phc * budget.gamma_zpl
        psb = env.f_phc * budget.gamma_psb
    elif env.kind == ENV_CAVITY:
        zpl = env.f_cav * budget.gamma_zpl
        psb = env.f_phc * budget.gamma_psb
    else:  # pragma: no cover - PhotonicEnvironment already validates
        raise DomainError(f"unknown environment kind {env.kind!r}")
    nr = budget.gamma_nr
    total = zpl + psb + nr
    return ModifiedRates(total, zpl, psb, nr, (zpl + psb) / total, env.kind)


def pl_enhancement(f_cav: float, f_phc: float) -> float:
    """On/off-resonance PL intensity ratio f_cav / f_phc of the coupled line."""
    f_cav = float(f_cav)
    f_phc = float(f_phc)
    if not math.isfinite(f_phc) or f_phc <= 0:
        raise DomainError(f"f_phc must be positive, got {f_phc}")
    if not math.isfinite(f_cav) or f_cav < 0:
        raise DomainError(f"f_cav must be non-negative, got {f_cav}")
    return f_cav / f_phc


def mode_emission_fractions(modified: ModifiedRates) -> tuple[float, float]:
    """Fractions of total and of radiative decay emitted into the cavity mode.

    Only defined for a cavity-coupled budget; returns
    (channel_zpl / gamma_total, channel_zpl / (channel_zpl + channel_psb)).
    """
    if modified.kind != ENV_CAVITY:
        raise DomainError(
            f"mode emission fractions require a cavity-coupled budget, got {modified.kind!r}"
        )
    beta_total = modified.channel_zpl / modified.gamma_total
    rad = modified.channel_zpl + modified.channel_psb
    if rad <= 0:
        raise DomainError("budget has no radiative emission")
    beta_radiative = modified.channel_zpl / rad
    return beta_total, beta_radiative


def invert_budget(
    gamma_cav: float,
    gamma_phc: float,
    f_cav: float,
    f_phc: float,
    branching: float,
) -> RadiativeBudget:
    """Recover the intrinsic budget from measured on/off-resonance rates.

    Solves the exact 3x3 linear system

        gamma_cav = f_cav * gamma_zpl + f_phc * gamma_psb + gamma_nr
        gamma_phc = f_phc * (gamma_zpl + gamma_psb) + gamma_nr
        gamma_zpl = branching * gamma_psb

    ``branching`` is the ZPL:PSB ratio (4.0 means 4:1). Degenerate systems
    (f_cav == f_phc, or branching == 0) and negative solution components
    raise InfeasibleMeasurementError.
    """
    for name, v in (
        ("gamma_cav", gamma_cav),
        ("gamma_phc", gamma_phc),
        ("f_cav", f_cav),
        ("f_phc", f_phc),
        ("branching", branching),
    ):
        if not math.isfinite(float(v)):
            raise DomainError(f"{name} must be finite")
    a = np.array(
        [
            [f_cav, f_phc, 1.0],
            [f_phc, f_phc, 1.0],
            [1.0, -branching, 0.0],
        ],
        dtype=float,
    )
    b = np.array([gamma_cav, gamma_phc, 0.0], dtype=float)
    scale = max(abs(f_cav), abs(f_phc), 1.0)
    det = np.linalg.det(a)
    if abs(det) < 1e-12 * scale**2:
        raise InfeasibleMeasurementError(
            "measurement system is singular (f_cav = f_phc or branching = 0 "
            "leaves the budget underdetermined)"
        )
    zpl, psb, nr = np.linalg.solve(a, b)
    rate_scale = max(abs(gamma_cav), abs(gamma_phc), 1.0)
    clip = 1e-12 * rate_scale
    solution = {"gamma_zpl": zpl, "gamma_psb": psb, "gamma_nr": nr}
    negative = [name for name, v in solution.items() if v < -clip]
    if negative:
        detail = ", ".join(f"{name} = {solution[name]:.6g} Hz" for name in negative)
        raise InfeasibleMeasurementError(
            f"measured rates imply negative channel rates: {detail}"
        )
    return RadiativeBudget(max(zpl, 0.0), max(psb, 0.0), max(nr, 0.0))


def infer_bulk_qe_from_inhibition(tau_bulk: float, tau_phc: float, f_phc: float):
    """Quantum efficiencies implied by a bandgap lifetime change.

    With only the radiative fraction eta inhibited by f_phc, the lifetimes
    obey (f_phc * eta + 1 - eta) / tau_bulk = 1 / tau_phc. Returns
    (eta_bulk, eta_phc); raises InfeasibleMeasurementError when the implied
    efficiency falls outside [0, 1].
    """
    tau_bulk = float(tau_bulk)
    tau_phc = float(tau_phc)
    f_phc = float(f_phc)
    if not (tau_bulk > 0 and math.isfinite(tau_bulk)):
        raise DomainError(f"tau_bulk must be positive, got {tau_bulk}")
    if not (tau_phc >= tau_bulk and math.isfinite(tau_phc)):
        raise DomainError("expected tau_phc >= tau_bulk (inhibition lengthens the lifetime)")
    if not (0.0 < f_phc < 1.0):
        raise DomainError(f"f_phc must lie in (0, 1), got {f_phc}")
    eta = (1.0 - tau_bulk / tau_phc) / (1.0 - f_phc)
    if eta > 1.0 + 1e-9:
        raise InfeasibleMeasurementError(
            f"lifetime ratio {tau_phc / tau_bulk:.4g} exceeds the maximum 1/f_phc "
            f"= {1.0 / f_phc:.4g} reachable at unit quantum efficiency"
        )
    eta = min(max(eta, 0.0), 1.0)
    rad = f_phc * eta
    eta_phc = rad / (rad + 1.0 - eta) if (rad + 1.0 - eta) > 0 else 0.0
    return eta, eta_phc


def nanosphere_factor(n: float) -> float:
    """Radiative-rate reduction (1/n) * (3 / (2 + n^2))^2 for an emitter in a
    sub-wavelength dielectric sphere of refractive index n."""
    n = float(n)
    if not math.isfinite(n) or n < 1.0:
        raise DomainError(f"refractive index must be >= 1, got {n}")
    return (1.0 / n) * (3.0 / (2.0 + n**2)) ** 2


def rescale_qe(eta: float, radiative_factor: float) -> float:
    """Quantum efficiency after rescaling the radiative rate by a factor.

    The non-radiative rate is unchanged:
    eta' = f * eta / (f * eta + 1 - eta).
    """
    eta = float(eta)
    f = float(radiative_factor)
    if not (0.0 <= eta <= 1.0):
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    if not (0.0 < f <= 1.0):
        raise DomainError(f"radiative_factor must lie in (0, 1], got {f}")
    num = f * eta
    return num / (num + 1.0 - eta) if (num + 1.0 - eta) > 0 else 0.0


# --- field-map file format -------------------------------------------------
#
# CSV with two header comment rows followed by amplitude rows (one per y):
#   # spacing_nm=<float>
#   # origin=<x>,<y>
#   v, v, v, ...
# The normalization is always recomputed on load.


def save_field_map(field: FieldMap, path):
    if np.iscomplexobj(field.grid):
        raise DomainError("the CSV field-map format stores real amplitudes only")
    with open(path, "w") as fh:
        fh.write(f"# spacing_nm={field.spacing!r}\n")
        fh.write(f"# origin={field.origin[0]!r},{field.origin[1]!r}\n")
        for row in field.grid:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_field_map(path) -> FieldMap:
    spacing = None
    origin = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("spacing_nm="):
                    try:
                        spacing = float(body.split("=", 1)[1])
                    except ValueError:
                        raise InputFormatError(path, lineno, "bad spacing_nm value") from None
                elif body.startswith("origin="):
                    parts = body.split("=", 1)[1].split(",")
                    if len(parts) != 2:
                        raise InputFormatError(path, lineno, "origin needs two components")
                    try:
                        origin = (float(parts[0]), float(parts[1]))
                    except ValueError:
                        raise InputFormatError(path, lineno, "bad origin value") from None
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError:
                raise InputFormatError(path, lineno, "bad amplitude value") from None
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise InputFormatError(path, lineno, "inconsistent row length")
    if spacing is None:
        raise InputFormatError(path, 0, "missing '# spacing_nm=' header")
    if origin is None:
        raise InputFormatError(path, 0, "missing '# origin=' header")
    if not rows:
        raise InputFormatError(path, 0, "no amplitude rows")
    try:
        return FieldMap(np.asarray(rows, dtype=float), spacing, origin)
    except ValidationError as err:
        raise InputFormatError(path, 0, str(err)) from None
