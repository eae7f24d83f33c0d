"""Group index and group velocity from the line-centre dispersion.

Closed forms take a dimensionless ``ModelParams`` (rates in units of
``MediumParams.rate_unit``) and convert to SI only through ``MediumParams``.
Angular frequencies throughout: a rate quoted as Gamma/2pi = 5 MHz is stored
as 2pi * 5e6 rad/s.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import constants

from .errors import InvalidParameterError, SingularityError, SuperluminalRegimeError
from .meanfield import gamma_eff
from .params import ModelParams

# CODATA values as shipped with scipy (c and hbar exact, eps0 measured)
EPS0 = constants.epsilon_0
HBAR = constants.hbar
C_LIGHT = constants.c

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MediumParams:
    n_at: float                    # m^-3
    mu31: float                    # C m
    omega_p: float                 # rad/s
    rate_unit: float = 1.0         # rad/s represented by a dimensionless rate of 1
    length: float | None = None    # m

    def __post_init__(self):
        for name in ("n_at", "mu31", "omega_p", "rate_unit"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidParameterError(f"{name} must be finite and non-negative, got {v!r}")
        if self.omega_p == 0 or self.rate_unit == 0:
            raise InvalidParameterError("omega_p and rate_unit must be positive")
        if self.length is not None and not (np.isfinite(self.length) and self.length > 0):
            raise InvalidParameterError(f"length must be positive, got {self.length!r}")

    @classmethod
    def from_wavelength(cls, wavelength: float, n_at: float, mu31: float,
                        rate_unit: float = 1.0, length: float | None = None) -> "MediumParams":
        return cls(n_at=n_at, mu31=mu31, omega_p=TWO_PI * C_LIGHT / wavelength,
                   rate_unit=rate_unit, length=length)


@dataclass(frozen=True)
class GroupVelocityResult:
    delta: float
    n_g: float
    vg_over_c: float
    vg: float


class VgRow(NamedTuple):
    N: int
    delta: float
    vg_over_c: float
    ratio: float


@dataclass(frozen=True)
class ConsistencyResult:
    satisfied: bool
    gamma_eff: float
    bound: float
    satisfied_2gamma2: bool
    bound_2gamma2: float


def coupling_constant(medium: MediumParams) -> float:
    """C = n_at |mu31|^2 / (eps0 hbar), in 1/s."""
    return medium.n_at * medium.mu31 ** 2 / (EPS0 * HBAR)


def A0(params: ModelParams) -> float:
    return 0.5 * params.gamma2 * gamma_eff(params) + 0.25 * params.Omega_c ** 2


def analytic_slope(params: ModelParams, per_emitter: bool = True) -> float:
    """d Re(rho31/Omega_p)/d Delta1 at Delta1 = 0 (Delta2 = 0).

    With ``per_emitter=False`` the slope of Re(N rho31) is returned instead.
    """
    if params.Delta2 != 0:
        raise InvalidParameterError("the line-centre slope formula assumes Delta2 = 0")
    a0 = A0(params)
    if a0 == 0:
        raise SingularityError("A0 vanishes")
    s = 0.5 * ((0.5 * params.gamma2) ** 2 - (0.5 * params.Omega_c) ** 2) / a0 ** 2
    return s if per_emitter else s * params.N * params.Omega_p


def delta_N(params: ModelParams, medium: MediumParams) -> float:
    """(omega_p C/4) [(g2/2)^2 - (Oc/2)^2] / A0^2, rates taken in rad/s."""
    C = coupling_constant(medium)
    if C == 0:
        return 0.0
    a0 = A0(params)
    if a0 == 0:
        raise SingularityError("A0 vanishes")
    num = (0.5 * params.gamma2) ** 2 - (0.5 * params.Omega_c) ** 2
    return 0.25 * medium.omega_p * C * num / (a0 ** 2 * medium.rate_unit ** 2)


def group_result(params: ModelParams, medium: MediumParams) -> GroupVelocityResult:
    d = delta_N(params, medium)
    if 1.0 + d <= 0:
        raise SuperluminalRegimeError(f"1 + delta = {1.0 + d:.3g} <= 0 at N={params.N}; "
                                      "the linear-dispersion description does not apply")
    return GroupVelocityResult(delta=d, n_g=1.0 + d, vg_over_c=1.0 / (1.0 + d), vg=C_LIGHT / (1.0 + d))


def vg_table(params_base: ModelParams, medium: MediumParams, N_list) -> list:
    """Rows (N, delta, v_g/c, v_g(N)/v_g(1)).

    NaN marks points with 1 + delta <= 0; every ratio is NaN when N = 1
    itself lies in that regime.
    """
    Ns = [int(n) for n in N_list]
    if not Ns or min(Ns) < 1:
        raise InvalidParameterError("N_list must contain positive integers")
    d1 = delta_N(params_base.replace(N=1), medium)
    ref = 1.0 / (1.0 + d1) if 1.0 + d1 > 0 else math.nan
    rows = []
    for n in Ns:
        d = delta_N(params_base.replace(N=n), medium)
        if 1.0 + d <= 0:
            rows.append(VgRow(n, d, math.nan, math.nan))
        else:
            rows.append(VgRow(n, d, 1.0 / (1.0 + d), (1.0 / (1.0 + d)) / ref))
    return rows


def vg_ratio_scan(params_base: ModelParams, medium: MediumParams, N_list) -> list:
    """(N, v_g(N)/v_g(1)) with only N varied."""
    Ns = [int(n) for n in N_list]
    if 1 not in Ns:
        raise InvalidParameterError("N_list must contain N = 1")
    ref = group_result(params_base.replace(N=1), medium).vg
    return [(n, group_result(params_base.replace(N=n), medium).vg / ref) for n in Ns]


def log_slope(N_list, values) -> float:
    """Least-squares slope of ln(values) against ln(N)."""
    x, y = np.log(np.asarray(N_list, float)), np.log(np.asarray(values, float))
    return float(np.polyfit(x, y, 1)[0])


def asymptotic_K(params: ModelParams, medium: MediumParams) -> float:
    """(omega_p C / (4 Gamma31^2)) |1 - Oc^2/g2^2|."""
    if params.gamma2 == 0:
        raise SingularityError("K needs gamma2 > 0")
    G31 = params.Gamma31 * medium.rate_unit
    return (medium.omega_p * coupling_constant(medium) / (4.0 * G31 ** 2)
            * abs(1.0 - params.Omega_c ** 2 / params.gamma2 ** 2))


def asymptotic_vg_over_c(params: ModelParams, medium: MediumParams, consistent: bool = False) -> float:
    """Large-N form 1 - sgn(Oc^2/g2^2 - 1) K/N^2.

    Expanding 1/(1+delta) ~ 1 - delta gives the opposite sign,
    1 + sgn(Oc^2/g2^2 - 1) K/N^2; ``consistent=True`` returns that form.
    Either is meaningful only once N^2 >> K.
    """
    K = asymptotic_K(params, medium)
    sign = np.sign(params.Omega_c ** 2 / params.gamma2 ** 2 - 1.0)
    if consistent:
        sign = -sign
    return 1.0 - sign * K / params.N ** 2


def pulse_delay(result: GroupVelocityResult, medium: MediumParams) -> float:
    if medium.length is None:
        raise InvalidParameterError("pulse delay needs the medium length")
    return medium.length / result.vg


def eit_consistency_check(params: ModelParams) -> ConsistencyResult:
    """Gamma_eff(N) <= Oc^2/(4 g2); the Oc^2/(2 g2) variant is reported alongside."""
    if params.gamma2 <= 0:
        raise SingularityError("consistency bound needs gamma2 > 0")
    ge = gamma_eff(params)
    b4 = params.Omega_c ** 2 / (4.0 * params.gamma2)
    b2 = params.Omega_c ** 2 / (2.0 * params.gamma2)
    return ConsistencyResult(ge <= b4, ge, b4, ge <= b2, b2)


# -- built-in operating points ----------------------------------------------

SODIUM_WAVELENGTH = 589e-9
SODIUM_MU31 = 3.0e-29
SODIUM_GAMMA = TWO_PI * 5e6
VG1_REFERENCE = 17.0  # m/s, single-emitter baseline used for the N^2 extrapolation


def sodium_setup(N: int = 300):
    """Sodium D2 operating point: (ModelParams, MediumParams), rates in units of 2pi*5 MHz."""
    u = SODIUM_GAMMA
    params = ModelParams(N=N, Omega_p=0.05 / u, Omega_c=TWO_PI * 1.5e6 / u, Delta1=0.0, Delta2=0.0,
                         Gamma31=1.0, Gamma32=1.0, gamma2=TWO_PI * 0.5e3 / u, gamma3=0.0, gamma_phi=0.0)
    medium = MediumParams.from_wavelength(SODIUM_WAVELENGTH, n_at=1e20, mu31=SODIUM_MU31, rate_unit=u)
    return params, medium


def slow_light_setup(N: int = 1):
    """Sodium-like set with Oc < g2, so delta > 0 and delta(1) >> 1."""
    u = SODIUM_GAMMA
    params = ModelParams(N=N, Omega_p=0.05 / u, Omega_c=TWO_PI * 0.25e3 / u, Delta1=0.0, Delta2=0.0,
                         Gamma31=1.0, Gamma32=1.0, gamma2=TWO_PI * 0.5e3 / u, gamma3=0.0, gamma_phi=0.0)
    medium = MediumParams.from_wavelength(SODIUM_WAVELENGTH, n_at=1e22, mu31=SODIUM_MU31, rate_unit=u)
    return params, medium


def sodium_report(N: int = 300, vg1: float = VG1_REFERENCE) -> dict:
    params, medium = sodium_setup(N)
    chk = eit_consistency_check(params)
    to_hz = medium.rate_unit / TWO_PI
    vg_n2 = N ** 2 * vg1
    d1, dN = delta_N(params.replace(N=1), medium), delta_N(params, medium)
    return {
        "N": N,
        "gamma_eff_hz": chk.gamma_eff * to_hz,
        "bound_4gamma2_hz": chk.bound * to_hz,
        "consistent_4gamma2": bool(chk.satisfied),
        "bound_2gamma2_hz": chk.bound_2gamma2 * to_hz,
        "consistent_2gamma2": bool(chk.satisfied_2gamma2),
        "vg1_m_per_s": vg1,
        "vg_N2_law_m_per_s": vg_n2,
        "vg_N2_law_over_c": vg_n2 / C_LIGHT,
        "delta_1": d1,
        "delta_N": dN,
        "closed_form_ratio": (1.0 + d1) / (1.0 + dN) if (1 + d1) * (1 + dN) > 0 else math.nan,
        "coupling_constant_per_s": coupling_constant(medium),
    }


def write_vg_csv(rows, path, timestamp: bool = True):
    import datetime as _dt
    with open(path, "w", newline="") as fh:
        if timestamp:
            fh.write(f"# vg scan written {_dt.datetime.now().isoformat(timespec='seconds')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "delta", "vg_over_c", "ratio"])
        for r in rows:
            w.writerow([r.N, f"{r.delta:.17g}", f"{r.vg_over_c:.17g}", f"{r.ratio:.17g}"])
