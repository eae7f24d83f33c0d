"""Drive-off superradiant transients, burst analysis and finite-size scaling."""
from __future__ import annotations

import csv
import datetime as _dt
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import liouvillian as lv
from . import meanfield as mf
from .errors import (BoundaryPeakWarning, CollectiveEITError, FitFailureError,
                     InvalidConfigurationError, InvalidDataError, InvalidParameterError,
                     SolverFailureError)
from .params import ModelParams
from .symspace import build_basis, lowering_operator, number_operators, symmetric_product_state

CHANNELS = ("31", "32", "tot")
ASECH_HALF = math.acosh(math.sqrt(2.0))  # sech^2(x) = 1/2 at x = 0.8814


@dataclass(frozen=True)
class BurstTrace:
    t: np.ndarray
    I31: np.ndarray
    I32: np.ndarray
    method: str
    N: int
    excited: np.ndarray | None = field(default=None, repr=False)
    trace_drift: float = 0.0

    @property
    def Itot(self) -> np.ndarray:
        return self.I31 + self.I32

    def channel(self, channel) -> np.ndarray:
        key = str(channel)
        if key not in CHANNELS:
            raise InvalidParameterError(f"channel must be one of {CHANNELS}, got {channel!r}")
        return {"31": self.I31, "32": self.I32, "tot": self.Itot}[key]


@dataclass(frozen=True)
class SechFit:
    Imax: float
    t_d: float
    tau: float
    rms_residual: float
    n_points: int


@dataclass(frozen=True)
class ScalingFit:
    exponent_b: float
    log_prefactor: float
    points: list
    r_squared: float


@dataclass(frozen=True)
class ApparentExponent:
    xi_per_N: list
    A: float
    I0: float

    @property
    def corrections(self) -> list:
        """(N, (xi - 2) ln N) pairs; constant and equal to ln A on an exact N^2 family."""
        return [(n, (x - 2.0) * math.log(n)) for n, x in self.xi_per_N]


def _check_sr(params: ModelParams, epsilon: float):
    if params.Omega_p != 0 or params.Omega_c != 0:
        raise InvalidConfigurationError("superradiant transients run with both drives off")
    if not 0 <= epsilon < 1 / math.sqrt(2):
        raise InvalidParameterError(f"epsilon must lie in [0, 1/sqrt(2)), got {epsilon!r}")


def initial_amplitudes(epsilon: float):
    return epsilon, epsilon, math.sqrt(1.0 - 2.0 * epsilon ** 2)


def default_t_grid(params: ModelParams, n_points: int = 1201) -> np.ndarray:
    """Uniform grid covering the burst: about six times ln(N)/(Gamma_tot N) plus a decay time."""
    gtot = params.Gamma31 + params.Gamma32
    N = params.N
    t_max = 6.0 * (math.log(N) + 1.0) / (gtot * N) if N > 1 else 6.0 / gtot
    return np.linspace(0.0, t_max, n_points)


def sr_transient_exact(params: ModelParams, epsilon: float = 0.1, t_grid=None,
                       rtol: float = 1e-8, atol: float = 1e-10, trace_tol: float = 1e-8) -> BurstTrace:
    """I_3a(t) = Gamma_3a Tr[S_a^dag S_a rho(t)] from the symmetric-subspace master equation."""
    _check_sr(params, epsilon)
    t_grid = default_t_grid(params) if t_grid is None else np.asarray(t_grid, float)
    basis = build_basis(params.N, max_n=max(params.N, 60))
    L = lv.liouvillian(params, basis)
    psi = symmetric_product_state(basis, *initial_amplitudes(epsilon))
    rho0 = np.outer(psi, psi.conj())
    S1, S2 = lowering_operator(basis, 1), lowering_operator(basis, 2)
    _, _, Ne = number_operators(basis)
    D = basis.dim
    W = np.stack([lv.observable_weights(S1.conj().T @ S1, D),
                  lv.observable_weights(S2.conj().T @ S2, D),
                  lv.observable_weights(Ne, D),
                  lv.vec(np.eye(D))])
    vals = np.array([W @ y for _, y in lv.propagate(L, rho0, t_grid, rtol=rtol, atol=atol)])
    drift = float(np.max(np.abs(vals[:, 3] - vals[0, 3])))
    if drift >= trace_tol:
        raise SolverFailureError(f"trace drifted by {drift:.2e} during the transient", residual=drift)
    return BurstTrace(t=t_grid, I31=params.Gamma31 * vals[:, 0].real, I32=params.Gamma32 * vals[:, 1].real,
                      method="exact", N=params.N, excited=vals[:, 2].real, trace_drift=drift)


def sr_transient_mf(params: ModelParams, epsilon: float = 0.1, t_grid=None,
                    feedback_coefficient: float = mf.FEEDBACK_COEFFICIENT,
                    rtol: float = 1e-8, atol: float = 1e-10) -> BurstTrace:
    _check_sr(params, epsilon)
    t_grid = default_t_grid(params) if t_grid is None else np.asarray(t_grid, float)
    rho0 = mf.pure_state(*initial_amplitudes(epsilon))
    traj = np.array(mf.rep_evolve(rho0, params, t_grid, rtol=rtol, atol=atol,
                                  feedback_coefficient=feedback_coefficient))
    I31, I32 = mf.mf_intensities(traj, params)
    drift = float(np.max(np.abs(np.trace(traj, axis1=1, axis2=2) - 1.0)))
    return BurstTrace(t=t_grid, I31=I31, I32=I32, method="meanfield", N=params.N,
                      excited=params.N * traj[:, 2, 2].real, trace_drift=drift)


# -- burst analysis ---------------------------------------------------------

def peak_extract(trace: BurstTrace, channel="tot"):
    """(Imax, t_peak): grid maximum refined by a parabola through its neighbours."""
    I = trace.channel(channel)
    t = trace.t
    if I.size == 0:
        raise InvalidDataError("empty trace")
    k = int(np.argmax(I))
    if k == 0 or k == I.size - 1:
        warnings.warn(f"maximum of channel {channel} sits on the grid boundary (t={t[k]:.4g})",
                      BoundaryPeakWarning, stacklevel=2)
        return float(I[k]), float(t[k])
    x, y = t[k - 1:k + 2], I[k - 1:k + 2]
    a, b, c = np.polyfit(x - t[k], y, 2)
    if a >= 0:
        return float(I[k]), float(t[k])
    dt = -b / (2 * a)
    if not x[0] - t[k] <= dt <= x[2] - t[k]:
        return float(I[k]), float(t[k])
    return float(c - b * b / (4 * a)), float(t[k] + dt)


def sech2(t, Imax, t_d, tau):
    return Imax / np.cosh((t - t_d) / tau) ** 2


def _half_width(t, I, k, level):
    """Distances from the peak index to the half-level crossings (None if absent)."""
    out = []
    for step in (-1, 1):
        j, hit = k, None
        while 0 <= j + step < I.size:
            if I[j + step] <= level:
                a, b = I[j], I[j + step]
                hit = abs(t[j] + (level - a) / (b - a) * (t[j + step] - t[j]) - t[k])
                break
            j += step
        out.append(hit)
    return out


def sech2_fit(trace: BurstTrace, channel="tot", window_halfwidth: float = 2.0,
              max_nfev: int = 2000) -> SechFit:
    """Least-squares fit of Imax sech^2((t - t_d)/tau) within +-window*tau_est of the peak."""
    I, t = trace.channel(channel), trace.t
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryPeakWarning)
        Imax0, td0 = peak_extract(trace, channel)
    k = int(np.argmax(I))
    if k == 0 or k == I.size - 1:
        raise FitFailureError("burst maximum lies on the grid boundary; no envelope to fit",
                              last_iterate=(Imax0, td0, math.nan))
    lo, hi = _half_width(t, I, k, 0.5 * I[k])
    widths = [w for w in (lo, hi) if w is not None]
    if not widths:
        raise FitFailureError("trace never drops to half maximum", last_iterate=(Imax0, td0, math.nan))
    hw = min(widths) if len(widths) == 2 else widths[0]
    tau0 = max(hw / ASECH_HALF, 1e-12)
    sel = np.abs(t - td0) <= window_halfwidth * tau0
    n = int(sel.sum())
    if n < 4:
        raise FitFailureError(f"only {n} points inside the fit window; the fit is underdetermined",
                              last_iterate=(Imax0, td0, tau0))
    ts, Is = t[sel], I[sel]
    scale = np.array([Imax0, tau0, tau0])

    def resid(p):
        Imax, td, tau = p * scale
        return (sech2(ts, Imax, td0 + td, tau) - Is) / Imax0

    x0 = np.array([1.0, 0.0, 1.0])
    try:
        sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=max_nfev)
    except ValueError as exc:
        raise FitFailureError(f"sech^2 fit failed: {exc}", last_iterate=(Imax0, td0, tau0)) from exc
    Imax, dtd, tau = sol.x * scale
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)) or tau <= 0:
        raise FitFailureError(f"sech^2 fit did not converge ({sol.message})",
                              last_iterate=(Imax, td0 + dtd, tau))
    rms = float(np.sqrt(np.mean((sech2(ts, Imax, td0 + dtd, abs(tau)) - Is) ** 2)) / Imax)
    return SechFit(Imax=float(Imax), t_d=float(td0 + dtd), tau=float(abs(tau)), rms_residual=rms,
                   n_points=n)


def _check_peaks(peaks):
    pts = [(int(n), float(i)) for n, i in peaks]
    if any(i <= 0 or not math.isfinite(i) for _, i in pts):
        raise InvalidDataError("peak intensities must be positive and finite")
    if any(n < 1 for n, _ in pts):
        raise InvalidDataError("atom numbers must be positive")
    return pts


def power_law_fit(peaks) -> ScalingFit:
    """OLS of ln I_peak against ln N."""
    pts = _check_peaks(peaks)
    if len({n for n, _ in pts}) < 4:
        raise InvalidDataError("power-law fit needs at least four distinct N")
    x = np.log([n for n, _ in pts])
    y = np.log([i for _, i in pts])
    b, a = np.polyfit(x, y, 1)
    fit = a + b * x
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(exponent_b=float(b), log_prefactor=float(a), points=pts, r_squared=r2)


def apparent_exponent(peaks, I0: float) -> ApparentExponent:
    """xi(N) = ln(Imax/I0)/ln N, with A the geometric mean of Imax/(I0 N^2)."""
    if not I0 > 0:
        raise InvalidParameterError(f"I0 must be positive, got {I0!r}")
    pts = _check_peaks(peaks)
    if any(n == 1 for n, _ in pts):
        raise InvalidDataError("apparent exponent is undefined at N = 1 (ln N = 0)")
    xi = [(n, math.log(i / I0) / math.log(n)) for n, i in pts]
    lnA = float(np.mean([math.log(i / (I0 * n * n)) for n, i in pts]))
    return ApparentExponent(xi_per_N=xi, A=math.exp(lnA), I0=float(I0))


def single_emitter_scale(params: ModelParams, epsilon: float = 0.1, channel="tot") -> float:
    """N = 1 peak intensity: with a single atom the flux is largest at t = 0."""
    p3 = 1.0 - 2.0 * epsilon ** 2
    g = {"31": params.Gamma31, "32": params.Gamma32, "tot": params.Gamma31 + params.Gamma32}[str(channel)]
    return g * p3


def correction_spread(ax: ApparentExponent, N_min: float | None = None) -> float:
    """Relative spread (max - min)/mean of |xi - 2| ln N over N >= N_min.

    By default N_min is the midpoint of the N range, i.e. the top half.
    """
    Ns = [n for n, _ in ax.xi_per_N]
    if N_min is None:
        N_min = 0.5 * (min(Ns) + max(Ns))
    vals = [abs(c) for n, c in ax.corrections if n >= N_min]
    if len(vals) < 2:
        raise InvalidDataError("need at least two points in the upper half of the N range")
    return float((max(vals) - min(vals)) / np.mean(vals))


# -- sweeps -----------------------------------------------------------------

def _sweep_point(params: ModelParams, epsilon: float, method: str, channel, n_points: int):
    try:
        grid = default_t_grid(params, n_points)
        if method == "exact":
            tr = sr_transient_exact(params, epsilon, grid)
        else:
            tr = sr_transient_mf(params, epsilon, grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryPeakWarning)
            Imax, tpk = peak_extract(tr, channel)
        return params.N, Imax, tpk, None
    except CollectiveEITError as exc:
        return params.N, math.nan, math.nan, f"{type(exc).__name__}: {exc}"


def sweep(params_base: ModelParams, N_list, epsilon: float = 0.1, method: str = "exact",
          channel="tot", n_points: int = 1201, workers: int = 1) -> list:
    """(N, Imax, t_peak, error) per N, ordered as ``N_list``; failures carry a message."""
    if method not in ("exact", "meanfield"):
        raise InvalidParameterError(f"method must be 'exact' or 'meanfield', got {method!r}")
    jobs = [params_base.replace(N=int(n)) for n in N_list]
    if workers <= 1:
        return [_sweep_point(p, epsilon, method, channel, n_points) for p in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_sweep_point, p, epsilon, method, channel, n_points) for p in jobs]
        return [f.result() for f in futs]


def write_trace_csv(trace: BurstTrace, path, timestamp: bool = True):
    with open(path, "w", newline="") as fh:
        if timestamp:
            fh.write(f"# {trace.method} trace N={trace.N} written "
                     f"{_dt.datetime.now().isoformat(timespec='seconds')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "I31", "I32", "Itot"])
        for row in zip(trace.t, trace.I31, trace.I32, trace.Itot):
            w.writerow([f"{v:.17g}" for v in row])
