"""Detuning scans, EIT lineshape metrics and solver-agreement metrics.

Every ``SpectrumScan`` stores the per-emitter susceptibility in one common
convention: absorption positive (Im chi > 0 on an absorption line), equal to
rho31/Omega_p of the weak-probe formula.  The exact solver uses a +Omega/2
drive, which flips the sign of <S1>; the closed-form ``chi_mf`` is written
with negated detunings.  ``align_exact`` and ``align_mf`` undo both.
"""
from __future__ import annotations

import csv
import datetime as _dt
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import liouvillian as lv
from . import meanfield as mf
from .errors import (CollectiveEITError, InvalidDataError, InvalidParameterError,
                     NoDipError, ResolutionWarning, ScanPointError)
from .params import ModelParams
from .symspace import build_basis, lowering_operator, number_operators

METHODS = ("exact", "meanfield", "analytic")

# Finest spacing (units of Gamma) trusted for the line-centre finite difference.
MAX_SLOPE_SPACING = 1e-2


@dataclass(frozen=True)
class SpectrumScan:
    method: str
    grid: np.ndarray
    chi: np.ndarray
    params: ModelParams
    residuals: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown scan method {self.method!r}")
        grid = np.asarray(self.grid, dtype=float)
        chi = np.asarray(self.chi, dtype=complex)
        if grid.ndim != 1 or chi.shape != grid.shape:
            raise InvalidDataError(f"grid {grid.shape} and chi {chi.shape} must be 1-D of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise InvalidDataError("scan grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "chi", chi)

    @property
    def im(self) -> np.ndarray:
        return self.chi.imag

    @property
    def re(self) -> np.ndarray:
        return self.chi.real

    def n_scaled(self) -> "SpectrumScan":
        """Same scan multiplied by N (ensemble rather than per-emitter response)."""
        return SpectrumScan(self.method, self.grid, self.chi * self.params.N, self.params, self.residuals)


@dataclass(frozen=True)
class EitMetrics:
    width: float
    contrast: float
    on_res_absorption: float
    slope: float


@dataclass(frozen=True)
class AgreementMetrics:
    eps2: float
    eps_inf: float
    eps0_im: float
    eps0_slope: float
    eps_width: float
    eps_contrast: float
    eps2_im: float = 0.0
    eps2_re: float = 0.0
    eps_inf_im: float = 0.0
    eps_inf_re: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# -- sign alignment ---------------------------------------------------------

def align_exact(raw_chi):
    """Tr[S1 rho]/(N Omega_p) from the exact solver -> common convention."""
    return -np.asarray(raw_chi)


def align_mf(params: ModelParams, grid):
    """chi_mf evaluated under Delta -> -Delta; equals rho31_linear / Omega_p."""
    grid = np.asarray(grid, dtype=float)
    return mf.chi_mf(params.replace(Delta2=-params.Delta2), -grid)


# -- scans ------------------------------------------------------------------

def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidParameterError("detuning grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("detuning grid must be strictly increasing")
    return grid


def _exact_points(params: ModelParams, deltas, offset: int, level_dephasing: bool, method: str):
    basis = build_basis(params.N, max_n=max(params.N, 60))
    base = lv.liouvillian(params.replace(Delta1=0.0), basis, level_dephasing)
    # Delta1 enters H as Delta1 (Ne + N2); its superoperator is added per point.
    _, N2, Ne = number_operators(basis)
    X = sp.csr_matrix(Ne + N2)
    eye = sp.identity(basis.dim, dtype=complex, format="csr")
    Ldet = sp.csr_matrix(-1j * (sp.kron(eye, X) - sp.kron(X.T, eye)))
    S1 = lowering_operator(basis, 1)
    out = []
    for k, d in enumerate(deltas):
        L = lv.LiouvillianOp(sp.csr_matrix(base.matrix + d * Ldet), basis.dim, basis)
        try:
            rho = lv.steady_state(L, method=method)
        except CollectiveEITError as exc:
            raise ScanPointError(offset + k, float(d), exc) from exc
        raw = lv.expectation(S1, rho) / (params.N * params.Omega_p)
        out.append((complex(align_exact(raw)), rho.residual))
    return out


def scan_exact(params: ModelParams, grid, workers: int = 1, level_dephasing: bool = False,
               method: str = "auto") -> SpectrumScan:
    """One exact steady state per detuning; chi = -Tr[S1 rho]/(N Omega_p)."""
    if params.Omega_p <= 0:
        raise InvalidParameterError("exact susceptibility needs Omega_p > 0")
    grid = _check_grid(grid)
    workers = max(1, int(workers))
    if workers == 1 or grid.size < 2 * workers:
        rows = _exact_points(params, grid, 0, level_dephasing, method)
    else:
        chunks = np.array_split(np.arange(grid.size), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_exact_points, params, grid[c], int(c[0]), level_dephasing, method)
                    for c in chunks if c.size]
            rows = [r for f in futs for r in f.result()]
    chi = np.array([r[0] for r in rows])
    res = np.array([r[1] for r in rows])
    return SpectrumScan("exact", grid, chi, params, residuals=res)


def scan_mf(params: ModelParams, grid, mode: str = "analytic",
            feedback_coefficient: float = mf.FEEDBACK_COEFFICIENT) -> SpectrumScan:
    """Mean-field scan: closed form (``analytic``) or steady state of the ODE (``ode``)."""
    grid = _check_grid(grid)
    if mode == "analytic":
        return SpectrumScan("analytic", grid, align_mf(params, grid), params)
    if mode != "ode":
        raise InvalidParameterError(f"mode must be 'analytic' or 'ode', got {mode!r}")
    if params.Omega_p <= 0:
        raise InvalidParameterError("ode mode needs Omega_p > 0")
    chi = np.empty(grid.size, dtype=complex)
    res = np.empty(grid.size)
    for k, d in enumerate(grid):
        p = params.replace(Delta1=float(d))
        try:
            rho = mf.rep_steady_state(p, feedback_coefficient=feedback_coefficient)
        except CollectiveEITError as exc:
            raise ScanPointError(k, float(d), exc) from exc
        chi[k] = rho.rho31 / params.Omega_p
        res[k] = np.max(np.abs(mf.rep_rhs(rho, p, feedback_coefficient)))
    return SpectrumScan("meanfield", grid, chi, params, residuals=res)


def regrid(scan: SpectrumScan, grid) -> SpectrumScan:
    """Linear interpolation onto the part of ``grid`` covered by the scan."""
    grid = _check_grid(grid)
    inside = grid[(grid >= scan.grid[0]) & (grid <= scan.grid[-1])]
    if inside.size == 0:
        raise InvalidDataError("target grid does not overlap the scan")
    chi = np.interp(inside, scan.grid, scan.re) + 1j * np.interp(inside, scan.grid, scan.im)
    return SpectrumScan(scan.method, inside, chi, scan.params)


# -- lineshape metrics ------------------------------------------------------

def _dip_index(grid, f):
    """Local minimum of f reached by walking downhill from the point nearest 0."""
    i = int(np.argmin(np.abs(grid)))
    while True:
        if i > 0 and f[i - 1] < f[i]:
            i -= 1
        elif i < f.size - 1 and f[i + 1] < f[i]:
            i += 1
        else:
            return i


def _shoulder(f, i, step):
    j = i
    while 0 <= j + step < f.size and f[j + step] >= f[j]:
        j += step
    return j


def _crossing(grid, f, i, level, step):
    j = i
    while 0 <= j + step < f.size:
        if f[j + step] >= level:
            a, b = f[j], f[j + step]
            return grid[j] + (level - a) / (b - a) * (grid[j + step] - grid[j])
        j += step
    return None


def eit_width(scan: SpectrumScan) -> float:
    """Full width at half dip of Im chi around Delta1 = 0.

    Half level = (Im chi at the dip + shoulder)/2, the shoulder being the
    largest Im chi within five width estimates of the dip, where the estimate
    is half the separation of the two flanking maxima.
    """
    g, f = scan.grid, scan.im
    if g.size < 3:
        raise NoDipError("need at least three grid points to locate a dip")
    i = _dip_index(g, f)
    left, right = _shoulder(f, i, -1), _shoulder(f, i, +1)
    if left == i or right == i or i in (0, g.size - 1):
        raise NoDipError("Im chi has no interior local minimum near Delta1 = 0")
    w_est = 0.5 * (g[right] - g[left])
    window = np.abs(g - g[i]) <= 5.0 * w_est
    shoulder = float(np.max(f[window]))
    if not shoulder > f[i]:
        raise NoDipError("no shoulder above the dip")
    level = 0.5 * (f[i] + shoulder)
    lo = _crossing(g, f, i, level, -1)
    hi = _crossing(g, f, i, level, +1)
    if lo is None or hi is None:
        raise NoDipError("half-dip level is not crossed on both sides")
    width = float(hi - lo)
    spacing = float(min(g[i + 1] - g[i], g[i] - g[i - 1]))
    if width < 4.0 * spacing:
        warnings.warn(f"EIT dip of width {width:.3g} resolved by grid spacing {spacing:.3g}; "
                      "refine the grid around Delta1 = 0", ResolutionWarning, stacklevel=2)
    return width


def _value_at_zero(scan: SpectrumScan, f):
    if not scan.grid[0] <= 0.0 <= scan.grid[-1]:
        raise InvalidDataError("scan grid does not bracket Delta1 = 0")
    return float(np.interp(0.0, scan.grid, f))


def eit_contrast(scan: SpectrumScan, exclusion_halfwidth: float | None = None) -> float:
    """1 - Im chi(0) / max Im chi over the grid with |Delta1| > exclusion."""
    width = eit_width(scan)
    excl = 2.0 * width if exclusion_halfwidth is None else float(exclusion_halfwidth)
    outside = np.abs(scan.grid) > excl
    if not outside.any():
        raise NoDipError("exclusion interval covers the whole scan")
    peak = float(np.max(scan.im[outside]))
    if peak <= 0:
        raise NoDipError("no positive absorption outside the exclusion interval")
    return 1.0 - _value_at_zero(scan, scan.im) / peak


def line_center_slope(scan: SpectrumScan, part: str = "re",
                      max_spacing: float = MAX_SLOPE_SPACING) -> float:
    """Central difference of Re chi (or Im chi) at the grid point nearest 0."""
    f = {"re": scan.re, "im": scan.im}[part]
    g = scan.grid
    if g.size < 3 or not g[0] <= 0.0 <= g[-1]:
        raise InvalidDataError("line-centre slope needs a grid bracketing 0 with three points")
    i = int(np.clip(np.argmin(np.abs(g)), 1, g.size - 2))
    h = 0.5 * (g[i + 1] - g[i - 1])
    if h > max_spacing:
        warnings.warn(f"grid spacing {h:.3g} near line centre exceeds {max_spacing:.3g}",
                      ResolutionWarning, stacklevel=2)
    return float((f[i + 1] - f[i - 1]) / (g[i + 1] - g[i - 1]))


def _safe(fn, *args, **kw):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            return fn(*args, **kw)
    except (NoDipError, InvalidDataError):
        return math.nan


def eit_metrics(scan: SpectrumScan) -> EitMetrics:
    """All four lineshape numbers; NaN where a number is undefined on this scan."""
    return EitMetrics(width=_safe(eit_width, scan),
                      contrast=_safe(eit_contrast, scan),
                      on_res_absorption=_safe(_value_at_zero, scan, scan.im),
                      slope=_safe(line_center_slope, scan))


def _rel(num, den):
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return float(num / den)


def agreement(a: SpectrumScan, b: SpectrumScan) -> AgreementMetrics:
    """Errors of ``b`` relative to ``a`` (the reference, normally the exact scan)."""
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid, b.grid):
        raise InvalidDataError("agreement needs scans on identical grids; use regrid first")
    e2, ei = {}, {}
    for part in ("im", "re"):
        fa, fb = getattr(a, part), getattr(b, part)
        d = fa - fb
        e2[part] = _rel(np.linalg.norm(d), np.linalg.norm(fa))
        ei[part] = _rel(np.max(np.abs(d)), np.max(np.abs(fa)))
    ma, mb = eit_metrics(a), eit_metrics(b)

    def shape_err(x, y):
        if math.isnan(x) or math.isnan(y):
            return math.nan
        return abs(_rel(x - y, abs(x)))

    return AgreementMetrics(
        eps2=max(e2.values()), eps_inf=max(ei.values()),
        eps0_im=shape_err(ma.on_res_absorption, mb.on_res_absorption),
        eps0_slope=shape_err(ma.slope, mb.slope),
        eps_width=shape_err(ma.width, mb.width),
        eps_contrast=shape_err(ma.contrast, mb.contrast),
        eps2_im=e2["im"], eps2_re=e2["re"], eps_inf_im=ei["im"], eps_inf_re=ei["re"])


# -- serialization ----------------------------------------------------------

def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_scan_csv(scan: SpectrumScan, path, timestamp: bool = True):
    with open(path, "w", newline="") as fh:
        if timestamp:
            fh.write(f"# {scan.method} scan written {_dt.datetime.now().isoformat(timespec='seconds')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta1", "re_chi", "im_chi"])
        for d, c in zip(scan.grid, scan.chi):
            w.writerow([fmt(d), fmt(c.real), fmt(c.imag)])


def read_scan_csv(path, params: ModelParams, method: str = "exact") -> SpectrumScan:
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0] != ["delta1", "re_chi", "im_chi"]:
        raise InvalidDataError(f"{path}: expected header delta1,re_chi,im_chi")
    data = np.array(rows[1:], dtype=float).reshape(-1, 3)
    return SpectrumScan(method, data[:, 0], data[:, 1] + 1j * data[:, 2], params)
