"""Acceptance checks shared by ``collective-eit validate`` and the test suite.

Each ``criterion_*`` function returns a list of ``Check`` records.  A check
never raises on a numerical miss; it records the computed value, the
reference, the tolerance and the verdict.
"""
from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import liouvillian as lv
from . import meanfield as mf
from . import slowlight as sl
from . import spectroscopy as spx
from . import superradiance as sr
from .errors import CollectiveEITError, ResolutionWarning
from .params import EIT_EXACT_GRID, EIT_MF_GRID, SR_EPSILON, SR_SWEEP, eit_params, sr_params, uniform_grid
from .symspace import build_basis, symmetric_product_state


@dataclass
class Check:
    criterion: int
    name: str
    value: float
    reference: str
    tolerance: str
    passed: bool
    detail: str = ""
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        v = self.value if isinstance(self.value, str) else f"{self.value:.6g}"
        return f"[{status}] C{self.criterion} {self.name}: value={v} ref={self.reference} tol={self.tolerance}" + \
            (f" ({self.detail})" if self.detail else "")


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.skipped)

    def as_dict(self) -> dict:
        return {"overall_pass": self.passed, "checks": [asdict(c) for c in self.checks]}

    def by_criterion(self) -> dict:
        out = {}
        for c in self.checks:
            out.setdefault(c.criterion, []).append(c)
        return out


def _chk(criterion, name, value, reference, tolerance, passed, detail=""):
    return Check(criterion, name, float(value) if not isinstance(value, str) else value,
                 str(reference), str(tolerance), bool(passed), detail)


def _skip(criterion, name, why):
    return Check(criterion, name, math.nan, "-", "-", True, why, skipped=True)


# -- 1: N = 1 reduction -------------------------------------------------------

def criterion_1() -> list:
    """Exact N=1 solver with the single-atom dephasing channels vs the mean-field ODE."""
    t0 = time.perf_counter()
    grid = uniform_grid(EIT_EXACT_GRID)
    p = eit_params(1).replace(gamma_phi=0.0)
    ex = spx.scan_exact(p, grid, level_dephasing=True)
    rep = spx.scan_mf(p, grid, mode="ode")
    agr = spx.agreement(ex, rep)
    runtime = time.perf_counter() - t0
    # the same comparison with the Raman channel used for N > 1, for information
    alt = spx.agreement(spx.scan_exact(eit_params(1), grid), rep).eps2
    return [_chk(1, "eps2 exact(N=1) vs mean-field ODE", agr.eps2, "0", "< 1e-6", agr.eps2 < 1e-6,
                 f"eps_inf={agr.eps_inf:.2e}; with Raman dephasing instead eps2={alt:.2e}"),
            _chk(1, "runtime [s]", runtime, "-", "< 5", runtime < 5.0)]


# -- 2: N = 14 spectrum agreement -----------------------------------------

def criterion_2(workers: int = 1) -> list:
    t0 = time.perf_counter()
    p = eit_params(14)
    grid = uniform_grid(EIT_EXACT_GRID)
    ex = spx.scan_exact(p, grid, workers=workers)
    runtime = time.perf_counter() - t0
    mf_scan = spx.regrid(spx.scan_mf(p, uniform_grid(EIT_MF_GRID)), grid)
    direct = spx.scan_mf(p, grid)
    a = spx.agreement(ex, mf_scan)
    b = spx.agreement(ex, direct)
    dips = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        for s in (ex, direct):
            try:
                dips.append(spx.eit_width(s) > 0)
            except CollectiveEITError:
                dips.append(False)
    limit = 600.0 if workers <= 1 else 120.0
    return [_chk(2, "eps2 Im chi (exact vs MF, MF grid regridded)", a.eps2_im, "0", "< 0.15", a.eps2_im < 0.15),
            _chk(2, "eps2 Re chi (exact vs MF, MF grid regridded)", a.eps2_re, "0", "< 0.15", a.eps2_re < 0.15),
            _chk(2, "eps2 max (exact vs MF evaluated on exact grid)", b.eps2, "0", "< 0.15", b.eps2 < 0.15,
                 f"Im {b.eps2_im:.3f}, Re {b.eps2_re:.3f}; Im chi(0) exact {ex.im[100]:.3e} "
                 f"vs MF {direct.im[100]:.3e}"),
            _chk(2, "transparency dip in both scans", float(all(dips)), "1", "== 1", all(dips)),
            _chk(2, f"runtime [s] ({workers} worker{'s' if workers > 1 else ''})", runtime, "-",
                 f"< {limit:g}", runtime < limit)]


# -- 3: EIT width scaling -----------------------------------------------------

def measured_widths(N_list, points: int = 201, span: float = 10.0) -> list:
    """Exact dip widths on a grid of +-span predicted widths around Delta1 = 0."""
    out = []
    for N in N_list:
        p = eit_params(N)
        w0 = p.gamma2 + p.Omega_c ** 2 / mf.gamma_eff(p)
        grid = np.linspace(-span * w0, span * w0, points)
        out.append((N, spx.eit_width(spx.scan_exact(p, grid))))
    return out


def fit_width_law(widths, gamma2: float, Omega_c: float, Gamma31: float):
    """Best constant in w = gamma2 + Oc^2/(Gamma31 N + const); returns (const, max relative residual)."""
    N = np.array([n for n, _ in widths], float)
    w = np.array([x for _, x in widths], float)

    def resid(c):
        return (gamma2 + Omega_c ** 2 / (Gamma31 * N + c[0]) - w) / w

    sol = least_squares(resid, [1.0], bounds=([-Gamma31 * N.min() + 1e-9], [np.inf]))
    return float(sol.x[0]), float(np.max(np.abs(resid(sol.x))))


def criterion_3(N_list=(2, 6, 10, 14), gamma_eff_scale: float = 1.0) -> list:
    widths = measured_widths(N_list)
    w = [x for _, x in widths]
    strictly = all(b < a for a, b in zip(w, w[1:]))
    p = eit_params(14)
    const, res = fit_width_law(widths, p.gamma2, p.Omega_c, p.Gamma31)
    out = [_chk(3, "widths strictly decreasing in N", float(strictly), "1", "== 1", strictly,
                ", ".join(f"N={n}: {x:.5f}" for n, x in widths)),
           _chk(3, "max relative residual of gamma2 + Oc^2/(Gamma31 N + const)", res, "0", "< 0.2", res < 0.2,
                f"const={const:.3f}")]
    Nmax, wmax = widths[-1]
    pm = eit_params(Nmax)
    pred = pm.gamma2 + pm.Omega_c ** 2 / (gamma_eff_scale * mf.gamma_eff(pm))
    rel = abs(wmax - pred) / pred
    out.append(_chk(3, f"width at N={Nmax} vs gamma2 + Oc^2/Gamma_eff", wmax, f"{pred:.5f}", "30% relative",
                    rel < 0.3, f"relative deviation {rel:.3f}"))
    return out


# -- 4, 5, 6: superradiance ---------------------------------------------------

def sr_sweeps(symmetric: bool, N_list=SR_SWEEP, workers: int = 1, meanfield: bool = True):
    """(params, exact rows, mean-field rows or None, exact-sweep runtime in s)."""
    p = sr_params(symmetric=symmetric)
    t0 = time.perf_counter()
    ex = sr.sweep(p, N_list, SR_EPSILON, "exact", workers=workers)
    runtime = time.perf_counter() - t0
    mfr = sr.sweep(p, N_list, SR_EPSILON, "meanfield", workers=workers) if meanfield else None
    return p, ex, mfr, runtime


def _ok_points(rows):
    return [(n, i) for n, i, _, err in rows if err is None]


def criterion_4(sweeps=None, workers: int = 1) -> list:
    p, ex, _, runtime = sweeps if sweeps is not None else sr_sweeps(False, workers=workers, meanfield=False)
    fit = sr.power_law_fit(_ok_points(ex))
    t30 = next((t for n, _, t, err in ex if n == 30 and err is None), math.nan)
    return [_chk(4, "exponent b (asymmetric, Itot)", fit.exponent_b, "1.86", "[1.75, 1.95]",
                 1.75 <= fit.exponent_b <= 1.95, f"R^2={fit.r_squared:.5f}"),
            _chk(4, "exact peak time at N=30 [1/Gamma32]", t30, "0.03", "+-0.015", abs(t30 - 0.03) <= 0.015),
            _chk(4, "runtime [s]", runtime, "-", "< 900", runtime < 900)]


def criterion_5(sweeps=None, workers: int = 1) -> list:
    p, ex, mfr, _ = sweeps if sweeps is not None else sr_sweeps(True, workers=workers)
    fit = sr.power_law_fit(_ok_points(ex))
    devs = [(n, abs(m - e) / e) for (n, e, _, _), (_, m, _, _) in zip(ex, mfr)]
    worst = max(devs, key=lambda x: x[1])
    return [_chk(5, "exponent b (symmetric, Itot)", fit.exponent_b, "1.76", "[1.65, 1.85]",
                 1.65 <= fit.exponent_b <= 1.85, f"R^2={fit.r_squared:.5f}"),
            _chk(5, "max MF-vs-exact peak deviation", worst[1], "0", "<= 0.10", worst[1] <= 0.10,
                 "; ".join(f"N={n}: {d:.3f}" for n, d in devs))]


def criterion_6(sweep_sets=()) -> list:
    A, I0 = 0.5, 1.3
    Ns = range(2, 101)
    ax = sr.apparent_exponent([(n, I0 * n * n * A) for n in Ns], I0)
    err = max(abs(c - math.log(A)) for _, c in ax.corrections)
    out = [_chk(6, "planted (xi-2) ln N vs ln A, N=2..100", err, f"{math.log(A):.6f}", "< 1e-10", err < 1e-10)]
    for label, (p, rows) in sweep_sets:
        axs = sr.apparent_exponent(_ok_points(rows), sr.single_emitter_scale(p, SR_EPSILON))
        spread = sr.correction_spread(axs)
        out.append(_chk(6, f"|xi-2| ln N spread over top half ({label})", spread, "0", "< 0.30", spread < 0.30,
                        f"A={axs.A:.4f}"))
    return out


# -- 7: group velocity --------------------------------------------------------

def criterion_7() -> list:
    p, medium = sl.slow_light_setup()
    Ns = np.unique(np.round(np.logspace(2, 4, 41)).astype(int))
    rows = sl.vg_table(p, medium, [1] + list(Ns))
    slope = sl.log_slope([r.N for r in rows[1:]], [r.ratio for r in rows[1:]])
    rep = sl.sodium_report(300)
    out = [_chk(7, "log-log slope of v_g(N)/v_g(1), N in [1e2, 1e4]", slope, "2.00", "+-0.05",
                abs(slope - 2.0) <= 0.05, f"delta(1)={rows[0].delta:.3g}")]
    for key, ref, label in (("gamma_eff_hz", 1.5e9, "Gamma_eff(300) [Hz]"),
                            ("bound_2gamma2_hz", 2.25e9, "transparency bound as evaluated, Oc^2/(2 g2) [Hz]"),
                            ("vg_N2_law_over_c", 5.1e-3, "v_g(300)/c via N^2 law")):
        rel = abs(rep[key] - ref) / ref
        out.append(_chk(7, label, rep[key], f"{ref:g}", "2% relative", rel <= 0.02))
    out.append(_chk(7, "consistency verdict (as evaluated)", float(rep["consistent_2gamma2"]), "1", "== 1",
                    rep["consistent_2gamma2"],
                    f"stated bound Oc^2/(4 g2)={rep['bound_4gamma2_hz']:.4g} Hz gives "
                    f"{rep['consistent_4gamma2']}"))
    return out


# -- 8: dispersion slope ------------------------------------------------------

def random_dispersion_sets(n: int = 20, seed: int = 2024) -> list:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        g2 = 10 ** rng.uniform(-2, -0.3)
        oc = 10 ** rng.uniform(-1.5, 0.3)
        if abs(oc / g2 - 1.0) < 0.2:
            continue
        out.append(eit_params(int(rng.integers(1, 60))).replace(
            Omega_c=oc, gamma2=g2, gamma3=rng.uniform(0, 0.1),
            Gamma31=rng.uniform(0.5, 2.0), Gamma32=rng.uniform(0.5, 2.0), Omega_p=rng.uniform(0.01, 0.2)))
    return out


def criterion_8(h: float = 1e-6) -> list:
    worst = 0.0
    for p in random_dispersion_sets():
        num = ((mf.rho31_linear(p, h) - mf.rho31_linear(p, -h)) / (2 * h * p.Omega_p)).real
        ana = sl.analytic_slope(p)
        worst = max(worst, abs(num - ana) / abs(ana))
    return [_chk(8, "max relative error, closed-form vs central-difference slope (20 sets)", worst, "0",
                 "< 1e-6", worst < 1e-6)]


# -- 9: solver hygiene --------------------------------------------------------

def criterion_9(quick: bool = False) -> list:
    worst = {"trace": 0.0, "eig": 0.0, "res": 0.0}
    Ns = (1, 4, 8) if quick else (1, 6, 14)
    for N in Ns:
        b = build_basis(N)
        for d in (-3.0, 0.0, 0.01, 3.0):
            rho = lv.steady_state(lv.liouvillian(eit_params(N).replace(Delta1=d), b))
            worst["trace"] = max(worst["trace"], rho.trace_error())
            worst["eig"] = min(worst["eig"], rho.min_eigenvalue())
            worst["res"] = max(worst["res"], rho.residual)
    drifts = []
    Nsr = 8 if quick else 30
    tr = sr.sr_transient_exact(sr_params(Nsr), SR_EPSILON, np.linspace(0, 0.2, 201))
    drifts.append(tr.trace_drift)
    m = sr.sr_transient_mf(sr_params(Nsr), SR_EPSILON, np.linspace(0, 0.2, 201))
    drifts.append(m.trace_drift)
    return [_chk(9, "max |Tr rho - 1| over steady states", worst["trace"], "0", "< 1e-12", worst["trace"] < 1e-12),
            _chk(9, "min eigenvalue over steady states", worst["eig"], "0", ">= -1e-10", worst["eig"] >= -1e-10),
            _chk(9, "max steady-state residual", worst["res"], "0", "< 1e-10", worst["res"] < 1e-10),
            _chk(9, f"max trace drift over trajectories (exact and MF, N={Nsr})", max(drifts), "0", "< 1e-8",
                 max(drifts) < 1e-8)]


# -- 10: oracle equivalence ---------------------------------------------------

def brute_force_symmetric_state(N: int, c) -> dict:
    """Expand (c1|1>+c2|2>+c3|3>)^{(x)N} and project onto normalized occupation states."""
    amp = {}
    for word in itertools.product(range(3), repeat=N):
        occ = (word.count(0), word.count(1), word.count(2))
        amp[occ] = amp.get(occ, 0) + np.prod([c[k] for k in word])
    # |n1,n2,ne> is the normalized sum over its multinomial(N; occ) words
    return {occ: a / math.sqrt(math.factorial(N) / np.prod([math.factorial(n) for n in occ]))
            for occ, a in amp.items()}


def bloch_generator(Delta1, Delta2, Omega_p, Omega_c, Gamma31, Gamma32, gamma_phi) -> np.ndarray:
    """Dense 9x9 generator of the single Lambda atom built element by element."""
    e = np.eye(3)
    H = np.array([[0, 0, Omega_p / 2], [0, Delta1 - Delta2, Omega_c / 2], [Omega_p / 2, Omega_c / 2, Delta1]],
                 dtype=complex)
    Cs = [math.sqrt(Gamma31) * np.outer(e[0], e[2]), math.sqrt(Gamma32) * np.outer(e[1], e[2]),
          math.sqrt(gamma_phi) * np.diag([1.0, -1.0, 0.0])]
    G = np.zeros((9, 9), dtype=complex)
    for j in range(3):
        for i in range(3):
            E = np.zeros((3, 3), dtype=complex)
            E[i, j] = 1.0
            out = -1j * (H @ E - E @ H)
            for C in Cs:
                out += C @ E @ C.conj().T - 0.5 * (C.conj().T @ C @ E + E @ C.conj().T @ C)
            G[:, i + 3 * j] = out.reshape(-1, order="F")
    return G


def criterion_10() -> list:
    rng = np.random.default_rng(7)
    err_state = 0.0
    for N in range(1, 5):
        b = build_basis(N)
        for _ in range(3):
            c = rng.normal(size=3) + 1j * rng.normal(size=3)
            c /= np.linalg.norm(c)
            psi = symmetric_product_state(b, *c)
            ref = brute_force_symmetric_state(N, c)
            err_state = max(err_state, max(abs(psi[b.index[s]] - ref[tuple(s)]) for s in b.states))
    err_gen = 0.0
    for _ in range(5):
        d1, d2, op, oc = rng.normal(size=4)
        g31, g32, gp = rng.uniform(0, 2, size=3)
        p = eit_params(1).replace(Delta1=d1, Delta2=d2, Omega_p=op, Omega_c=oc, Gamma31=g31, Gamma32=g32,
                                  gamma_phi=gp)
        b1 = build_basis(1)
        lvl = [b1.index[(1, 0, 0)], b1.index[(0, 1, 0)], b1.index[(0, 0, 1)]]
        sel = [lvl[i] + 3 * lvl[j] for j in range(3) for i in range(3)]
        L = lv.liouvillian(p, b1).matrix.toarray()[np.ix_(sel, sel)]
        err_gen = max(err_gen, np.max(np.abs(L - bloch_generator(d1, d2, op, oc, g31, g32, gp))))
    # planted sech^2 and power law
    Imax, td, tau = 812.5, 0.0213, 0.0041
    t = np.linspace(0, 0.06, 1201)
    tr = sr.BurstTrace(t=t, I31=sr.sech2(t, Imax, td, tau), I32=np.zeros_like(t), method="exact", N=30)
    f = sr.sech2_fit(tr, "31")
    err_sech = max(abs(f.Imax - Imax) / Imax, abs(f.t_d - td) / td, abs(f.tau - tau) / tau)
    pl = sr.power_law_fit([(n, 2.7 * n ** 1.83) for n in SR_SWEEP])
    err_pl = max(abs(pl.exponent_b - 1.83) / 1.83, abs(math.exp(pl.log_prefactor) - 2.7) / 2.7)
    return [_chk(10, "symmetric product state vs brute-force expansion (N<=4)", err_state, "0", "< 1e-12",
                 err_state < 1e-12),
            _chk(10, "N=1 Liouvillian vs hand-built 9x9 generator", err_gen, "0", "< 1e-12", err_gen < 1e-12),
            _chk(10, "sech^2 fit recovers planted parameters", err_sech, "0", "< 1e-6", err_sech < 1e-6),
            _chk(10, "power-law fit recovers planted parameters", err_pl, "0", "< 1e-6", err_pl < 1e-6)]


# -- driver -------------------------------------------------------------------

def run_all(quick: bool = False, workers: int = 1, gamma_eff_scale: float = 1.0, log=None) -> ValidationReport:
    """Every acceptance check; ``quick`` keeps to N <= 8 and skips what needs more."""
    report = ValidationReport()

    def add(checks):
        for c in checks:
            report.checks.append(c)
            if log:
                log(c.line())

    add(criterion_1())
    if quick:
        add([_skip(2, "N=14 spectrum agreement", "needs N=14")])
        add(criterion_3((2, 4, 6, 8), gamma_eff_scale))
        add([_skip(4, "asymmetric scaling", "needs N up to 30"), _skip(5, "symmetric scaling", "needs N up to 30")])
        add(criterion_6())
    else:
        add(criterion_2(workers))
        add(criterion_3((2, 6, 10, 14), gamma_eff_scale))
        asym = sr_sweeps(False, workers=workers, meanfield=False)
        add(criterion_4(asym))
        sym = sr_sweeps(True, workers=workers)
        add(criterion_5(sym))
        add(criterion_6([("asymmetric", asym[:2]), ("symmetric", sym[:2])]))
    add(criterion_7())
    add(criterion_8())
    add(criterion_9(quick))
    add(criterion_10())
    return report
