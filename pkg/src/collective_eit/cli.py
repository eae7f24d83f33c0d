"""``collective-eit`` command-line entry point.

Configuration comes from an optional INI file (sections ``[model]``, ``[eit]``,
``[sr]``, ``[vg]``, ``[run]``; keys as the long flag names with underscores)
and is overridden by flags.  Outputs go to ``--out`` or, by default, to
``$COLLECTIVE_EIT_OUT/<command>`` (``./collective_eit_out`` if unset).

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import slowlight as sl
from . import spectroscopy as spx
from . import superradiance as sr
from . import validation
from .errors import (ConvergenceError, FitFailureError, InvalidConfigurationError, InvalidDataError,
                     InvalidParameterError, ScanPointError, SingularityError,
                     SolverFailureError, StiffnessError)
from .params import EIT_EXACT_GRID, EIT_MF_GRID, SR_EPSILON, SR_SWEEP, ModelParams, eit_params, sr_params

log = logging.getLogger("collective_eit")

OUT_ENV = "COLLECTIVE_EIT_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

MODEL_KEYS = {"n": "N", "omega_p": "Omega_p", "omega_c": "Omega_c", "delta1": "Delta1",
              "delta2": "Delta2", "gamma31": "Gamma31", "gamma32": "Gamma32", "gamma2": "gamma2",
              "gamma3": "gamma3", "gamma_phi": "gamma_phi"}


# -- configuration ------------------------------------------------------------

def _read_config(path):
    cp = configparser.ConfigParser()
    if path:
        if not cp.read(path):
            raise InvalidConfigurationError(f"cannot read config file {path}")
        unknown = set(cp.sections()) - {"model", "eit", "sr", "vg", "run"}
        if unknown:
            raise InvalidConfigurationError(f"unknown config sections: {sorted(unknown)}")
    return cp


def _opt(args, cp, section, key, default, conv=str):
    """Flag value if given, else config value, else default."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        try:
            if conv is bool:
                return cp.getboolean(section, key)
            return conv(raw)
        except ValueError as exc:
            raise InvalidConfigurationError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return default


def _model(args, cp, base: ModelParams) -> ModelParams:
    changes = {}
    for key, field_name in MODEL_KEYS.items():
        conv = int if key == "n" else float
        v = _opt(args, cp, "model", key, None, conv)
        if v is not None:
            changes[field_name] = v
    try:
        return base.replace(**changes)
    except (TypeError, InvalidParameterError) as exc:
        raise InvalidConfigurationError(str(exc)) from exc


def _int_list(text):
    try:
        return [int(x) for x in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise InvalidConfigurationError(f"expected a list of integers, got {text!r}") from exc


def _out_dir(args, cp, command) -> Path:
    out = _opt(args, cp, "run", "out", None)
    if out is None:
        out = Path(os.environ.get(OUT_ENV, "collective_eit_out")) / command
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _workers(args, cp) -> int:
    w = _opt(args, cp, "run", "workers", 1, int)
    if w < 1:
        raise InvalidConfigurationError("worker count must be >= 1")
    return min(w, os.cpu_count() or 1) if w > 1 else 1


def _timestamp(args, cp) -> bool:
    if args.no_timestamp:
        return False
    return _opt(argparse.Namespace(), cp, "run", "timestamp", True, bool)


def _dump(obj, path):
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.floating, np.integer)):
            return clean(x.item())
        return x
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands -----------------------------------------------------------------

def run_eit_scan(args, cp) -> int:
    p = _model(args, cp, eit_params())
    dephasing = _opt(args, cp, "eit", "dephasing", "raman")
    if dephasing not in ("raman", "level"):
        raise InvalidConfigurationError(f"dephasing must be 'raman' or 'level', got {dephasing!r}")
    mode = _opt(args, cp, "eit", "mf_mode", "analytic")
    lo = _opt(args, cp, "eit", "delta_min", EIT_EXACT_GRID[0], float)
    hi = _opt(args, cp, "eit", "delta_max", EIT_EXACT_GRID[1], float)
    n = _opt(args, cp, "eit", "points", EIT_EXACT_GRID[2], int)
    mlo = _opt(args, cp, "eit", "mf_delta_min", EIT_MF_GRID[0], float)
    mhi = _opt(args, cp, "eit", "mf_delta_max", EIT_MF_GRID[1], float)
    mn = _opt(args, cp, "eit", "mf_points", EIT_MF_GRID[2], int)
    if n < 3 or mn < 3 or hi <= lo or mhi <= mlo:
        raise InvalidConfigurationError("scan grids need at least 3 points and max > min")
    grid, mgrid = np.linspace(lo, hi, n), np.linspace(mlo, mhi, mn)
    level = dephasing == "level"
    if level:
        p = p.replace(gamma_phi=0.0)
    out = _out_dir(args, cp, "eit-scan")
    ts = _timestamp(args, cp)
    exact = spx.scan_exact(p, grid, workers=_workers(args, cp), level_dephasing=level)
    mfs = spx.scan_mf(p, mgrid, mode=mode)
    # the mean-field side is cheap, so it is also evaluated on the exact grid
    mf_direct = spx.scan_mf(p, grid, mode=mode)
    regridded = spx.regrid(mfs, grid)
    scale = bool(_opt(args, cp, "eit", "n_scaled", False, bool))
    spx.write_scan_csv(exact.n_scaled() if scale else exact, out / "exact.csv", ts)
    spx.write_scan_csv(mfs.n_scaled() if scale else mfs, out / "mf.csv", ts)
    metrics = {"params": p.as_dict(), "dephasing": dephasing, "mf_mode": mode, "n_scaled": scale,
               "agreement": spx.agreement(exact, mf_direct).as_dict(),
               "eit_exact": spx.eit_metrics(exact).__dict__,
               "eit_mf": spx.eit_metrics(mf_direct).__dict__}
    if regridded.grid.size == grid.size:
        metrics["agreement_regridded"] = spx.agreement(exact, regridded).as_dict()
    _dump(metrics, out / "metrics.json")
    print(f"eps2={metrics['agreement']['eps2']:.4g} eps_inf={metrics['agreement']['eps_inf']:.4g} -> {out}")
    return EXIT_OK


def _sr_setup(args, cp):
    symmetric = bool(_opt(args, cp, "sr", "symmetric", False, bool))
    p = _model(args, cp, sr_params(symmetric=symmetric))
    if p.Omega_p != 0 or p.Omega_c != 0:
        raise InvalidConfigurationError("superradiance commands run with both drives off")
    eps = _opt(args, cp, "sr", "epsilon", SR_EPSILON, float)
    points = _opt(args, cp, "sr", "points", 1201, int)
    return p, eps, points, symmetric


def run_sr_burst(args, cp) -> int:
    p, eps, points, symmetric = _sr_setup(args, cp)
    t_max = _opt(args, cp, "sr", "t_max", None, float)
    grid = sr.default_t_grid(p, points) if t_max is None else np.linspace(0.0, t_max, points)
    out = _out_dir(args, cp, "sr-burst")
    ts = _timestamp(args, cp)
    fits = {"N": p.N, "epsilon": eps, "symmetric": symmetric}
    for label, fn in (("exact", sr.sr_transient_exact), ("mf", sr.sr_transient_mf)):
        trace = fn(p, eps, grid)
        sr.write_trace_csv(trace, out / f"trace_{label}.csv", ts)
        fits[label] = {}
        for ch in sr.CHANNELS:
            try:
                f = sr.sech2_fit(trace, ch)
                fits[label][ch] = {"Imax": f.Imax, "t_d": f.t_d, "tau": f.tau, "rms_residual": f.rms_residual}
            except FitFailureError as exc:
                fits[label][ch] = {"error": str(exc)}
                log.warning("sech^2 fit (%s, channel %s): %s", label, ch, exc)
    _dump(fits, out / "sech_fit.json")
    print(f"traces and fits -> {out}")
    return EXIT_OK


def _planted(text):
    try:
        key, value = text.split("=")
        if key.strip() != "A":
            raise ValueError
        return float(value)
    except ValueError as exc:
        raise InvalidConfigurationError(f"--planted expects A=<value>, got {text!r}") from exc


def run_sr_scaling(args, cp) -> int:
    p, eps, points, symmetric = _sr_setup(args, cp)
    Ns = _int_list(_opt(args, cp, "sr", "ns", " ".join(map(str, SR_SWEEP))))
    channel = _opt(args, cp, "sr", "channel", "tot")
    if channel not in sr.CHANNELS:
        raise InvalidConfigurationError(f"channel must be one of {sr.CHANNELS}")
    out = _out_dir(args, cp, "sr-scaling")
    I0 = sr.single_emitter_scale(p, eps, channel)
    planted = _opt(args, cp, "sr", "planted", None)
    if planted is not None:
        A = _planted(planted)
        rows = [(n, I0 * n * n * A, math.nan, None) for n in Ns]
        mrows = None
    else:
        w = _workers(args, cp)
        rows = sr.sweep(p, Ns, eps, "exact", channel, points, w)
        mrows = None if args.no_mf else sr.sweep(p, Ns, eps, "meanfield", channel, points, w)
    good = [(n, i) for n, i, _, err in rows if err is None]
    with open(out / "peaks.csv", "w", newline="") as fh:
        if _timestamp(args, cp):
            fh.write("# sr-scaling peaks\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["N", "Imax_exact", "t_peak_exact", "Imax_mf", "t_peak_mf"])
        for k, (n, i, t, _) in enumerate(rows):
            mi, mt = (mrows[k][1], mrows[k][2]) if mrows else (math.nan, math.nan)
            wr.writerow([n] + [f"{v:.17g}" for v in (i, t, mi, mt)])
    summary = {"channel": channel, "epsilon": eps, "symmetric": symmetric, "planted": planted,
               "failures": {str(n): err for n, _, _, err in rows if err is not None}, "I0": I0}
    if len(good) < 4:
        summary["error"] = f"only {len(good)} successful points; fit needs 4"
        _dump(summary, out / "scaling.json")
        log.error(summary["error"])
        return EXIT_SOLVER
    fit = sr.power_law_fit(good)
    ax = sr.apparent_exponent([(n, i) for n, i in good if n > 1], I0)
    summary.update({"b": fit.exponent_b, "log_prefactor": fit.log_prefactor, "r_squared": fit.r_squared,
                    "xi": {str(n): x for n, x in ax.xi_per_N}, "A": ax.A,
                    "xi_minus_2_times_lnN": {str(n): c for n, c in ax.corrections}})
    if mrows:
        summary["mf_peaks"] = {str(r[0]): r[1] for r in mrows}
    _dump(summary, out / "scaling.json")
    print(f"b={fit.exponent_b:.4f} A={ax.A:.4g} -> {out}")
    return EXIT_OK


def run_vg_scan(args, cp) -> int:
    preset = _opt(args, cp, "vg", "preset", "slow-light")
    setups = {"slow-light": sl.slow_light_setup, "sodium": sl.sodium_setup}
    if preset not in setups:
        raise InvalidConfigurationError(f"preset must be one of {sorted(setups)}")
    p, medium = setups[preset](1)
    p = _model(args, cp, p)
    lo = _opt(args, cp, "vg", "n_min", 1, int)
    hi = _opt(args, cp, "vg", "n_max", 10000, int)
    pts = _opt(args, cp, "vg", "points", 41, int)
    if lo < 1 or hi < lo:
        raise InvalidConfigurationError("need 1 <= n_min <= n_max")
    Ns = sorted({1} | set(np.unique(np.round(np.logspace(np.log10(lo), np.log10(hi), pts)).astype(int))))
    rows = sl.vg_table(p, medium, Ns)
    out = _out_dir(args, cp, "vg-scan")
    sl.write_vg_csv(rows, out / "vg.csv", _timestamp(args, cp))
    good = [r for r in rows if math.isfinite(r.ratio) and r.N >= max(lo, hi / 10)]
    report = {"preset": preset, "params": p.as_dict(), "K": sl.asymptotic_K(p, medium),
              "coupling_constant_per_s": sl.coupling_constant(medium),
              "superluminal_points": [r.N for r in rows if not math.isfinite(r.ratio)],
              "top_decade_slope": sl.log_slope([r.N for r in good], [r.ratio for r in good])
              if len(good) >= 2 else None}
    _dump(report, out / "vg.json")
    print(f"K={report['K']:.6g} top-decade slope={report['top_decade_slope']} -> {out}")
    return EXIT_OK


def run_validate(args, cp) -> int:
    out = _out_dir(args, cp, "validate")
    report = validation.run_all(quick=args.quick, workers=_workers(args, cp),
                                gamma_eff_scale=args.tamper_gamma_eff, log=print)
    _dump(report.as_dict(), out / "report.json")
    print(f"overall: {'PASS' if report.passed else 'FAIL'} -> {out / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def run_sodium_demo(args, cp) -> int:
    rep = sl.sodium_report(_opt(args, cp, "model", "n", 300, int))
    out = _out_dir(args, cp, "sodium-demo")
    _dump(rep, out / "sodium.json")
    lines = [(f"Gamma_eff({rep['N']})", f"{rep['gamma_eff_hz'] / 1e9:.4g} GHz"),
             ("bound Oc^2/(4 gamma2)", f"{rep['bound_4gamma2_hz'] / 1e9:.4g} GHz, consistent: "
                                       f"{rep['consistent_4gamma2']}"),
             ("bound Oc^2/(2 gamma2)", f"{rep['bound_2gamma2_hz'] / 1e9:.4g} GHz, consistent: "
                                       f"{rep['consistent_2gamma2']}"),
             (f"v_g({rep['N']}) via N^2 law", f"{rep['vg_N2_law_m_per_s']:.4g} m/s = "
                                            f"{rep['vg_N2_law_over_c']:.4g} c (v_g(1) = {rep['vg1_m_per_s']:g} m/s)"),
             ("closed-form v_g(N)/v_g(1)", f"{rep['closed_form_ratio']:.4g}")]
    for k, v in lines:
        print(f"{k:<27} {v}")
    return EXIT_OK


COMMANDS = {"eit-scan": run_eit_scan, "sr-burst": run_sr_burst, "sr-scaling": run_sr_scaling,
            "vg-scan": run_vg_scan, "validate": run_validate, "sodium-demo": run_sodium_demo}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collective-eit",
                                 description="Collective superradiance and EIT in N three-level atoms")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [eit], [sr], [vg], [run] sections")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header in CSV files")
    common.add_argument("-v", "--verbose", action="store_true")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--n", type=int, help="atom number N")
    for key in ("omega_p", "omega_c", "delta1", "delta2", "gamma31", "gamma32", "gamma2", "gamma3", "gamma_phi"):
        model.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    sub = ap.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eit-scan", parents=[common, model], help="exact vs mean-field susceptibility scan")
    e.add_argument("--delta-min", type=float)
    e.add_argument("--delta-max", type=float)
    e.add_argument("--points", type=int)
    e.add_argument("--mf-delta-min", type=float)
    e.add_argument("--mf-delta-max", type=float)
    e.add_argument("--mf-points", type=int)
    e.add_argument("--mf-mode", choices=("analytic", "ode"))
    e.add_argument("--dephasing", choices=("raman", "level"),
                   help="exact-solver dephasing: collective Raman channel or gamma2/gamma3 channels")
    e.add_argument("--n-scaled", action="store_const", const=True, help="write N*chi instead of chi")

    for name, hlp in (("sr-burst", "drive-off burst traces and sech^2 fits"),
                      ("sr-scaling", "peak-intensity scaling over N")):
        s = sub.add_parser(name, parents=[common, model], help=hlp)
        s.add_argument("--symmetric", action="store_const", const=True, help="Gamma31 = Gamma32")
        s.add_argument("--epsilon", type=float)
        s.add_argument("--points", type=int, help="time-grid points")
        if name == "sr-burst":
            s.add_argument("--t-max", type=float)
        else:
            s.add_argument("--ns", help="comma-separated atom numbers")
            s.add_argument("--channel", choices=sr.CHANNELS)
            s.add_argument("--planted", help="synthetic peaks I0*N^2*A, e.g. A=0.5")
            s.add_argument("--no-mf", action="store_true", help="skip the mean-field sweep")

    v = sub.add_parser("vg-scan", parents=[common, model], help="group velocity versus N")
    v.add_argument("--preset", choices=("slow-light", "sodium"))
    v.add_argument("--n-min", type=int)
    v.add_argument("--n-max", type=int)
    v.add_argument("--points", type=int)

    val = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    val.add_argument("--quick", action="store_true", help="only checks with N <= 8")
    val.add_argument("--tamper-gamma-eff", type=float, default=1.0,
                     help="scale Gamma_eff in the width check (sensitivity probe)")

    d = sub.add_parser("sodium-demo", parents=[common], help="sodium D2 operating point")
    d.add_argument("--n", type=int)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cp = _read_config(args.config)
        return COMMANDS[args.command](args, cp)
    except (InvalidConfigurationError, InvalidParameterError, InvalidDataError, SingularityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailureError, ScanPointError, StiffnessError, ConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
