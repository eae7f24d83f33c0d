"""Representative-atom mean-field model with (N-1) collective feedback.

One three-level atom (basis |1>, |2>, |3>) evolves under an effective
Hamiltonian rebuilt from its own coherences at every step, so the equation
is nonlinear in rho.  The drive enters with the -Omega/2 sign; comparisons
with the exact solver go through the alignment map in ``spectroscopy``.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root

from .errors import (ConvergenceError, InvalidParameterError, SingularityError,
                     SolverFailureError, StiffnessError)
from .params import ModelParams

# Prefactor of the feedback terms  c * Gamma_3a (N-1) (<sx> sy - <sy> sx).
FEEDBACK_COEFFICIENT = 0.5


def _sigma(i: int, j: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return m


S11, S22, S33 = _sigma(1, 1), _sigma(2, 2), _sigma(3, 3)
S13, S31 = _sigma(1, 3), _sigma(3, 1)
S23, S32 = _sigma(2, 3), _sigma(3, 2)
SX31, SY31 = S31 + S13, -1j * (S31 - S13)
SX32, SY32 = S32 + S23, -1j * (S32 - S23)


def _comm(a, b):
    return a @ b - b @ a


class RepState(np.ndarray):
    """3x3 density matrix of the representative atom (plain ndarray view)."""

    def __new__(cls, rho):
        arr = np.asarray(rho, dtype=complex).reshape(3, 3).copy().view(cls)
        return arr

    @property
    def rho31(self) -> complex:
        return complex(self[2, 0])

    @property
    def rho32(self) -> complex:
        return complex(self[2, 1])


def ground_state() -> RepState:
    return RepState(S11)


def pure_state(c1: complex, c2: complex, c3: complex, atol: float = 1e-10) -> RepState:
    c = np.array([c1, c2, c3], dtype=complex)
    if abs(np.vdot(c, c).real - 1.0) > atol:
        raise InvalidParameterError("single-atom amplitudes are not normalized")
    return RepState(np.outer(c, c.conj()))


# -- closed forms -----------------------------------------------------------

def gamma_eff(params: ModelParams) -> float:
    """(Gamma31 + Gamma32)/2 + gamma3 + Gamma31 (N - 1)."""
    return 0.5 * (params.Gamma31 + params.Gamma32) + params.gamma3 + params.Gamma31 * (params.N - 1)


def chi_mf(params: ModelParams, Delta1) -> complex | np.ndarray:
    """Per-emitter linear susceptibility with effective detunings -Delta1, -Delta2.

    Independent of Omega_p.  At gamma2 = 0 on two-photon resonance it is
    exactly zero (dark state) unless the control is also off, which leaves
    the expression undefined.  ``spectroscopy.align_mf`` turns the result
    into the absorption-positive convention shared with the exact solver.
    """
    d1 = -np.asarray(Delta1, dtype=float)
    d2 = -params.Delta2
    g = 0.5 * params.gamma2 + 1j * (d1 - d2)
    if params.Omega_c == 0 and np.any(g == 0):
        raise SingularityError("two-photon denominator vanishes with the control field off")
    # (i/2) / (G + i d1 + Oc^2/(4 g)) multiplied through by g
    return 0.5j * g / ((gamma_eff(params) + 1j * d1) * g + 0.25 * params.Omega_c ** 2)


def rho31_linear(params: ModelParams, Delta1) -> complex | np.ndarray:
    """Weak-probe steady-state coherence rho31 (first order in Omega_p)."""
    d1 = np.asarray(Delta1, dtype=float)
    Ge = gamma_eff(params)
    g = 0.5 * params.gamma2 + 1j * (d1 - params.Delta2)
    den = (Ge + 1j * d1) * g + 0.25 * params.Omega_c ** 2
    if np.any(den == 0):
        raise SingularityError("linear-response denominator vanishes")
    return 0.5j * params.Omega_p * g / den


# -- dynamics ---------------------------------------------------------------

def effective_hamiltonian(rho, params: ModelParams,
                          feedback_coefficient: float = FEEDBACK_COEFFICIENT) -> np.ndarray:
    rho = np.asarray(rho)
    H = (params.Delta1 * S33 + (params.Delta1 - params.Delta2) * S22
         - 0.5 * (params.Omega_p * SX31 + params.Omega_c * SX32))
    k = feedback_coefficient * (params.N - 1)
    if k:
        x31, y31 = np.trace(SX31 @ rho).real, np.trace(SY31 @ rho).real
        x32, y32 = np.trace(SX32 @ rho).real, np.trace(SY32 @ rho).real
        H = H + k * params.Gamma31 * (x31 * SY31 - y31 * SX31)
        H = H + k * params.Gamma32 * (x32 * SY32 - y32 * SX32)
    return H


def dissipator(rho, params: ModelParams) -> np.ndarray:
    rho = np.asarray(rho)
    return (0.5 * params.Gamma31 * (_comm(S13, rho @ S31) - _comm(S31, S13 @ rho))
            + 0.5 * params.Gamma32 * (_comm(S23, rho @ S32) - _comm(S32, S23 @ rho))
            - 0.5 * params.gamma2 * _comm(S22, _comm(S22, rho))
            - 0.5 * params.gamma3 * _comm(S33, _comm(S33, rho)))


def rep_rhs(state, params: ModelParams,
            feedback_coefficient: float = FEEDBACK_COEFFICIENT) -> np.ndarray:
    """d rho/dt = -i [H_eff(<sigma>), rho] + L_D[rho]."""
    rho = np.asarray(state, dtype=complex)
    if rho.shape != (3, 3):
        raise InvalidParameterError(f"representative state must be 3x3, got {rho.shape}")
    H = effective_hamiltonian(rho, params, feedback_coefficient)
    return -1j * _comm(H, rho) + dissipator(rho, params)


def _check_rep(rho, tol=1e-8, where=""):
    tr = abs(np.trace(rho) - 1.0)
    herm = np.max(np.abs(rho - rho.conj().T))
    if tr >= tol or herm >= tol:
        raise SolverFailureError(f"representative state lost trace/hermiticity{where} "
                                 f"(trace error {tr:.1e}, hermiticity {herm:.1e})", residual=max(tr, herm))
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam < -tol:
        raise SolverFailureError(f"representative state lost positivity{where} (eigenvalue {lam:.1e})",
                                 residual=-lam)


def rep_evolve(rho0, params: ModelParams, t_grid, rtol: float = 1e-8, atol: float = 1e-10,
               feedback_coefficient: float = FEEDBACK_COEFFICIENT, method: str = "RK45") -> list:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("t_grid must be non-empty, start at t >= 0 and increase strictly")
    rho0 = np.asarray(rho0, dtype=complex)
    _check_rep(rho0, tol=1e-10, where=" in the initial state")
    if t_grid.size == 1:
        return [RepState(rho0)]

    def f(t, y):
        return rep_rhs(y.reshape(3, 3), params, feedback_coefficient).ravel()

    sol = solve_ivp(f, (t_grid[0], t_grid[-1]), rho0.ravel(), method=method,
                    t_eval=t_grid, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StiffnessError(f"mean-field integration failed: {sol.message}; "
                             "reduce the Gamma*t span or the atom number")
    out = []
    for k in range(sol.y.shape[1]):
        rho = sol.y[:, k].reshape(3, 3)
        _check_rep(rho, where=f" at t={sol.t[k]:.4g}")
        out.append(RepState(0.5 * (rho + rho.conj().T)))
    return out


def _pack(rho):
    return np.array([rho[0, 0].real, rho[1, 1].real,
                     rho[0, 1].real, rho[0, 1].imag, rho[0, 2].real, rho[0, 2].imag,
                     rho[1, 2].real, rho[1, 2].imag])


def _unpack(x):
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0], rho[1, 1] = x[0], x[1]
    rho[2, 2] = 1.0 - x[0] - x[1]
    rho[0, 1], rho[0, 2], rho[1, 2] = x[2] + 1j * x[3], x[4] + 1j * x[5], x[6] + 1j * x[7]
    rho[1, 0], rho[2, 0], rho[2, 1] = rho[0, 1].conj(), rho[0, 2].conj(), rho[1, 2].conj()
    return rho


def _stable(g, x, h=1e-7) -> bool:
    """All eigenvalues of the finite-difference Jacobian of g at x have Re < 0."""
    J = np.empty((x.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (g(x + e) - g(x - e)) / (2 * h)
    return bool(np.max(np.linalg.eigvals(J).real) < 0)


def rep_steady_state(params: ModelParams, tol: float = 1e-12, max_time: float = 1e7,
                     feedback_coefficient: float = FEEDBACK_COEFFICIENT,
                     rho0=None) -> RepState:
    """Stationary state reached from |1><1| by damped time marching.

    A Newton solve on the 8 real parameters of a unit-trace Hermitian matrix
    is tried straight from the initial state and accepted only if the fixed
    point is positive and linearly stable.  Otherwise the march runs over
    growing horizons with a Newton polish after each one.  The result must
    satisfy max|d rho/dt| < ``tol``.
    """
    rho = np.asarray(S11 if rho0 is None else rho0, dtype=complex)

    def resid(r):
        return float(np.max(np.abs(rep_rhs(r, params, feedback_coefficient))))

    def f(t, y):
        return rep_rhs(y.reshape(3, 3), params, feedback_coefficient).ravel()

    def g(x):
        return _pack(rep_rhs(_unpack(x), params, feedback_coefficient))

    res = resid(rho)
    if res < tol:
        return RepState(rho)
    nr = root(g, _pack(rho), method="hybr", tol=1e-15)
    cand = _unpack(nr.x)
    if resid(cand) < tol and np.linalg.eigvalsh(cand)[0] > -1e-10 and _stable(g, nr.x):
        return RepState(cand)
    horizon, t0 = 1.0, 0.0
    while True:
        sol = solve_ivp(f, (t0, t0 + horizon), rho.ravel(), method="BDF", rtol=1e-6, atol=1e-9)
        if sol.status != 0:
            raise ConvergenceError(f"steady-state march failed: {sol.message}", residual=res)
        rho = sol.y[:, -1].reshape(3, 3)
        rho = 0.5 * (rho + rho.conj().T)
        t0 += horizon
        nr = root(g, _pack(rho), method="hybr", tol=1e-15)
        cand = _unpack(nr.x)
        cres = resid(cand)
        if cres < tol and np.linalg.eigvalsh(cand)[0] > -1e-10:
            return RepState(cand)
        res = min(res, resid(rho))
        if res < tol:
            return RepState(rho)
        if t0 >= max_time:
            raise ConvergenceError(f"no stationary state within t={max_time:g} "
                                   f"(residual {min(res, cres):.2e})", residual=min(res, cres))
        horizon *= 10.0


def mf_intensities(state, params: ModelParams):
    """Channel intensities Gamma_3a [N rho33 + N(N-1) |rho_3a|^2]."""
    rho = np.asarray(state)
    N = params.N
    p3 = rho[..., 2, 2].real
    I31 = params.Gamma31 * (N * p3 + N * (N - 1) * np.abs(rho[..., 2, 0]) ** 2)
    I32 = params.Gamma32 * (N * p3 + N * (N - 1) * np.abs(rho[..., 2, 1]) ** 2)
    return I31, I32
