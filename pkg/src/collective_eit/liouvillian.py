"""Exact collective master equation in the symmetric subspace.

Density matrices are vectorized by column stacking: entry ``rho[i, j]`` sits
at position ``i + D * j``.  With that convention

    L = -i (I (x) H - H^T (x) I)
        + sum_k [ conj(C_k) (x) C_k - 1/2 I (x) C_k^dag C_k - 1/2 (C_k^dag C_k)^T (x) I ].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import RK45

from .errors import (AmbiguityError, InvalidParameterError, SolverFailureError,
                     StiffnessError)
from .params import ModelParams
from .symspace import SymmetricBasis, lowering_operator, number_operators, quadrature

log = logging.getLogger(__name__)

VECTORIZATION = "column-stacking"

# Below this basis size the sparse LU of the full Liouvillian is cheap.
DIRECT_MAX_DIM = 45
# Dense SVD of L for the null-space degeneracy test is affordable up to here.
SVD_CHECK_MAX_DIM = 21


@dataclass(frozen=True)
class LiouvillianOp:
    matrix: sp.csr_matrix
    dim: int
    basis: SymmetricBasis | None = field(default=None, repr=False)
    vectorization: str = VECTORIZATION

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)


@dataclass(frozen=True)
class DensityMatrix:
    data: np.ndarray
    residual: float | None = None

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace_error(self) -> float:
        return abs(np.trace(self.data) - 1.0)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def __getitem__(self, item):
        return self.data[item]


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def build_hamiltonian(params: ModelParams, basis: SymmetricBasis) -> sp.csr_matrix:
    """H = D1 Ne + (D1 - D2) N2 + (Op/2) S1x + (Oc/2) S2x."""
    _, N2, Ne = number_operators(basis)
    S1x = quadrature(lowering_operator(basis, 1))
    S2x = quadrature(lowering_operator(basis, 2))
    H = (params.Delta1 * Ne + (params.Delta1 - params.Delta2) * N2
         + 0.5 * params.Omega_p * S1x + 0.5 * params.Omega_c * S2x)
    return sp.csr_matrix(H)


def collapse_operators(params: ModelParams, basis: SymmetricBasis,
                       level_dephasing: bool = False) -> list:
    """Collapse operators ``[C1, C2, Cphi]``.

    Zero-rate channels are kept as zero matrices.  With
    ``level_dephasing`` two more operators ``sqrt(gamma2) N2`` and
    ``sqrt(gamma3) Ne`` are appended; they generate the double-commutator
    dephasing terms on S22 and S33 of the collective master equation.
    """
    N1, N2, Ne = number_operators(basis)
    S1 = lowering_operator(basis, 1)
    S2 = lowering_operator(basis, 2)
    ops = [np.sqrt(params.Gamma31) * S1,
           np.sqrt(params.Gamma32) * S2,
           np.sqrt(params.gamma_phi) * (N1 - N2)]
    if level_dephasing:
        ops += [np.sqrt(params.gamma2) * N2, np.sqrt(params.gamma3) * Ne]
    return [sp.csr_matrix(C) for C in ops]


def assemble_liouvillian(H, collapse, basis: SymmetricBasis | None = None) -> LiouvillianOp:
    D = H.shape[0]
    if H.shape != (D, D):
        raise InvalidParameterError(f"Hamiltonian must be square, got {H.shape}")
    for k, C in enumerate(collapse):
        if C.shape != (D, D):
            raise InvalidParameterError(f"collapse operator {k} has shape {C.shape}, expected {(D, D)}")
    if basis is not None and basis.dim != D:
        raise InvalidParameterError(f"basis dimension {basis.dim} does not match operators ({D})")
    H = sp.csr_matrix(H, dtype=complex)
    eye = sp.identity(D, dtype=complex, format="csr")
    L = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for C in collapse:
        C = sp.csr_matrix(C, dtype=complex)
        CdC = (C.conj().T @ C).tocsr()
        L = L + sp.kron(C.conj(), C) - 0.5 * sp.kron(eye, CdC) - 0.5 * sp.kron(CdC.T, eye)
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    return LiouvillianOp(L, D, basis)


def liouvillian(params: ModelParams, basis: SymmetricBasis,
                level_dephasing: bool = False) -> LiouvillianOp:
    """Convenience wrapper: Hamiltonian + collapse operators -> superoperator."""
    H = build_hamiltonian(params, basis)
    return assemble_liouvillian(H, collapse_operators(params, basis, level_dephasing), basis)


def expectation(op, rho) -> complex:
    data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if op.shape != data.shape:
        raise InvalidParameterError(f"operator shape {op.shape} does not match state {data.shape}")
    if sp.issparse(op):
        return complex(op.multiply(data.T).sum())
    return complex(np.sum(np.asarray(op) * data.T))


def residual_norm(L: LiouvillianOp, rho: np.ndarray) -> float:
    return float(np.max(np.abs(L.matrix @ vec(rho))))


# -- steady state -----------------------------------------------------------

def steady_state(L: LiouvillianOp, method: str = "auto", tol: float = 1e-10) -> DensityMatrix:
    """Unique stationary state of ``L`` normalized to unit trace.

    ``method`` is ``"direct"`` (trace row replaces one equation, sparse LU),
    ``"krylov"`` (GMRES preconditioned by the probe-free part of ``L``, needs
    ``L.basis``) or ``"auto"``.  The other method is tried if the first one
    misses ``tol`` on the infinity-norm residual.
    """
    if method not in ("auto", "direct", "krylov"):
        raise InvalidParameterError(f"method must be 'auto', 'direct' or 'krylov', got {method!r}")
    D = L.dim
    if D <= SVD_CHECK_MAX_DIM:
        _check_null_space(L)
    if method == "auto":
        method = "direct" if (D <= DIRECT_MAX_DIM or L.basis is None) else "krylov"
    order = [method] + [m for m in ("direct", "krylov") if m != method]
    if L.basis is None:
        order = ["direct"]
    best = None
    for m in order:
        try:
            x = _solve_direct(L) if m == "direct" else _solve_krylov(L, tol)
        except AmbiguityError:
            raise
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            log.debug("steady-state method %s failed: %s", m, exc)
            continue
        rho, res = _finalize(L, x)
        if best is None or res < best[1]:
            best = (rho, res)
        if res < tol:
            break
        log.debug("steady-state method %s residual %.3e above tolerance", m, res)
    if best is None:
        raise SolverFailureError("all steady-state methods failed", residual=np.inf)
    rho, res = best
    if res >= tol:
        raise SolverFailureError(f"steady-state residual {res:.3e} above tolerance {tol:.1e}",
                                 residual=res)
    out = DensityMatrix(rho, residual=res)
    _check_state(out)
    return out


def _finalize(L, x):
    rho = unvec(x, L.dim)
    tr = np.trace(rho)
    if not np.isfinite(tr) or abs(tr) == 0:
        raise SolverFailureError("steady-state solution has zero or non-finite trace", residual=np.inf)
    rho = hermitize(rho / tr)
    rho = rho / np.trace(rho).real
    return rho, residual_norm(L, rho)


def _check_state(rho: DensityMatrix, trace_tol=1e-12, herm_tol=1e-10, eig_tol=-1e-10):
    if rho.trace_error() >= trace_tol:
        raise SolverFailureError(f"trace error {rho.trace_error():.2e}", residual=rho.residual)
    if rho.hermiticity_error() >= herm_tol:
        raise SolverFailureError(f"hermiticity error {rho.hermiticity_error():.2e}",
                                 residual=rho.residual)
    lam = rho.min_eigenvalue()
    if lam < eig_tol:
        raise SolverFailureError(f"negative eigenvalue {lam:.2e}", residual=rho.residual)


def _check_null_space(L: LiouvillianOp, rtol: float = 1e-10):
    s = np.linalg.svd(L.matrix.toarray(), compute_uv=False)
    if s[0] > 0 and s[-2] < rtol * s[0]:
        raise AmbiguityError(f"Liouvillian has a degenerate null space "
                             f"(second smallest singular value {s[-2]:.2e})",
                             residual=float(s[-2]))


def _trace_row(D: int) -> np.ndarray:
    return vec(np.eye(D))


def _solve_direct(L: LiouvillianOp) -> np.ndarray:
    D = L.dim
    rows = sp.vstack([sp.csr_matrix(_trace_row(D).astype(complex)), L.matrix[1:]]).tocsc()
    b = np.zeros(D * D, dtype=complex)
    b[0] = 1.0
    try:
        lu = spla.splu(rows, permc_spec="MMD_ATA")
    except RuntimeError as exc:
        # SuperLU reports an exactly singular factor: the trace row does not
        # pin down a unique state.
        raise AmbiguityError(f"Liouvillian with trace constraint is singular: {exc}") from exc
    return lu.solve(b)


def _cell_labels(L: LiouvillianOp):
    occ = L.basis.occupations()
    D = L.dim
    n1 = occ[:, 0]
    a = np.tile(n1, D)      # n1 of the ket index i
    b = np.repeat(n1, D)    # n1 of the bra index j
    return a, b


def _solve_krylov(L: LiouvillianOp, tol: float) -> np.ndarray:
    """GMRES on the reduced system with the ground-state population pinned.

    Without the probe the Liouvillian maps the sector labelled by the ket and
    bra occupations (n1, n1') only into itself and into (n1+1, n1'+1), so it
    is block lower bidiagonal along each diagonal n1' - n1 = const.  That
    part is inverted exactly by forward substitution over small dense blocks
    and used as the preconditioner.
    """
    if L.basis is None:
        raise SolverFailureError("structured Krylov solve needs the symmetric basis")
    D = L.dim
    N = L.basis.N
    a, b = _cell_labels(L)
    g = L.basis.index[(N, 0, 0)]
    pin = g + D * g

    M = L.matrix.tocoo()
    da = a[M.row] - a[M.col]
    db = b[M.row] - b[M.col]
    in_l0 = ((da == 0) & (db == 0)) | ((da == 1) & (db == 1))

    keep = np.ones(D * D, dtype=bool)
    keep[pin] = False
    # cell order: diagonal index k = b - a, then a increasing
    order = np.lexsort((a, b - a))
    order = order[keep[order]]
    pos = np.full(D * D, -1)
    pos[order] = np.arange(order.size)

    def _reduced(mask):
        r, c = pos[M.row[mask]], pos[M.col[mask]]
        ok = (r >= 0) & (c >= 0)
        return sp.csr_matrix((M.data[mask][ok], (r[ok], c[ok])), shape=(order.size, order.size))

    A = _reduced(np.ones_like(in_l0))
    A0 = _reduced(in_l0)
    col = M.col == pin
    rr = pos[M.row[col]]
    rhs = np.zeros(order.size, dtype=complex)
    np.add.at(rhs, rr[rr >= 0], -M.data[col][rr >= 0])

    ka, kb = a[order], b[order] - a[order]
    bounds = np.flatnonzero(np.diff(np.stack([kb, ka]), axis=1).any(axis=0)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [order.size]])
    cells = []
    for s, e in zip(starts, stops):
        blk = A0[s:e, s:e].toarray()
        lu, piv = sla.lu_factor(blk, check_finite=False)
        if np.any(np.abs(np.diag(lu)) < 1e-14 * max(1.0, np.abs(blk).max())):
            raise RuntimeError("probe-free block is singular; preconditioner unavailable")
        prev = cells[-1] if cells and kb[cells[-1][0]] == kb[s] else None
        coupling = A0[s:e, prev[0]:prev[1]] if prev is not None else None
        cells.append((s, e, (lu, piv), coupling, prev))

    def apply_prec(r):
        x = np.empty(order.size, dtype=complex)
        for s, e, fac, coupling, prev in cells:
            rhs_c = r[s:e]
            if coupling is not None and coupling.nnz:
                rhs_c = rhs_c - coupling @ x[prev[0]:prev[1]]
            x[s:e] = sla.lu_solve(fac, rhs_c, check_finite=False)
        return x

    P = spla.LinearOperator(A.shape, matvec=apply_prec, dtype=complex)
    y = np.zeros(order.size, dtype=complex)
    r = rhs.copy()
    for _ in range(4):
        dy, info = spla.gmres(A, r, M=P, rtol=1e-14, atol=0.0, restart=200, maxiter=10)
        y = y + dy
        r = rhs - A @ y
        if np.max(np.abs(r)) < 1e-3 * tol:
            break
    x = np.zeros(D * D, dtype=complex)
    x[order] = y
    x[pin] = 1.0
    return x


# -- time evolution ---------------------------------------------------------

def propagate(L: LiouvillianOp, rho0, t_grid, rtol: float = 1e-8, atol: float = 1e-10):
    """Yield ``(t, vec(rho(t)))`` at every requested time.

    Dormand-Prince 5(4) with dense output, so only the current state is held
    in memory.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise InvalidParameterError("t_grid must be a non-empty 1-D sequence")
    if t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise InvalidParameterError("t_grid must start at t >= 0 and be strictly increasing")
    data = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0)
    if data.shape != (L.dim, L.dim):
        raise InvalidParameterError(f"initial state shape {data.shape} does not match L (dim {L.dim})")
    y0 = vec(data).astype(complex)
    yield t_grid[0], y0
    if t_grid.size == 1:
        return
    if L.matrix.nnz == 0:
        for t in t_grid[1:]:
            yield t, y0
        return
    A = L.matrix
    solver = RK45(lambda t, y: A @ y, t_grid[0], y0, t_grid[-1], rtol=rtol, atol=atol)
    k = 1
    while k < t_grid.size:
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"integration failed at t={solver.t:.6g}: {msg}; "
                                 "reduce the Gamma*t span or the atom number")
        if solver.t >= t_grid[k] or solver.status == "finished":
            dense = solver.dense_output()
            while k < t_grid.size and t_grid[k] <= solver.t:
                yield t_grid[k], dense(t_grid[k])
                k += 1


def evolve(L: LiouvillianOp, rho0, t_grid, rtol: float = 1e-8, atol: float = 1e-10,
           trace_tol: float = 1e-8) -> list:
    """Trajectory of Hermitized density matrices at the times in ``t_grid``."""
    out = []
    tr0 = None
    for _, y in propagate(L, rho0, t_grid, rtol=rtol, atol=atol):
        rho = hermitize(unvec(y, L.dim))
        tr = np.trace(rho).real
        tr0 = tr if tr0 is None else tr0
        if abs(tr - tr0) >= trace_tol:
            raise SolverFailureError(f"trace drifted by {abs(tr - tr0):.2e}", residual=abs(tr - tr0))
        out.append(DensityMatrix(rho))
    return out


def observable_weights(op, dim: int) -> np.ndarray:
    """Row vector w with ``Tr[op rho] = w @ vec(rho)``."""
    op = sp.csr_matrix(op)
    if op.shape != (dim, dim):
        raise InvalidParameterError(f"operator shape {op.shape} does not match dim {dim}")
    return vec(op.T.toarray())
