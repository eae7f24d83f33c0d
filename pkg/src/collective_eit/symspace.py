"""Permutation-symmetric (Dicke) subspace of N three-level atoms.

Basis states are labelled by occupations ``|n1, n2, ne>`` with
``n1 + n2 + ne = N`` and ordered lexicographically in ``(n1, n2)``, so every
operator built here has the same sparsity pattern on every run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameterError

DEFAULT_MAX_N = 60


class BasisState(NamedTuple):
    n1: int
    n2: int
    ne: int


@dataclass(frozen=True)
class SymmetricBasis:
    N: int
    states: tuple[BasisState, ...]
    index: dict[BasisState, int] = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def occupations(self) -> np.ndarray:
        """Integer array of shape (dim, 3) with columns n1, n2, ne."""
        return np.array(self.states, dtype=int).reshape(-1, 3)


def dimension(N: int) -> int:
    return (N + 1) * (N + 2) // 2


def build_basis(N: int, max_n: int = DEFAULT_MAX_N) -> SymmetricBasis:
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise InvalidParameterError(f"atom number must be a positive integer, got {N!r}")
    if N > max_n:
        raise InvalidParameterError(f"N={N} exceeds the configured maximum {max_n}")
    N = int(N)
    states = tuple(BasisState(n1, n2, N - n1 - n2)
                   for n1 in range(N + 1) for n2 in range(N + 1 - n1))
    return SymmetricBasis(N, states, {s: i for i, s in enumerate(states)})


def number_operators(basis: SymmetricBasis):
    """Diagonal occupation operators (N1, N2, Ne) as CSR matrices."""
    occ = basis.occupations().astype(complex)
    return tuple(sp.diags(occ[:, k], format="csr") for k in range(3))


def lowering_operator(basis: SymmetricBasis, branch: int) -> sp.csr_matrix:
    """Collective jump operator moving one excitation from |3> to |branch>.

    ``S1|n1,n2,ne> = sqrt((n1+1) ne) |n1+1,n2,ne-1>`` and analogously for
    branch 2 with ``n2``.
    """
    if branch not in (1, 2):
        raise InvalidParameterError(f"branch must be 1 or 2, got {branch!r}")
    rows, cols, vals = [], [], []
    for j, (n1, n2, ne) in enumerate(basis.states):
        if ne == 0:
            continue
        if branch == 1:
            target, amp = BasisState(n1 + 1, n2, ne - 1), np.sqrt((n1 + 1) * ne)
        else:
            target, amp = BasisState(n1, n2 + 1, ne - 1), np.sqrt((n2 + 1) * ne)
        rows.append(basis.index[target])
        cols.append(j)
        vals.append(amp)
    D = basis.dim
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(D, D))


def quadrature(S) -> sp.csr_matrix:
    if S.shape[0] != S.shape[1]:
        raise InvalidParameterError(f"operator must be square, got shape {S.shape}")
    S = sp.csr_matrix(S)
    return (S + S.conj().T).tocsr()


def symmetric_product_state(basis: SymmetricBasis, c1: complex, c2: complex,
                            c3: complex, atol: float = 1e-10) -> np.ndarray:
    """Amplitudes of (c1|1> + c2|2> + c3|3>)^{(x)N} in the symmetric basis."""
    c = np.array([c1, c2, c3], dtype=complex)
    norm2 = float(np.sum(np.abs(c) ** 2))
    if abs(norm2 - 1.0) > atol:
        raise InvalidParameterError(f"single-atom amplitudes are not normalized (|c|^2={norm2})")
    N = basis.N
    psi = np.empty(basis.dim, dtype=complex)
    for k, occ in enumerate(basis.states):
        # multinomial weight via log-gamma keeps N up to the basis maximum finite
        log_w = 0.5 * (lgamma(N + 1) - sum(lgamma(n + 1) for n in occ))
        amp = np.exp(log_w)
        for ci, n in zip(c, occ):
            amp = amp * ci ** n
        psi[k] = amp
    return psi / np.linalg.norm(psi)
