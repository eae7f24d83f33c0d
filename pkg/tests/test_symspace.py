import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from collective_eit.errors import InvalidParameterError
from collective_eit.symspace import (BasisState, build_basis, dimension, lowering_operator, number_operators,
                                     quadrature, symmetric_product_state)
from collective_eit.validation import brute_force_symmetric_state


def amp(S, basis, src, dst):
    return S.toarray()[basis.index[BasisState(*dst)], basis.index[BasisState(*src)]]


def unit_amplitudes(draw_vals):
    c = np.array(draw_vals[:3]) + 1j * np.array(draw_vals[3:])
    return c / np.linalg.norm(c)


amplitudes = st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


# -- basis ------------------------------------------------------------------

def test_single_atom_basis():
    b = build_basis(1)
    assert set(b.states) == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}


@pytest.mark.parametrize("N, D", [(14, 120), (30, 496)])
def test_dimension_examples(N, D):
    assert build_basis(N).dim == D


@given(st.integers(1, 60))
@settings(max_examples=30, deadline=None)
def test_dimension_formula_and_occupations(N):
    b = build_basis(N)
    assert b.dim == dimension(N) == (N + 1) * (N + 2) // 2
    occ = b.occupations()
    assert np.all(occ >= 0) and np.all(occ.sum(axis=1) == N)
    assert all(b.index[s] == i for i, s in enumerate(b.states))


def test_ordering_is_lexicographic_and_reproducible():
    a, b = build_basis(7), build_basis(7)
    assert a.states == b.states
    keys = [(s.n1, s.n2) for s in a.states]
    assert keys == sorted(keys)
    La, Lb = lowering_operator(a, 1), lowering_operator(b, 1)
    assert np.array_equal(La.indices, Lb.indices) and np.array_equal(La.data, Lb.data)


@pytest.mark.parametrize("N", [0, -1, 61])
def test_invalid_atom_number(N):
    with pytest.raises(InvalidParameterError):
        build_basis(N)


def test_configurable_maximum():
    assert build_basis(70, max_n=70).dim == dimension(70)


# -- number operators -------------------------------------------------------

def test_number_operator_examples():
    b1 = build_basis(1)
    N1, N2, Ne = number_operators(b1)
    k = b1.index[(0, 0, 1)]
    assert (Ne[k, k], N1[k, k], N2[k, k]) == (1, 0, 0)
    b2 = build_basis(2)
    N1, _, Ne = number_operators(b2)
    k = b2.index[(1, 0, 1)]
    assert N1[k, k] == 1 and Ne[k, k] == 1


@pytest.mark.parametrize("N", [1, 3, 8])
def test_number_operators_sum_to_N(N):
    b = build_basis(N)
    tot = sum(number_operators(b))
    assert abs(tot - N * sp.identity(b.dim)).max() == 0
    assert tot.diagonal().sum() == N * b.dim
    for op in number_operators(b):
        assert np.all(op.toarray().imag == 0)
        assert sp.triu(op, 1).nnz == 0 and sp.tril(op, -1).nnz == 0


# -- jump operators ---------------------------------------------------------

def test_lowering_examples():
    b1, b2 = build_basis(1), build_basis(2)
    assert amp(lowering_operator(b1, 1), b1, (0, 0, 1), (1, 0, 0)) == pytest.approx(1.0)
    assert amp(lowering_operator(b2, 1), b2, (0, 0, 2), (1, 0, 1)) == pytest.approx(math.sqrt(2))
    assert amp(lowering_operator(b2, 2), b2, (1, 0, 1), (1, 1, 0)) == pytest.approx(1.0)


@pytest.mark.parametrize("N", [1, 2, 5])
@pytest.mark.parametrize("branch", [1, 2])
def test_lowering_matrix_elements(N, branch):
    """Compare with matrix elements written out from the occupation rule."""
    b = build_basis(N)
    S = lowering_operator(b, branch).toarray()
    ref = np.zeros_like(S)
    for j, (n1, n2, ne) in enumerate(b.states):
        if ne:
            tgt = (n1 + 1, n2, ne - 1) if branch == 1 else (n1, n2 + 1, ne - 1)
            ref[b.index[tgt], j] = math.sqrt(((n1 if branch == 1 else n2) + 1) * ne)
    assert np.array_equal(S, ref)
    # exactly one nonzero per source state with an excitation
    nnz_per_col = (S != 0).sum(axis=0)
    assert all(nnz_per_col[j] == (1 if s.ne else 0) for j, s in enumerate(b.states))


def test_lowering_branch_validation():
    with pytest.raises(InvalidParameterError):
        lowering_operator(build_basis(2), 3)


@pytest.mark.parametrize("N", range(1, 7))
def test_jump_products_positive_and_number_conserving(N):
    b = build_basis(N)
    tot = sum(number_operators(b))
    for branch in (1, 2):
        S = lowering_operator(b, branch)
        P = (S.conj().T @ S).toarray()
        assert np.array_equal(P, P.conj().T)
        assert np.linalg.eigvalsh(P).min() >= -1e-12
        assert abs(tot @ S - S @ tot).max() == 0


def test_su3_commutator_oracle():
    """[S1^dag, S1] on the symmetric subspace equals N1 - Ne."""
    b = build_basis(5)
    N1, _, Ne = number_operators(b)
    S = lowering_operator(b, 1)
    comm = S @ S.conj().T - S.conj().T @ S
    assert abs(comm - (N1 - Ne)).max() < 1e-12


# -- quadrature -------------------------------------------------------------

def test_quadrature_examples():
    b = build_basis(1)
    Q = quadrature(lowering_operator(b, 1)).toarray()
    i1, i3 = b.index[(1, 0, 0)], b.index[(0, 0, 1)]
    ref = np.zeros((3, 3))
    ref[i1, i3] = ref[i3, i1] = 1.0
    assert np.array_equal(Q, ref)
    Dg = sp.diags([1.0, -2.0, 3.5])
    assert np.array_equal(quadrature(Dg).toarray(), 2 * Dg.toarray())


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_quadrature_hermitian(N, seed):
    D = dimension(N)
    rng = np.random.default_rng(seed)
    S = sp.random(D, D, density=0.3, random_state=rng) + 1j * sp.random(D, D, density=0.3, random_state=rng)
    Q = quadrature(S)
    assert abs(Q - Q.conj().T).max() == 0


def test_quadrature_needs_square():
    with pytest.raises(InvalidParameterError):
        quadrature(sp.csr_matrix((2, 3)))


# -- product states ---------------------------------------------------------

def test_product_state_examples():
    eps = 0.1
    b1 = build_basis(1)
    psi = symmetric_product_state(b1, eps, eps, math.sqrt(1 - 2 * eps ** 2))
    assert psi[b1.index[(1, 0, 0)]] == pytest.approx(0.1)
    assert psi[b1.index[(0, 1, 0)]] == pytest.approx(0.1)
    assert psi[b1.index[(0, 0, 1)]] == pytest.approx(math.sqrt(0.98))
    b2 = build_basis(2)
    psi = symmetric_product_state(b2, 0, 0, 1)
    ref = np.zeros(b2.dim)
    ref[b2.index[(0, 0, 2)]] = 1.0
    assert np.allclose(psi, ref, atol=0)


@given(amplitudes)
@settings(max_examples=30, deadline=None)
def test_product_state_two_atoms(vals):
    c = unit_amplitudes(vals)
    b = build_basis(2)
    psi = symmetric_product_state(b, *c)
    assert abs(psi[b.index[(1, 0, 1)]] - math.sqrt(2) * c[0] * c[2]) < 1e-12


@given(st.integers(1, 4), amplitudes)
@settings(max_examples=40, deadline=None)
def test_product_state_matches_tensor_expansion(N, vals):
    """Independent oracle: explicit N-fold Kronecker product projected on symmetric states."""
    c = unit_amplitudes(vals)
    b = build_basis(N)
    psi = symmetric_product_state(b, *c)
    full = c
    for _ in range(N - 1):
        full = np.kron(full, c)
    for s in b.states:
        words = [w for w in itertools.product(range(3), repeat=N)
                 if (w.count(0), w.count(1), w.count(2)) == tuple(s)]
        idx = [int(np.ravel_multi_index(w, (3,) * N)) for w in words]
        ref = full[idx].sum() / math.sqrt(len(words))
        assert abs(psi[b.index[s]] - ref) < 1e-12
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-12


@pytest.mark.parametrize("N", range(1, 5))
def test_brute_force_helper_agrees_with_kronecker(N):
    rng = np.random.default_rng(N)
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    c /= np.linalg.norm(c)
    b = build_basis(N)
    psi = symmetric_product_state(b, *c)
    ref = brute_force_symmetric_state(N, c)
    assert max(abs(psi[b.index[s]] - ref[tuple(s)]) for s in b.states) < 1e-12


def test_product_state_large_N_finite():
    b = build_basis(60)
    psi = symmetric_product_state(b, 0.1, 0.1, math.sqrt(0.98))
    assert np.all(np.isfinite(psi)) and abs(np.linalg.norm(psi) - 1) < 1e-12


def test_product_state_rejects_unnormalized():
    with pytest.raises(InvalidParameterError):
        symmetric_product_state(build_basis(2), 1.0, 1.0, 0.0)
