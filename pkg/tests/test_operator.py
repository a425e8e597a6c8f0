import numpy as np
import pytest
import scipy.sparse as sp

from htawgm import ht_core as ht
from htawgm.operator import (IDENTITY, MatrixFactor, SepOperator, apply, galerkin_restrict,
                             laplacian, to_sparse)
from htawgm.wavelet_basis import IndexSet1D, assemble_stiffness

SETS4 = tuple(IndexSet1D.uniform(0))[:4]


def _random_on(rng, sets, rank=2):
    from conftest import random_ht
    u = random_ht(rng, tuple(len(s) for s in sets), rank=rank)
    return ht.HTTensor(u.tree, sets, u.frames, u.transfers)


def test_laplacian_terms(basis):
    assert laplacian(basis, 1).rank == 1
    A = laplacian(basis, 3)
    assert A.rank == 3
    for term in A.terms:
        assert sum(f is not IDENTITY for f in term) == 1


def test_laplacian_dense_kronecker(basis):
    sets = [SETS4] * 3
    T = assemble_stiffness(basis, SETS4).toarray()
    I = np.eye(4)
    ref = (np.kron(np.kron(T, I), I) + np.kron(np.kron(I, T), I) + np.kron(np.kron(I, I), T))
    np.testing.assert_allclose(to_sparse(laplacian(basis, 3), sets).toarray(), ref, atol=1e-12)


def test_identity_operator(rng):
    sets = [tuple(range(3))] * 3
    u = _random_on(rng, sets)
    A = SepOperator([[IDENTITY] * 3])
    np.testing.assert_allclose(ht.densify(apply(A, u)), ht.densify(u))


def test_laplacian_elementary(basis):
    s = tuple(IndexSet1D.uniform(1))
    v = np.linspace(1, 2, len(s))
    w = np.cos(np.arange(len(s)))
    u = ht.elementary([v, w], [s, s])
    out = apply(laplacian(basis, 2), u)
    assert out.max_rank <= 2
    T = assemble_stiffness(basis, s).toarray()
    ref = np.outer(T @ v, w) + np.outer(v, T @ w)
    np.testing.assert_allclose(ht.densify(out), ref, rtol=1e-12, atol=1e-10)


def test_spd_and_symmetry(basis, rng):
    s = tuple(IndexSet1D.uniform(1))
    A = laplacian(basis, 3)
    for _ in range(5):
        u, v = _random_on(rng, [s] * 3), _random_on(rng, [s] * 3)
        assert ht.inner_product(u, apply(A, u)) > 0
        a, b = ht.inner_product(apply(A, u), v), ht.inner_product(u, apply(A, v))
        assert abs(a - b) <= 1e-11 * max(abs(a), abs(b))


def test_rank_bound(basis, rng):
    s = tuple(IndexSet1D.uniform(1))
    A = laplacian(basis, 4)
    u = _random_on(rng, [s] * 4, rank=3)
    out = apply(A, u)
    for t in range(1, out.tree.n_nodes):
        assert out.rank(t) <= A.rank * u.rank(t)


def test_output_restriction(basis, rng):
    s = tuple(IndexSet1D.uniform(1))
    big = tuple(IndexSet1D.uniform(2))
    A = laplacian(basis, 2)
    u = _random_on(rng, [s, s])
    out = apply(A, u, out=[big, big])
    ref = to_sparse(A, [big, big], cols=[s, s]) @ ht.densify(u).ravel()
    np.testing.assert_allclose(ht.densify(out).ravel(), ref, atol=1e-10)


def test_galerkin_restrict(basis, rng):
    s = tuple(IndexSet1D.uniform(1))
    A = laplacian(basis, 3)
    AL = galerkin_restrict(A, [s] * 3)
    u = _random_on(rng, [s] * 3)
    ref = to_sparse(A, [s] * 3) @ ht.densify(u).ravel()
    np.testing.assert_allclose(ht.densify(apply(AL, u)).ravel(), ref, atol=1e-10)


def test_general_separable_operator(rng):
    labels = tuple(range(3))
    m1 = MatrixFactor(labels, np.diag([1.0, 2.0, 3.0]))
    m2 = MatrixFactor(labels, np.ones((3, 3)) + np.eye(3))
    A = SepOperator([[m1, m2], [IDENTITY, m1]])
    assert not A.is_kronecker_sum()
    u = _random_on(rng, [labels, labels])
    ref = (np.kron(m1.mat.toarray(), m2.mat.toarray()) + np.kron(np.eye(3), m1.mat.toarray()))
    np.testing.assert_allclose(ht.densify(apply(A, u)).ravel(), ref @ ht.densify(u).ravel(),
                               atol=1e-12)


def test_domain_mismatch():
    m = MatrixFactor((0, 1), sp.identity(2))
    A = SepOperator([[m, IDENTITY]])
    u = ht.elementary([[1, 1, 1], [1, 1]])
    with pytest.raises(ValueError):
        apply(A, u)


def test_dimension_mismatch(basis):
    with pytest.raises(ValueError):
        apply(laplacian(basis, 3), ht.elementary([[1.0], [1.0]]))
