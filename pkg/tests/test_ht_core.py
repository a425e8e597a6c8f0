import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htawgm import ht_core as ht
from conftest import random_ht


def test_tree_d2():
    tree = ht.build_dim_tree(2)
    assert tree.dims[tree.root] == (0, 1)
    assert [tree.dims[c] for c in tree.children[tree.root]] == [(0,), (1,)]


def test_tree_d4_balanced():
    tree = ht.build_dim_tree(4)
    left, right = tree.children[tree.root]
    assert tree.dims[left] == (0, 1) and tree.dims[right] == (2, 3)
    for t in (left, right):
        assert all(tree.is_leaf(c) for c in tree.children[t])


def test_tree_d3_split():
    tree = ht.build_dim_tree(3)
    left, right = tree.children[tree.root]
    assert tree.dims[left] == (0, 1) and tree.dims[right] == (2,)


def test_tree_rejects_zero():
    with pytest.raises(ValueError):
        ht.build_dim_tree(0)


@pytest.mark.parametrize("d", range(1, 10))
def test_tree_invariants(d):
    tree = ht.build_dim_tree(d)
    assert tree.dims[tree.root] == tuple(range(d))
    leaves = [t for t in range(tree.n_nodes) if tree.is_leaf(t)]
    assert sorted(tree.dims[t] for t in leaves) == [(j,) for j in range(d)]
    for t in tree.internal_nodes():
        left, right = tree.children[t]
        assert tree.dims[left] + tree.dims[right] == tree.dims[t]


def test_add_zero_keeps_rank(rng):
    u = random_ht(rng, (3, 3, 3))
    v = ht.add(u, ht.zeros(u.index_sets))
    assert v.ranks == u.ranks
    np.testing.assert_allclose(ht.densify(v), ht.densify(u))


def test_add_elementary():
    a = ht.elementary([[1, 2, 3], [0, 1, 0], [1, 1, 1]])
    b = ht.elementary([[0, 1, 0], [2, 0, 1], [1, -1, 0]])
    s = ht.add(a, b)
    assert s.max_rank == 2
    np.testing.assert_allclose(ht.densify(s), ht.densify(a) + ht.densify(b), rtol=1e-12)


def test_add_cancellation(rng):
    u = random_ht(rng, (4, 3, 5))
    z = ht.truncate(ht.add(u, ht.scale(u, -1.0)), 1e-12 * ht.norm(u))
    assert ht.norm(z) <= 1e-12 * ht.norm(u)


def test_add_unions_index_sets():
    a = ht.elementary([[1.0, 2.0], [1.0]], index_sets=[("a", "b"), ("x",)])
    b = ht.elementary([[3.0], [1.0, 1.0]], index_sets=[("c",), ("x", "y")])
    s = ht.add(a, b)
    assert s.index_sets == (("a", "b", "c"), ("x", "y"))
    np.testing.assert_allclose(ht.densify(s), [[1, 0], [2, 0], [3, 3]])


def test_add_rejects_other_tree():
    a = ht.elementary([[1.0], [1.0]])
    b = ht.elementary([[1.0], [1.0], [1.0]])
    with pytest.raises(ValueError):
        ht.add(a, b)


def test_inner_elementary():
    v1, v2, w1, w2 = [1, 2], [3, -1, 2], [0.5, 1], [1, 1, 1]
    u = ht.elementary([v1, v2])
    w = ht.elementary([w1, w2])
    assert math.isclose(ht.inner_product(u, w), np.dot(v1, w1) * np.dot(v2, w2))


def test_inner_random_dense(rng):
    u, v = random_ht(rng, (3, 4, 5)), random_ht(rng, (3, 4, 5))
    ref = float(np.sum(ht.densify(u) * ht.densify(v)))
    assert abs(ht.inner_product(u, v) - ref) <= 1e-12 * abs(ref) + 1e-14


def test_inner_self_is_norm(rng):
    u = random_ht(rng, (3, 3, 3, 3))
    assert math.isclose(ht.inner_product(u, u), ht.norm(u) ** 2, rel_tol=1e-12)
    assert ht.inner_product(ht.zeros(u.index_sets), ht.zeros(u.index_sets)) == 0.0


def test_orthogonalize(rng):
    u = random_ht(rng, (4, 3, 5, 2))
    w = ht.orthogonalize(u)
    np.testing.assert_allclose(ht.densify(w), ht.densify(u), rtol=1e-12, atol=1e-12)
    for f in w.frames:
        np.testing.assert_allclose(f.T @ f, np.eye(f.shape[1]), atol=1e-10)
    for t in w.tree.non_root():
        if not w.tree.is_leaf(t):
            b = w.transfers[t]
            m = b.reshape(-1, b.shape[2])
            np.testing.assert_allclose(m.T @ m, np.eye(m.shape[1]), atol=1e-10)


def test_truncate_elementary_unchanged():
    u = ht.elementary([[1, 2], [3, 4, 5], [1, 0]])
    v = ht.truncate(u, 0.5)
    assert v.max_rank == 1
    np.testing.assert_allclose(ht.densify(v), ht.densify(u), rtol=1e-12)


def _diag_tensor():
    q1, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 3)))
    q2, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((5, 3)))
    return q1 @ np.diag([1.0, 0.1, 0.01]) @ q2.T


def test_truncate_known_singular_values():
    x = _diag_tensor()
    u = ht.from_dense(x)
    v, rep = ht.truncate_with_report(u, 0.05)
    assert v.ranks[1] == 2
    err = np.linalg.norm(ht.densify(v) - x)
    assert math.isclose(err, 0.01, rel_tol=1e-8)
    assert err <= rep.bound * (1 + 1e-10)


def test_truncate_random_4d(rng):
    x = rng.standard_normal((4, 4, 4, 4))
    u = ht.from_dense(x)
    v, rep = ht.truncate_with_report(u, 0.3)
    err = np.linalg.norm(ht.densify(v) - x)
    assert err <= 0.3
    assert err <= rep.bound * (1 + 1e-10)


def test_truncate_rejects_negative(rng):
    with pytest.raises(ValueError):
        ht.truncate(random_ht(rng, (2, 2)), -1.0)


def test_truncate_to_rank_identity(rng):
    u = random_ht(rng, (3, 4, 3), rank=2)
    v, rep = ht.truncate_to_rank(u, 10)
    np.testing.assert_allclose(ht.densify(v), ht.densify(u), rtol=1e-10, atol=1e-12)
    assert rep.bound < 1e-10


def test_truncate_to_rank_one():
    x = _diag_tensor()
    v, rep = ht.truncate_to_rank(ht.from_dense(x), 1)
    assert v.max_rank == 1
    err = np.linalg.norm(ht.densify(v) - x)
    assert math.isclose(err, math.hypot(0.1, 0.01), rel_tol=1e-8)


def _best_rank_hooi(x, r, iters=200):
    """Alternating projections for the best multilinear rank-``r`` approximation."""
    d = x.ndim
    us = [np.linalg.svd(np.moveaxis(x, j, 0).reshape(x.shape[j], -1))[0][:, :r] for j in range(d)]
    for _ in range(iters):
        for j in range(d):
            y = x
            for k in range(d):
                if k != j:
                    y = np.moveaxis(np.tensordot(us[k].T, np.moveaxis(y, k, 0), axes=1), 0, k)
            us[j] = np.linalg.svd(np.moveaxis(y, j, 0).reshape(x.shape[j], -1))[0][:, :r]
    y = x
    for k in range(d):
        p = us[k] @ us[k].T
        y = np.moveaxis(np.tensordot(p, np.moveaxis(y, k, 0), axes=1), 0, k)
    return np.linalg.norm(x - y)


def test_truncate_to_rank_quasi_best(rng):
    # for d=3 the HT ranks are the Tucker ranks of modes 0, 1 and the node {0,1} = mode 2
    for _ in range(5):
        x = rng.standard_normal((3, 3, 3))
        v, _ = ht.truncate_to_rank(ht.from_dense(x), 1)
        best = _best_rank_hooi(x, 1)
        assert np.linalg.norm(ht.densify(v) - x) <= math.sqrt(2 * 3 - 3) * best * (1 + 1e-8)


def test_truncate_to_rank_rejects():
    with pytest.raises(ValueError):
        ht.truncate_to_rank(ht.elementary([[1.0], [1.0]]), 0)


def test_contraction_elementary():
    u = ht.elementary([[1, 2], [3, 4]])
    np.testing.assert_allclose(ht.contraction(u, 0).values, [5, 10])
    np.testing.assert_allclose(ht.contraction(u, 1).values, [math.sqrt(45), math.sqrt(80)])


def test_contraction_dense(rng):
    u = random_ht(rng, (3, 4, 5))
    x = ht.densify(u)
    for j in range(3):
        ref = np.sqrt(np.sum(np.moveaxis(x, j, 0) ** 2, axis=(1, 2)))
        pi = ht.contraction(u, j)
        np.testing.assert_allclose(pi.values, ref, rtol=1e-12)
        assert math.isclose(np.linalg.norm(pi.values), ht.norm(u), rel_tol=1e-10)
        assert np.all(pi.values >= 0)


def test_contraction_out_of_range():
    with pytest.raises(IndexError):
        ht.contraction(ht.elementary([[1.0], [1.0]]), 2)


def test_coarsen_zero_tol(rng):
    u = random_ht(rng, (3, 3))
    assert ht.coarsen(u, 0.0) is u


def test_coarsen_example():
    u = ht.elementary([[1, 0.01], [1, 0.01]])
    v = ht.coarsen(u, 0.05)
    assert v.shape == (1, 1)
    err = np.linalg.norm(ht.densify(ht.reindex(v, u.index_sets)) - ht.densify(u))
    assert math.isclose(err, math.sqrt(0.01**2 + 0.01**2 + 0.0001**2), rel_tol=1e-10)
    assert err <= 0.05


def test_coarsen_sparse_random(rng):
    x = rng.standard_normal((6, 5, 4)) * (rng.random((6, 5, 4)) < 0.3)
    x *= np.exp(-np.add.outer(np.add.outer(np.arange(6), np.arange(5)), np.arange(4)))
    u = ht.from_dense(x)
    eps = 0.1 * ht.norm(u)
    v = ht.coarsen(u, eps)
    err = np.linalg.norm(ht.densify(ht.reindex(v, u.index_sets)) - x)
    assert err <= eps


def test_bucket_order():
    vals = np.array([1.0, 0.0, 0.6, 0.71, 0.1])
    order = ht.bucket_order(vals)
    # 0.71 and 1.0 share the top bucket (2^-1/2, 1] and keep their input order
    assert list(order) == [1, 4, 2, 0, 3]


def test_rank_zero_tensor_ops():
    z = ht.zeros([range(3), range(2), range(4)])
    assert z.max_rank == 0 and ht.norm(z) == 0.0
    assert np.all(ht.densify(z) == 0)
    assert ht.truncate(z, 0.1).max_rank == 0
    u = ht.elementary([[1, 1, 1], [1, 2], [0, 0, 1, 0]])
    np.testing.assert_allclose(ht.densify(ht.add(z, u)), ht.densify(u))


def test_root_rank_must_be_one():
    tree = ht.build_dim_tree(2)
    with pytest.raises(ValueError):
        ht.HTTensor(tree, [[0], [0]], [np.ones((1, 1)), np.ones((1, 1))],
                    [np.ones((1, 1, 2)), None, None])


def test_densify_guard():
    u = ht.zeros([range(1000)] * 3)
    with pytest.raises(MemoryError):
        ht.densify(u)


def test_to_json_roundtrip_fields(rng):
    import json
    doc = json.loads(ht.to_json(random_ht(rng, (2, 3, 2)), include_data=True))
    assert doc["d"] == 3 and len(doc["ranks"]) == 5 and "frames" in doc


def test_idempotent_truncation(rng):
    u = ht.truncate(random_ht(rng, (4, 4, 4, 4), rank=2), 0.0)
    v = ht.truncate(u, 1e-10 * ht.norm(u))
    assert v.ranks == u.ranks


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6), st.floats(0.01, 0.9))
def test_property_truncation_bound(d, seed, rel):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 5, size=d))
    u = random_ht(rng, shape, rank=3)
    eps = rel * ht.norm(u)
    v, rep = ht.truncate_with_report(u, eps)
    err = np.linalg.norm(ht.densify(v) - ht.densify(u))
    assert err <= eps * (1 + 1e-10) + 1e-12
    assert err <= rep.bound * (1 + 1e-8) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6))
def test_property_addition_and_norms(d, seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 5, size=d))
    u, v = random_ht(rng, shape), random_ht(rng, shape)
    s = ht.densify(ht.add(u, v))
    ref = ht.densify(u) + ht.densify(v)
    np.testing.assert_allclose(s, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
    n2 = ht.inner_product(u, u)
    for cv in ht.contractions(u):
        assert math.isclose(float(np.sum(cv.values**2)), n2, rel_tol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 10**6))
def test_property_sandwich(d, seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 5, size=d))
    u = random_ht(rng, shape)
    x = ht.densify(u)
    keep = [rng.random(n) < 0.6 for n in shape]
    mask = np.ones(shape, bool)
    for j, k in enumerate(keep):
        mask &= k.reshape([-1 if i == j else 1 for i in range(d)])
    lhs = np.linalg.norm(x[~mask])
    mid = math.sqrt(sum(float(np.sum(cv.values[~k] ** 2))
                        for cv, k in zip(ht.contractions(u), keep)))
    assert lhs <= mid * (1 + 1e-10) + 1e-12
    assert mid <= math.sqrt(d) * lhs * (1 + 1e-10) + 1e-12
