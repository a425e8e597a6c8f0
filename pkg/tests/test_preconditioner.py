import math

import numpy as np
import pytest

from htawgm import ht_core as ht
from htawgm.preconditioner import (PreconditionerWindowError, accuracy, apply_precond,
                                   build_expsum, dense_scaling, exact_scaling, index_weights,
                                   phi, step_bound)
from htawgm.wavelet_basis import IndexSet1D


def test_step_bound_value():
    assert math.isclose(step_bound(0.5), math.pi**2 / (5 * (abs(math.log(0.25)) + 4)))
    assert abs(step_bound(0.5) - 0.3665) < 1e-4


@pytest.mark.parametrize("delta", [0.5, 0.1, 0.01])
def test_parameter_invariants(delta):
    P = build_expsum(delta, eta=delta / 10, T=1e4)
    ld = abs(math.log(delta / 2))
    assert 0 < P.h < step_bound(delta)
    assert math.isclose(P.h, 0.9 * step_bound(delta))
    assert P.n_plus >= max(4 / math.sqrt(math.pi), math.sqrt(ld)) / P.h
    assert P.n_plus - 1 < max(4 / math.sqrt(math.pi), math.sqrt(ld)) / P.h
    need = (math.log(2 / math.sqrt(math.pi)) + abs(math.log(min(delta / 2, P.eta)))
            + 0.5 * math.log(P.T)) / P.h
    assert need <= P.n_minus < need + 1
    assert np.all(P.weights > 0) and np.all(P.exponents > 0)
    assert np.all(np.isfinite(P.weights)) and np.all(np.isfinite(P.exponents))


def test_rejects_bad_arguments():
    for args in ((1.0,), (0.0,), (0.1, None, 1.0), (0.1, -1.0)):
        with pytest.raises(ValueError):
            build_expsum(*args)


def test_accuracy_1e4():
    assert accuracy(build_expsum(0.1, T=1e4)) <= 0.1


def test_phi_endpoints_and_monotone():
    P = build_expsum(0.1, T=1e4)
    assert abs(phi(P, 1.0) - 1.0) <= 0.1
    assert abs(phi(P, 1e4) * 100 - 1.0) <= 0.1
    t = np.geomspace(1, 1e4, 500)
    assert np.all(np.diff(phi(P, t)) < 0)


def test_fewer_negative_terms_smaller():
    full = build_expsum(0.1, T=1e4)
    cut = build_expsum(0.1, T=1e4, n_minus=full.n_minus // 2)
    t = np.geomspace(1, 1e4, 200)
    assert np.all(phi(cut, t) <= phi(full, t))


@pytest.mark.parametrize("delta,T", [(0.5, 1e3), (0.1, 1e6), (0.01, 1e3)])
def test_tail_property(delta, T):
    P = build_expsum(delta, T=T)
    Q = build_expsum(delta, eta=P.eta, T=T, n_minus=2 * P.n_minus)
    t = np.geomspace(1, T, 10_000)
    assert np.all(np.sqrt(t) * np.abs(phi(Q, t) - phi(P, t)) <= P.eta)


def test_componentwise_window(basis):
    s = tuple(IndexSet1D.uniform(4))
    w = index_weights(basis, [s, s])
    P = build_expsum(0.1, T=1.1 * (w[0].max() + w[1].max()))
    ratio = dense_scaling(P, w) / exact_scaling(w)
    assert np.all(ratio >= 0.9) and np.all(ratio <= 1.1)


def test_apply_elementary_rank(basis):
    s = tuple(IndexSet1D.uniform(1))
    u = ht.elementary([np.ones(len(s)), np.arange(len(s)) + 1.0], [s, s])
    P = build_expsum(0.5, T=1e4)
    out = apply_precond(P, basis, u)
    assert out.max_rank <= P.n_terms


def test_apply_dense_oracle(basis, rng):
    s = tuple(IndexSet1D.uniform(2))
    x = rng.standard_normal((len(s), len(s)))
    u = ht.from_dense(x, [s, s])
    w = index_weights(basis, [s, s])
    delta = 0.1
    P = build_expsum(delta, T=1.1 * (w[0].max() + w[1].max()))
    exact = exact_scaling(w) * x
    out = ht.densify(apply_precond(P, basis, u, trunc_tol=1e-3))
    assert np.linalg.norm(out - exact) <= delta * np.linalg.norm(exact)
    np.testing.assert_allclose(ht.densify(apply_precond(P, basis, u)), dense_scaling(P, w) * x,
                               rtol=1e-10, atol=1e-12)


def test_apply_truncation_tolerances(basis, rng):
    s = tuple(IndexSet1D.uniform(2))
    x = rng.standard_normal((len(s),) * 3)
    u = ht.from_dense(x, [s] * 3)
    w = index_weights(basis, [s] * 3)
    P = build_expsum(0.1, T=1.1 * sum(v.max() for v in w))
    exact = dense_scaling(P, w) * x
    for tol in (1e-2, 1e-4):
        out = ht.densify(apply_precond(P, basis, u, trunc_tol=tol))
        assert np.linalg.norm(out - exact) <= tol * np.linalg.norm(exact)
        out = ht.densify(apply_precond(P, basis, u, abs_tol=tol))
        assert np.linalg.norm(out - exact) <= tol


def test_window_error(basis):
    s = tuple(IndexSet1D.uniform(3))
    u = ht.elementary([np.ones(len(s))] * 2, [s, s])
    with pytest.raises(PreconditionerWindowError):
        apply_precond(build_expsum(0.1, T=10.0), basis, u)


def test_csv_export():
    P = build_expsum(0.5, T=1e3)
    lines = P.to_csv().splitlines()
    assert lines[0] == "k,omega,a" and len(lines) == P.n_terms + 1
