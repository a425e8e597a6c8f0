import math

import numpy as np
import pytest

from htawgm import awgm
from htawgm import ht_core as ht
from htawgm.awgm import (AwgmParams, ConvergenceError, IterationBudgetError, ParameterError,
                         default_params, expand, ht_awgm, omega2_bound, omega3_bound,
                         poisson_rhs, residual, theta, validate_params, window_T)
from htawgm.operator import laplacian, to_sparse
from htawgm.preconditioner import build_expsum, exact_scaling, index_weights
from htawgm.wavelet_basis import IndexSet1D, expand_security_zone, rhs_one_coefficients

SPEC2 = (0.3367605662616304, 2.723829528839673)


def test_theta_example_not_contractive():
    # alpha=0.95, omega1=0.1, kappa=10, omega2 at 90% of its bound gives theta^2 > 1
    kappa = 10.0
    p = default_params(2, kappa, alpha=0.95, omega1=0.1)
    p = p.replace(omega2=0.9 * omega2_bound(0.95, 0.1, kappa))
    th2 = 1 - (0.85 / 1.1) ** 2 / kappa + (p.omega2 / 0.9) ** 2 * kappa
    assert th2 > 1
    assert math.isclose(theta(p, kappa), math.sqrt(th2))
    assert abs(theta(p, kappa) - 1.007) < 1e-3
    with pytest.raises(ParameterError) as exc:
        validate_params(p, 2, kappa)
    assert exc.value.names == ["theta_not_contractive"]


def test_small_omega2_accepted():
    kappa = 10.0
    p = default_params(2, kappa, alpha=0.95, omega1=0.1)
    ms, ks = validate_params(p, 2, kappa)
    assert 0 < theta(p, kappa) < 1
    assert ms == math.ceil(abs(math.log(p.omega3 / math.sqrt(kappa)) / math.log(theta(p, kappa))))
    assert ks >= 1


def test_omega1_not_below_alpha():
    p = default_params(2, 5.0).replace(omega1=0.95, alpha=0.9)
    with pytest.raises(ParameterError) as exc:
        validate_params(p, 2, 5.0)
    assert "omega1_below_alpha" in exc.value.names


def test_omega4_ratio_d2():
    p = default_params(2, 5.0)
    p = p.replace(omega4=p.omega3)
    with pytest.raises(ParameterError) as exc:
        validate_params(p, 2, 5.0)
    assert exc.value.names == ["omega4_ratio"]


@pytest.mark.parametrize("d", [1, 2, 3, 4, 8, 16, 32])
def test_defaults_admissible(d):
    for kappa in (1.0, 8.0, 100.0):
        ms, ks = validate_params(default_params(d, kappa), d, kappa, omega0=0.2)
        assert ms >= 1 and ks >= 1


def test_omega3_bound_formula():
    s = math.sqrt(5)
    assert math.isclose(omega3_bound(4), 1 / (1 + s + 2 * (1 + s)))


def test_params_roundtrip():
    p = AwgmParams()
    assert AwgmParams(**p.to_dict()) == p


# -- residual --------------------------------------------------------------------


def _dense_op(basis, sets, P):
    w = index_weights(basis, sets)
    s = (np.exp(-np.multiply.outer(np.add.outer(w[0], w[1]), P.exponents)) @ P.weights).ravel()
    return to_sparse(laplacian(basis, 2), sets).toarray(), s


def test_residual_zero_iterate(basis):
    sets = [tuple(IndexSet1D.uniform(1))] * 2
    zone = [expand_security_zone(IndexSet1D(s), 1) for s in sets]
    delta = 0.1
    P = build_expsum(delta, T=window_T(basis, 2, zone[0].max_level))
    f = poisson_rhs(basis, 2)
    r, out = residual(P, laplacian(basis, 2), f, ht.zeros(sets), basis)
    assert [tuple(s) for s in out] == [tuple(z) for z in zone]
    c = rhs_one_coefficients(basis, tuple(zone[0]))
    dinv_f = exact_scaling(index_weights(basis, [tuple(z) for z in zone])) * np.outer(c, c)
    ratio = ht.norm(r) / np.linalg.norm(dinv_f)
    assert 1 - delta - P.eta <= ratio <= 1 + delta + P.eta


def test_residual_galerkin_solution(basis):
    s = tuple(IndexSet1D.uniform(1))
    sets = [s, s]
    P = build_expsum(0.1, T=window_T(basis, 2, 1))
    A, scal = _dense_op(basis, sets, P)
    c = rhs_one_coefficients(basis, s)
    fd = scal * np.outer(c, c).ravel()
    Ad = scal[:, None] * A * scal[None, :]
    w = np.linalg.solve(Ad, fd).reshape(len(s), len(s))
    u = ht.from_dense(w, sets)
    r, _ = residual(P, laplacian(basis, 2), poisson_rhs(basis, 2), u, basis, index_sets=sets)
    assert ht.norm(r) <= 1e-10 * np.linalg.norm(fd)


def test_residual_truncated_within_tol(basis, rng):
    s = tuple(IndexSet1D.uniform(1))
    u = ht.from_dense(rng.standard_normal((len(s),) * 2) * 1e-3, [s, s])
    A = laplacian(basis, 2)
    f = poisson_rhs(basis, 2)
    P = build_expsum(0.1, T=window_T(basis, 2, 2))
    exact, sets = residual(P, A, f, u, basis)
    tol = 1e-3 * ht.norm(exact)
    approx, _ = residual(P, A, f, u, basis, index_sets=sets, tol=tol)
    assert ht.norm(exact - approx) <= tol


# -- expand ------------------------------------------------------------------------


def test_expand_example():
    r = ht.from_dense(np.array([[0.0, 0.6], [0.8, 0.0]]))
    new = expand([(0,), (0,)], r, 0.7)
    assert [tuple(s) for s in new] == [(0, 1), (0,)]
    x = ht.densify(r)
    assert np.linalg.norm(x[np.ix_([0, 1], [0])]) >= 0.7 * np.linalg.norm(x)


def test_expand_small_alpha_keeps_sets():
    x = np.zeros((3, 3))
    x[0, 0], x[1, 2], x[2, 0] = 0.95, 0.2, 0.1
    new = expand([(0,), (0,)], ht.from_dense(x), 1e-3)
    assert [tuple(s) for s in new] == [(0,), (0,)]


def test_expand_bulk_random(rng):
    for _ in range(30):
        x = rng.standard_normal((5, 4, 3)) * np.exp(-rng.random((5, 4, 3)) * 4)
        r = ht.from_dense(x)
        alpha = rng.uniform(0.1, 0.99)
        new = expand([(0,), (0,), (0,)], r, alpha)
        sub = x[np.ix_(*[list(s) for s in new])]
        assert np.linalg.norm(sub) >= alpha * np.linalg.norm(x) * (1 - 1e-12)


def test_expand_keeps_tree(basis, rng):
    s = IndexSet1D.uniform(0)
    zone = expand_security_zone(expand_security_zone(s, 1), 1)
    r = ht.from_dense(rng.standard_normal((len(zone), len(zone))), [tuple(zone)] * 2)
    for alpha in (0.3, 0.8, 0.99):
        new = expand([s, s], r, alpha)
        assert all(IndexSet1D(n).is_tree() for n in new)
        assert all(set(s) <= set(n) for n in new)


def test_expand_rejects_alpha():
    with pytest.raises(ValueError):
        expand([(0,)], ht.from_dense(np.ones(2)), 1.0)


# -- driver --------------------------------------------------------------------------


def test_zero_rhs(basis):
    f = awgm.ProductRhs([lambda s: np.zeros(len(s))] * 2)
    u, log = ht_awgm(laplacian(basis, 2), f, basis, default_params(2, 10.0), spectrum=SPEC2)
    assert ht.norm(u) == 0 and len(log) == 1


@pytest.fixture(scope="module")
def run_d2(basis):
    kappa = SPEC2[1] / SPEC2[0] * awgm.SAFETY**2
    p = default_params(2, kappa, eps=1e-3)
    return p, ht_awgm(laplacian(basis, 2), poisson_rhs(basis, 2), basis, p, spectrum=SPEC2)


def test_d2_converges(run_d2):
    p, (u, log) = run_d2
    assert log[-1].residual <= p.eps
    assert log.meta["iterations"] <= log.meta["K_star"] * log.meta["M_star"]
    assert log.meta["lam_min"] == SPEC2[0] / awgm.SAFETY


def test_d2_outer_tolerances(run_d2):
    p, (_, log) = run_d2
    om0 = log.meta["omega0"]
    q = p.omega3 + p.omega4 + p.omega5
    for k, rec in enumerate(log.outer_boundaries()):
        assert math.isclose(rec.omega0_k, om0 * q ** (k + 1), rel_tol=1e-12)


def test_d2_monotone_support(run_d2):
    _, (_, log) = run_d2
    inner = [r for r in log if r.event == "inner"]
    for a, b in zip(inner, inner[1:]):
        if a.k == b.k:
            assert b.support >= a.support


def test_d2_solution_smooth(run_d2, basis):
    _, (u, log) = run_d2
    coef = awgm.solution_coefficients(u, basis, log.precond)
    c = rhs_one_coefficients(basis, coef.index_sets[0])
    # energy <u, f> of the Galerkin solution is positive and close to the known 1D-product bound
    energy = ht.inner_product(coef, ht.elementary([c, rhs_one_coefficients(basis, coef.index_sets[1])],
                                                  coef.index_sets))
    assert 0.03 < energy < 0.04


def test_records_serialise(run_d2):
    import json
    _, (_, log) = run_d2
    rows = [r.to_dict(include_time=False) for r in log]
    json.dumps(rows)
    assert all("wall_time" not in r for r in rows)


def test_budget_assertion(basis, monkeypatch):
    monkeypatch.setattr(awgm, "k_star", lambda *a: 0)
    p = default_params(2, 12.0, eps=1e-6)
    with pytest.raises(IterationBudgetError):
        ht_awgm(laplacian(basis, 2), poisson_rhs(basis, 2), basis, p, spectrum=SPEC2)


def test_max_outer(basis):
    p = default_params(2, 12.0, eps=1e-8, max_outer=1)
    with pytest.raises(ConvergenceError):
        ht_awgm(laplacian(basis, 2), poisson_rhs(basis, 2), basis, p, spectrum=SPEC2,
                check_budget=False)
