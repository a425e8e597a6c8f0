"""Adaptive wavelet Galerkin method in hierarchical Tucker format.

The driver works with the symmetrically preconditioned system
``A^δ w = f^δ`` where ``A^δ = S^-1 A S^-1`` and ``f^δ = S^-1 f``; the
Galerkin coefficients of the solution are ``S^-1 w``. Index sets are
products of tree-structured 1D sets that grow by bulk chasing on the
contractions of an approximate residual, and are pruned again by
re-truncation and re-coarsening once the residual has dropped by a fixed
factor.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from . import ht_core as ht
from .operator import SepOperator, apply, laplacian, to_sparse
from .preconditioner import (ExpSumPrecond, apply_weighted, build_expsum, check_window,
                             dense_scaling, index_weights)
from .solver import TruncStrategy, estimate_spectrum, truncated_pcg
from .wavelet_basis import (Basis1D, IndexSet1D, WaveletIndex, expand_security_zone,
                            parent, rhs_one_coefficients)

#: Safety factor applied to power-iteration spectral estimates.
SAFETY = 1.2


class ParameterError(ValueError):
    """Violated parameter constraints, each reported by name."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in self.violations))

    @property
    def names(self) -> list:
        return [name for name, _ in self.violations]


class ConvergenceError(RuntimeError):
    """The outer iteration cap was reached before the target residual."""


class IterationBudgetError(AssertionError):
    """More inner iterations than the ``K* M*`` bound allows."""


@dataclass(frozen=True)
class AwgmParams:
    """Parameters of the adaptive solver.

    Attributes
    ----------
    eps : float
        Target for ``(1 + omega1) ||r||``.
    delta : float
        Relative accuracy of the preconditioner on its window.
    alpha : float
        Bulk parameter of the index-set expansion.
    omega0 : float, optional
        Upper bound for ``||f^δ||``; ``1.1 ||S^-1 f||`` when omitted.
    omega1 : float
        Relative accuracy of the residual evaluation.
    omega2 : float
        Galerkin solve tolerance relative to the last residual.
    omega3 : float
        Residual reduction that triggers re-truncation and re-coarsening.
    omega4, omega5 : float
        Re-truncation and re-coarsening tolerances.
    M : int, optional
        Inner iteration cap; ``M*`` when omitted.
    max_outer : int
        Safety cap on outer iterations.
    width : int
        Security-zone width of the residual index sets.
    c_ad : float
        Adaptive truncation factor of the Galerkin solver.
    max_pcg : int
        Iteration cap of each Galerkin solve.
    precond_factor : float
        Truncation tolerance inside operator applications relative to the
        tolerance of the surrounding step.
    """

    eps: float = 1e-4
    delta: float = 0.1
    alpha: float = 0.9
    omega1: float = 0.2
    omega2: float = 0.01
    omega3: float = 0.1
    omega4: float = 0.12
    omega5: float = 0.35
    omega0: float = None
    M: int = None
    max_outer: int = 60
    width: int = 1
    c_ad: float = 0.1
    max_pcg: int = 50
    precond_factor: float = 0.1

    def replace(self, **changes) -> "AwgmParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- parameter constraints ---------------------------------------------------


def _s(d):
    return math.sqrt(max(2 * d - 3, 0))


def omega2_bound(alpha: float, omega1: float, kappa: float) -> float:
    """Upper bound ``(1 - omega1)(alpha + omega1) / ((1 + omega1) kappa)``."""
    return (1.0 - omega1) * (alpha + omega1) / ((1.0 + omega1) * kappa)


def omega3_bound(d: int) -> float:
    """``1 / (1 + sqrt(2d-3) + sqrt(d)(1 + sqrt(2d-3)))``."""
    s = _s(d)
    return 1.0 / (1.0 + s + math.sqrt(d) * (1.0 + s))


def theta(p: AwgmParams, kappa: float) -> float:
    """Energy-error reduction factor of one inner iteration."""
    val = (1.0 - ((p.alpha - p.omega1) / (1.0 + p.omega1)) ** 2 / kappa
           + (p.omega2 / (1.0 - p.omega1)) ** 2 * kappa)
    return math.sqrt(val) if val > 0 else 0.0


def m_star(p: AwgmParams, kappa: float) -> int:
    th = theta(p, kappa)
    return math.ceil(abs(math.log(p.omega3 / math.sqrt(kappa)) / math.log(th)))


def k_star(p: AwgmParams, kappa: float, omega0: float) -> int:
    arg = (1.0 - p.omega1) / (p.eps * kappa * p.omega3 * omega0 * (1.0 + p.omega1))
    return math.ceil(abs(math.log(arg) / math.log(p.omega3 + p.omega4 + p.omega5)))


def default_params(d: int, kappa: float, **overrides) -> AwgmParams:
    """Parameters strictly inside the admissible region for dimension ``d``."""
    base = {"alpha": 0.9, "omega1": 0.2}
    base.update({k: v for k, v in overrides.items() if k in ("alpha", "omega1")})
    om3 = 0.5 * omega3_bound(d)
    s = _s(d)
    values = dict(
        eps=1e-4, delta=0.1, alpha=base["alpha"], omega1=base["omega1"],
        omega2=0.5 * omega2_bound(base["alpha"], base["omega1"], kappa),
        omega3=om3, omega4=max(1.1 * s, 0.5) * om3, omega5=1.1 * math.sqrt(d) * (1.0 + s) * om3,
    )
    values.update(overrides)
    return AwgmParams(**values)


def validate_params(p: AwgmParams, d: int, kappa: float, omega0: float = None):
    """Check every parameter constraint.

    Parameters
    ----------
    p : AwgmParams
    d : int
        Spatial dimension.
    kappa : float
        Estimate of the condition number of the preconditioned operator.
    omega0 : float, optional
        Right-hand side bound for ``K*``; defaults to ``p.omega0`` or 1.

    Returns
    -------
    M_star, K_star : int

    Raises
    ------
    ParameterError
        Listing every violated constraint by name.
    """
    bad = []

    def need(ok, name, msg):
        if not ok:
            bad.append((name, msg))
        return ok

    need(isinstance(d, (int, np.integer)) and d >= 1, "d_range", f"d={d} must be >= 1")
    need(kappa >= 1 and math.isfinite(kappa), "kappa_range", f"kappa={kappa} must be >= 1")
    need(p.eps > 0, "eps_positive", f"eps={p.eps}")
    need(0 < p.delta < 1, "delta_range", f"delta={p.delta} not in (0, 1)")
    need(0 < p.alpha < 1, "alpha_range", f"alpha={p.alpha} not in (0, 1)")
    omegas = [p.omega1, p.omega2, p.omega3, p.omega4, p.omega5]
    positive = all(need(w > 0, f"omega{i}_positive", f"omega{i}={w} must be positive")
                   for i, w in enumerate(omegas, start=1))
    if p.omega0 is not None:
        need(p.omega0 > 0, "omega0_positive", f"omega0={p.omega0} must be positive")
    need(p.omega1 < p.alpha, "omega1_below_alpha",
         f"omega1={p.omega1} must be smaller than alpha={p.alpha}")
    need(p.omega1 < 1, "omega1_range", f"omega1={p.omega1} must be < 1")
    if bad and kappa < 1:
        raise ParameterError(bad)
    bound2 = omega2_bound(p.alpha, p.omega1, kappa)
    need(p.omega2 < bound2, "omega2_bound",
         f"omega2={p.omega2:.4g} must be < {bound2:.4g} for kappa={kappa:.4g}")
    th = theta(p, kappa)
    need(0 < th < 1, "theta_not_contractive",
         f"reduction factor theta={th:.6g} must lie in (0, 1)")
    total = p.omega3 + p.omega4 + p.omega5
    need(total < 1, "omega345_sum", f"omega3+omega4+omega5={total:.4g} must be < 1")
    s = _s(d)
    need(p.omega4 > s * p.omega3, "omega4_ratio",
         f"omega4={p.omega4:.4g} must exceed sqrt(2d-3)*omega3={s * p.omega3:.4g}")
    lim5 = math.sqrt(d) * (1.0 + s) * p.omega3
    need(p.omega5 > lim5, "omega5_ratio",
         f"omega5={p.omega5:.4g} must exceed sqrt(d)(1+sqrt(2d-3))*omega3={lim5:.4g}")
    b3 = omega3_bound(d)
    need(p.omega3 < b3, "omega3_bound", f"omega3={p.omega3:.4g} must be < {b3:.4g}")
    need(p.max_outer >= 1, "max_outer_range", f"max_outer={p.max_outer}")
    need(p.width >= 0, "width_range", f"width={p.width}")
    need(0 < p.c_ad < 1, "c_ad_range", f"c_ad={p.c_ad} not in (0, 1)")
    need(p.max_pcg >= 1, "max_pcg_range", f"max_pcg={p.max_pcg}")
    need(0 < p.precond_factor <= 1, "precond_factor_range",
         f"precond_factor={p.precond_factor} not in (0, 1]")
    if bad or not positive:
        raise ParameterError(bad)
    ms = m_star(p, kappa)
    if p.M is not None:
        need(p.M >= ms, "M_below_M_star", f"M={p.M} must be >= M*={ms}")
    if bad:
        raise ParameterError(bad)
    om0 = omega0 if omega0 is not None else (p.omega0 if p.omega0 is not None else 1.0)
    return ms, k_star(p, kappa, om0)


# -- right-hand sides and windows --------------------------------------------


class ProductRhs:
    """Rank-one right-hand side ``f = g_1 ⊗ ... ⊗ g_d``.

    Parameters
    ----------
    factors : sequence of callable
        ``factors[j](index_set)`` returns the coefficients of ``g_j``.
    """

    def __init__(self, factors, tree=None):
        self.factors = list(factors)
        self.tree = tree if tree is not None else ht.build_dim_tree(len(self.factors))

    @property
    def d(self) -> int:
        return len(self.factors)

    def __call__(self, index_sets) -> ht.HTTensor:
        vecs = [np.asarray(g(tuple(s)), dtype=float) for g, s in zip(self.factors, index_sets)]
        return ht.elementary(vecs, index_sets, self.tree)


def poisson_rhs(basis: Basis1D, d: int) -> ProductRhs:
    """Coefficients of ``f = 1`` on ``(0, 1)^d``."""
    return ProductRhs([lambda s: rhs_one_coefficients(basis, s)] * d)


def _rhs_source(f):
    if isinstance(f, ht.HTTensor):
        return lambda sets: ht.reindex(f, sets)
    if callable(f):
        return f
    raise TypeError("right-hand side must be an HTTensor or a callable on index sets")


class _Window:
    """Largest squared H^1 norm per maximal level, cached."""

    def __init__(self, basis):
        self.basis = basis
        self._max = {}

    def max_weight(self, level: int) -> float:
        if level not in self._max:
            self._max[level] = float(self.basis.h1_weights(tuple(IndexSet1D.uniform(level))).max())
        return self._max[level]

    def T(self, d: int, level: int) -> float:
        return 1.1 * d * self.max_weight(level)


def window_T(basis: Basis1D, d: int, max_level: int) -> float:
    """Validity window ``T = 1.1 d max ||psi||_{H^1}^2`` up to ``max_level``."""
    return _Window(basis).T(d, max_level)


def res_eta(tol: float, delta: float, f_norm: float, a_norm: float, v_norm: float,
            C_f: float = 1.0) -> float:
    """Tail accuracy making the preconditioner error of a residual at most ``tol``."""
    denom = 3.0 * (C_f * f_norm + 2.0 * a_norm * v_norm)
    eta = (1.0 - delta) / 2.0
    if denom > 0:
        eta = min(eta, tol * (1.0 - delta) / denom)
    return eta


def _max_level(sets) -> int:
    return max((IndexSet1D(s).max_level for s in sets), default=-1)


# -- residual and expansion --------------------------------------------------


def residual(P: ExpSumPrecond, A: SepOperator, f, u: ht.HTTensor, basis: Basis1D,
             index_sets=None, width: int = 1, tol: float = 0.0, amplification: float = None):
    """Approximate residual ``S^-1 (f - A S^-1 u)`` on an enlarged index set.

    Parameters
    ----------
    P : ExpSumPrecond
    A : SepOperator
    f : HTTensor or callable
        Right-hand side, or a map from index sets to its coefficients.
    u : HTTensor
        Current iterate in preconditioned coordinates.
    basis : Basis1D
    index_sets : sequence, optional
        Target sets; the security zones of ``u``'s sets by default.
    width : int
        Security-zone width.
    tol : float
        Absolute budget for the three internal truncations; 0 keeps all
        ranks exact.
    amplification : float, optional
        Bound for ``||S^-1 A e||/||e||`` used to size the truncation of
        ``S^-1 u``; estimated from the window when omitted.

    Returns
    -------
    r : HTTensor
    index_sets : list of IndexSet1D
    """
    if index_sets is None:
        index_sets = [expand_security_zone(IndexSet1D(s), width) for s in u.index_sets]
    sets_t = [tuple(s) for s in index_sets]
    source = _rhs_source(f)
    w_u = index_weights(basis, u.index_sets)
    tmax = check_window(P, w_u)
    w_t = index_weights(basis, sets_t)
    check_window(P, w_t)
    if amplification is None:
        amplification = (1.0 + P.delta) * max(1.0, math.sqrt(tmax)) * 2.0 * u.d
    part = tol / 3.0
    v = apply_weighted(P, w_u, u, abs_tol=part / amplification if tol > 0 else None)
    g = source(sets_t) - apply(A, v, out=sets_t)
    if tol > 0:
        g = ht.truncate(g, part)
    r = apply_weighted(P, w_t, g, abs_tol=part if tol > 0 else None)
    return r, [IndexSet1D(s) for s in sets_t]


def _is_wavelet(lab) -> bool:
    return isinstance(lab, WaveletIndex)


def expand(index_sets, r: ht.HTTensor, alpha: float):
    """Bulk chasing on the contractions of ``r``.

    Grows every ``index_sets[j]`` inside ``r.index_sets[j]`` by largest
    contraction values (with their tree ancestors) until the discarded
    contraction mass is at most ``sqrt(1 - alpha^2) ||r||``, which implies
    ``||R r|| >= alpha ||r||`` on the returned product set.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if len(index_sets) != r.d:
        raise ValueError("need one index set per dimension")
    pis = ht.contractions(r)
    values = [dict(zip(r.index_sets[j], pis[j].values)) for j in range(r.d)]
    current = []
    for j, s in enumerate(index_sets):
        s = tuple(s)
        missing = [lab for lab in s if lab not in values[j]]
        if missing:
            raise ValueError(f"index set {j} is not contained in the residual's support")
        current.append(set(s))
    r2 = float(np.sum(pis[0].values ** 2)) if r.d else 0.0
    bound2 = (1.0 - alpha**2) * r2
    cand = [(val, j, i, lab) for j in range(r.d)
            for i, (lab, val) in enumerate(zip(r.index_sets[j], pis[j].values))
            if lab not in current[j]]
    tail2 = float(sum(c[0] ** 2 for c in cand))
    cand.sort(key=lambda c: (-c[0], c[1], c[2]))
    for val, j, _, lab in cand:
        if tail2 <= bound2 * (1 + 1e-12):
            break
        if lab in current[j]:
            continue
        chain = [lab]
        if _is_wavelet(lab):
            p = parent(lab)
            while p is not None and p not in current[j]:
                chain.append(p)
                p = parent(p)
        for c in chain:
            current[j].add(c)
            tail2 -= values[j].get(c, 0.0) ** 2
    out = []
    for j, s in enumerate(index_sets):
        s = tuple(s)
        new = [lab for lab in r.index_sets[j] if lab in current[j] and lab not in set(s)]
        extra = [lab for lab in current[j] if lab not in values[j]]
        labels = list(s) + new + extra
        out.append(IndexSet1D(labels).closure() if labels and all(map(_is_wavelet, labels))
                   else tuple(labels))
    return out


# -- telemetry -----------------------------------------------------------------


@dataclass
class ConvergenceRecord:
    """One row of the convergence log."""

    k: int
    m: int
    residual: float
    max_rank: int
    support: int
    max_level: int
    pcg_iterations: int
    event: str = "inner"
    omega0_k: float = None
    ranks: tuple = ()
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = True) -> dict:
        row = dataclasses.asdict(self)
        row["ranks"] = list(self.ranks)
        if not include_time:
            row.pop("wall_time")
        return row


class AwgmLog(list):
    """Convergence records plus run metadata in ``meta``."""

    def __init__(self, records=(), meta=None):
        super().__init__(records)
        self.meta = dict(meta or {})
        self.precond = None

    def outer_boundaries(self) -> list:
        return [rec for rec in self if rec.event == "outer"]


# -- spectral estimates ----------------------------------------------------------


def reference_spectrum(basis: Basis1D, d: int, delta: float = 0.1, steps: int = 20,
                       max_dofs: int = 30000, seed: int = 42):
    """Power-iteration estimates of the extreme eigenvalues of ``S^-1 A S^-1``.

    The operator is assembled on a uniform product set in ``min(d, 3)``
    dimensions with as many levels as ``max_dofs`` allows.

    Returns
    -------
    lam_min, lam_max : float
        Raw estimates, without safety factors.
    """
    d_ref = min(d, 3)
    level = -1
    while len(IndexSet1D.uniform(level + 1)) ** d_ref <= max_dofs:
        level += 1
    sets = [tuple(IndexSet1D.uniform(level))] * d_ref
    P = build_expsum(delta, T=window_T(basis, d_ref, level))
    scale = dense_scaling(P, index_weights(basis, sets)).ravel()
    lap = to_sparse(laplacian(basis, d_ref), sets)
    mat = lap.multiply(scale[:, None]).multiply(scale[None, :]).tocsr()
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(mat.shape[0])
    return estimate_spectrum(lambda x: mat @ x, x0, steps=steps)


# -- driver ------------------------------------------------------------------------


class _Scaling:
    """Current preconditioner; rebuilt when the window grows or ``eta`` shrinks."""

    def __init__(self, basis, d, delta):
        self.window = _Window(basis)
        self.basis, self.d, self.delta = basis, d, delta
        self.P = None
        self.builds = 0

    def get(self, level: int, eta: float = None) -> ExpSumPrecond:
        T = self.window.T(self.d, max(level, 0))
        eta = self.delta / 10.0 if eta is None else min(eta, self.delta / 10.0)
        P = self.P
        if P is None or T > P.T or eta < P.eta:
            T = T if P is None else max(T, P.T)
            eta = eta if P is None else min(eta, P.eta)
            self.P = build_expsum(self.delta, eta=eta, T=T)
            self.builds += 1
        return self.P


def _tree_sets(u: ht.HTTensor):
    roots = IndexSet1D.roots()
    return [roots.union(IndexSet1D(s)).closure() for s in u.index_sets]


def _support(sets) -> int:
    return int(sum(len(s) for s in sets))


def ht_awgm(A: SepOperator, f, basis: Basis1D, p: AwgmParams, *, spectrum=None,
            initial_sets=None, callback=None, check_budget: bool = True):
    """Adaptive Galerkin solve of ``A u = f``.

    Parameters
    ----------
    A : SepOperator
    f : HTTensor or callable
        Right-hand side or a map from index sets to its coefficients.
    basis : Basis1D
    p : AwgmParams
    spectrum : (float, float), optional
        Raw estimates of the extreme eigenvalues of the preconditioned
        operator; computed by :func:`reference_spectrum` when omitted.
    initial_sets : sequence, optional
        Starting index sets; scaling functions only by default.
    callback : callable, optional
        Called with every new :class:`ConvergenceRecord`.
    check_budget : bool
        Raise :class:`IterationBudgetError` after more than ``K* M*``
        inner iterations.

    Returns
    -------
    u : HTTensor
        Iterate in preconditioned coordinates; ``log.precond`` maps it to
        Galerkin coefficients via :func:`solution_coefficients`.
    log : AwgmLog
    """
    d = A.d
    t_start = time.perf_counter()
    source = _rhs_source(f)
    if spectrum is None:
        spectrum = reference_spectrum(basis, d, p.delta)
    lam_min = spectrum[0] / SAFETY
    lam_max = spectrum[1] * SAFETY
    kappa = lam_max / lam_min
    scaling = _Scaling(basis, d, p.delta)

    # omega0 from a high-resolution evaluation of ||S^-1 f||
    f_sets = [IndexSet1D.uniform(8)] * d
    f_fine = source(f_sets)
    P0 = build_expsum(p.delta, T=window_T(basis, d, 8))
    f_norm = ht.norm(apply_weighted(P0, index_weights(basis, f_fine.index_sets), f_fine))
    omega0 = p.omega0 if p.omega0 is not None else 1.1 * f_norm
    log = AwgmLog(meta={"d": d, "lam_min": lam_min, "lam_max": lam_max, "kappa": kappa,
                        "lam_min_raw": spectrum[0], "lam_max_raw": spectrum[1],
                        "f_delta_norm": f_norm, "omega0": omega0, "params": p.to_dict()})

    sets = list(initial_sets) if initial_sets is not None else [IndexSet1D.roots()] * d
    sets = [IndexSet1D(s).closure() for s in sets]
    u = ht.zeros([tuple(s) for s in sets], ht.build_dim_tree(d))
    if omega0 == 0:
        log.append(ConvergenceRecord(0, 0, 0.0, 0, _support(sets), _max_level(sets), 0,
                                     wall_time=time.perf_counter() - t_start))
        log.precond = scaling.get(_max_level(sets))
        return u, log

    ms, ks = validate_params(p, d, kappa, omega0)
    M = p.M if p.M is not None else ms
    log.meta.update({"M_star": ms, "K_star": ks, "M": M})

    def record(rec):
        rec.wall_time = time.perf_counter() - t_start
        log.append(rec)
        if callback is not None:
            callback(rec)

    def matvec_tol(tol):
        return p.precond_factor * tol

    def solve(u, sets, tol):
        labels = [tuple(s) for s in sets]
        P = scaling.get(_max_level(sets))
        weights = index_weights(basis, labels)
        tmax = check_window(P, weights)
        amp = (1.0 + P.delta) * max(1.0, math.sqrt(tmax)) * 2.0 * d
        inner = matvec_tol(tol) / 3.0
        f_d = apply_weighted(P, weights, source(labels), abs_tol=inner)

        def a_apply(x):
            v = apply_weighted(P, weights, x, abs_tol=inner / amp)
            return apply_weighted(P, weights, apply(A, v), abs_tol=inner)

        strategy = TruncStrategy("adaptive", p.c_ad, lam_min, lam_max)
        return truncated_pcg(a_apply, f_d, ht.reindex(u, labels), tol=tol, strategy=strategy,
                             max_iter=p.max_pcg)

    def res(u, sets, r_prev):
        sets_t = [expand_security_zone(s, p.width) for s in sets]
        level = _max_level(sets_t)
        tol = p.omega1 * r_prev
        for _ in range(4):
            eta = res_eta(tol, p.delta, f_norm, lam_max, ht.norm(u))
            P = scaling.get(level, eta)
            r, sets_t = residual(P, A, source, u, basis, sets_t, tol=tol)
            r_norm = ht.norm(r)
            if tol <= p.omega1 * r_norm * (1 + 1e-12) or r_norm == 0:
                break
            tol = p.omega1 * r_norm
        return r, sets_t, r_norm

    r_norm = omega0
    om0_k = omega0
    total = 0
    for k in range(p.max_outer):
        for m in range(M + 1):
            u, stats = solve(u, sets, p.omega2 * r_norm)
            r, sets_t, r_norm = res(u, sets, r_norm)
            total += 1
            record(ConvergenceRecord(k, m, (1 + p.omega1) * r_norm, u.max_rank, _support(sets),
                                     _max_level(sets), stats.iterations, "inner", om0_k,
                                     tuple(u.ranks)))
            if (1 + p.omega1) * r_norm <= p.eps:
                log.precond = scaling.P
                log.meta["iterations"] = total
                return u, log
            if check_budget and total > ks * ms:
                raise IterationBudgetError(
                    f"{total} inner iterations exceed K*M* = {ks}*{ms}")
            if (1 + p.omega1) * r_norm <= p.omega3 * om0_k or m == M:
                u = ht.truncate(u, p.omega4 * om0_k / lam_min)
                u = ht.coarsen(u, p.omega5 * om0_k / lam_min)
                sets = _tree_sets(u)
                if not all(s.is_tree() for s in sets):
                    raise AssertionError("coarsened index sets lost the tree property")
                u = ht.reindex(u, [tuple(s) for s in sets])
                r, _, r_norm = res(u, sets, r_norm)
                om0_k *= p.omega3 + p.omega4 + p.omega5
                record(ConvergenceRecord(k, m, (1 + p.omega1) * r_norm, u.max_rank,
                                         _support(sets), _max_level(sets), 0, "outer", om0_k,
                                         tuple(u.ranks)))
                break
            new_sets = expand(sets, r, p.alpha)
            if not all(s.is_tree() for s in new_sets):
                raise AssertionError("expanded index sets lost the tree property")
            sets = new_sets
    raise ConvergenceError(f"no convergence within {p.max_outer} outer iterations; "
                           f"last residual {(1 + p.omega1) * r_norm:.3e}")


def solution_coefficients(u: ht.HTTensor, basis: Basis1D, P: ExpSumPrecond,
                          tol: float = 0.0) -> ht.HTTensor:
    """Galerkin coefficients ``S^-1 u`` of a preconditioned iterate."""
    return apply_weighted(P, index_weights(basis, u.index_sets), u,
                          abs_tol=tol if tol > 0 else None)
