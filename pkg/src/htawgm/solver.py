"""Rank-truncated descent solvers for symmetric positive definite systems.

The solvers work on HT tensors and, for testing, on plain numpy vectors.
Truncation happens after the iterate update and after the direction update;
tolerances follow a :class:`TruncStrategy`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ht_core as ht


class NotSPDError(ArithmeticError):
    """``<d, A d> <= 0`` for a nonzero direction."""


# -- vector-space helpers ----------------------------------------------------


def _inner(x, y):
    if isinstance(x, ht.HTTensor):
        return ht.inner_product(x, y)
    return float(np.vdot(x, y))


def _norm(x):
    if isinstance(x, ht.HTTensor):
        return ht.norm(x)
    return float(np.linalg.norm(x))


def _truncate(x, tol):
    if isinstance(x, ht.HTTensor):
        return ht.truncate(x, tol)
    return x


def _max_rank(x):
    return x.max_rank if isinstance(x, ht.HTTensor) else 1


def _finite(v, what):
    if not math.isfinite(v):
        raise FloatingPointError(f"non-finite {what}")
    return v


# -- strategy -----------------------------------------------------------------


@dataclass
class TruncStrategy:
    """Truncation tolerances for the iterate (``eps2``) and direction (``eps1``).

    Parameters
    ----------
    mode : {"adaptive", "worst_case", "none"}
        ``adaptive`` truncates the iterate update to ``c_ad * alpha_k ||d_k||``;
        ``worst_case`` uses ``theta mu / lambda_max * ||r_k||``; ``none``
        disables truncation. Directions always use the angle-preserving
        bound ``min{delta1/2, delta2 ||r|| / (2 |beta| ||d_prev||)} ||r||``.
    c_ad : float
        Adaptive factor in (0, 1).
    lam_min, lam_max : float, optional
        Spectral bounds; estimated by power iteration when missing.
    mu_frac : float
        ``mu`` as a fraction of its upper bound ``1/theta - 1``.
    """

    mode: str = "adaptive"
    c_ad: float = 0.1
    lam_min: float = None
    lam_max: float = None
    mu_frac: float = 0.5

    def __post_init__(self):
        if self.mode not in ("adaptive", "worst_case", "none"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if not 0 < self.c_ad < 1:
            raise ValueError("c_ad must lie in (0, 1)")
        if not 0 < self.mu_frac < 1:
            raise ValueError("mu_frac must lie in (0, 1)")

    @property
    def has_spectrum(self) -> bool:
        return self.lam_min is not None and self.lam_max is not None

    def with_spectrum(self, lam_min, lam_max) -> "TruncStrategy":
        return TruncStrategy(self.mode, self.c_ad, lam_min, lam_max, self.mu_frac)

    @property
    def kappa(self) -> float:
        return max(self.lam_max / self.lam_min, 1.0)

    @property
    def tau(self) -> float:
        return 0.5 / math.sqrt(1.0 + self.kappa**2)

    @property
    def delta1(self) -> float:
        return 1.0

    @property
    def delta2(self) -> float:
        return 2.0 * (1.0 + self.kappa**2)

    @property
    def gamma(self) -> float:
        return (1.0 - self.delta1 / 2.0) * self.tau

    @property
    def theta(self) -> float:
        return math.sqrt(1.0 - self.gamma**2 / (2.0 * self.kappa))

    @property
    def mu(self) -> float:
        return self.mu_frac * (1.0 / self.theta - 1.0)

    @property
    def rho(self) -> float:
        """Guaranteed energy-error contraction ``theta (1 + mu)`` per step."""
        return self.theta * (1.0 + self.mu)

    def feasible(self) -> bool:
        """The angle lemma's conditions on ``tau, delta1, delta2, gamma``."""
        k2 = 1.0 + self.kappa**2
        return (0 < self.tau < 1.0 / math.sqrt(k2)
                and 1.5 * self.delta1 + self.delta2 <= 1.0 / self.tau**2 - k2
                and (1.0 - self.delta1 / 2.0) * self.tau >= self.gamma > 0
                and 0 < self.mu < 1.0 / self.theta - 1.0)

    def direction_tol(self, r_norm, beta, d_prev_norm) -> float:
        if self.mode == "none":
            return 0.0
        bound = self.delta1 / 2.0
        if beta != 0 and d_prev_norm > 0:
            bound = min(bound, self.delta2 * r_norm / (2.0 * abs(beta) * d_prev_norm))
        return bound * r_norm

    def iterate_tol(self, r_norm, alpha, d_norm) -> float:
        if self.mode == "none":
            return 0.0
        if self.mode == "adaptive":
            return self.c_ad * abs(alpha) * d_norm
        return self.theta * self.mu / self.lam_max * r_norm


@dataclass
class PcgStats:
    """Per-iteration telemetry of a truncated descent run."""

    iterations: int = 0
    residuals: list = field(default_factory=list)
    ranks: list = field(default_factory=list)
    tol_x: list = field(default_factory=list)
    tol_d: list = field(default_factory=list)
    angles: list = field(default_factory=list)
    r_over_d: list = field(default_factory=list)
    conjugacy: list = field(default_factory=list)
    converged: bool = False
    lam_min: float = None
    lam_max: float = None

    def rows(self) -> list:
        """One JSON-ready dict per iteration."""
        out = []
        for k, res in enumerate(self.residuals):
            out.append({
                "k": k,
                "residual": res,
                "max_rank": self.ranks[k] if k < len(self.ranks) else None,
                "tol_x": self.tol_x[k] if k < len(self.tol_x) else None,
                "tol_d": self.tol_d[k] if k < len(self.tol_d) else None,
            })
        return out


def check_descent_angle(r, d, gamma: float, inner=_inner, norm=_norm) -> bool:
    """Whether ``<r, d> >= gamma ||r|| ||d||``."""
    return inner(r, d) >= gamma * norm(r) * norm(d)


def estimate_spectrum(A_apply, x0, steps: int = 20, inner=_inner, norm=_norm,
                      truncate=_truncate, rel_trunc: float = 1e-3):
    """Extreme eigenvalues by power iteration on ``A`` and ``lambda_max I - A``.

    Returns
    -------
    lam_min, lam_max : float
    """
    x = x0 / norm(x0)
    lam_max = 0.0
    for _ in range(steps):
        y = A_apply(x)
        lam_max = max(lam_max, inner(x, y))
        ny = norm(y)
        if ny == 0:
            break
        x = truncate(y / ny, rel_trunc)
    x = x0 / norm(x0)
    shift = 0.0
    for _ in range(steps):
        y = lam_max * x - A_apply(x)
        shift = max(shift, inner(x, y))
        ny = norm(y)
        if ny == 0:
            break
        x = truncate(y / ny, rel_trunc)
    lam_min = lam_max - shift
    if lam_min <= 0:
        lam_min = lam_max * 1e-12
    return lam_min, lam_max


def _prepare(f, u0, index_sets):
    if index_sets is not None and isinstance(f, ht.HTTensor):
        f = ht.reindex(f, index_sets)
        u0 = ht.reindex(u0, index_sets)
    return f, u0


def _resolve(strategy, A_apply, f, inner, norm, truncate):
    strategy = TruncStrategy() if strategy is None else strategy
    if strategy.mode != "none" and not strategy.has_spectrum:
        lo, hi = estimate_spectrum(A_apply, f, inner=inner, norm=norm, truncate=truncate)
        strategy = strategy.with_spectrum(lo, hi)
    return strategy


def truncated_pcg(A_apply, f, u0, index_sets=None, tol: float = 1e-8, strategy=None,
                  max_iter: int = 100, *, truncate=None, inner=None, norm=None,
                  debug: bool = False, callback=None):
    """Conjugate gradients with rank truncation after each vector update.

    Parameters
    ----------
    A_apply : callable
        SPD operator ``x -> A x`` on the active index set.
    f, u0 : HTTensor or ndarray
        Right-hand side and initial guess.
    index_sets : sequence, optional
        Active product set; ``f`` and ``u0`` are restricted to it.
    tol : float
        Stop once ``||f - A u|| <= tol``.
    strategy : TruncStrategy, optional
        Defaults to the adaptive strategy with ``c_ad = 0.1``.
    max_iter : int
    truncate : callable, optional
        ``(x, tol) -> y`` with ``||x - y|| <= tol``; HOSVD truncation by default.
    inner, norm : callable, optional
    debug : bool
        Assert the descent-angle bound in every iteration.
    callback : callable, optional
        Called as ``callback(k, x, r, d)`` after each direction update.

    Returns
    -------
    u : HTTensor or ndarray
    stats : PcgStats
    """
    inner = inner or _inner
    norm = norm or _norm
    truncate = truncate or _truncate
    if not tol > 0:
        raise ValueError("tol must be positive")
    f, x = _prepare(f, u0, index_sets)
    strategy = _resolve(strategy, A_apply, f, inner, norm, truncate)
    stats = PcgStats(lam_min=strategy.lam_min, lam_max=strategy.lam_max)

    r = f - A_apply(x)
    r_norm = _finite(norm(r), "residual")
    stats.residuals.append(r_norm)
    stats.ranks.append(_max_rank(x))
    if r_norm <= tol:
        stats.converged = True
        return x, stats
    tol_d = strategy.direction_tol(r_norm, 0.0, 0.0)
    d = truncate(r, tol_d)
    stats.tol_d.append(tol_d)

    for k in range(max_iter):
        d_norm = norm(d)
        rd = inner(r, d)
        stats.angles.append(rd / (r_norm * d_norm) if d_norm > 0 else 1.0)
        stats.r_over_d.append(r_norm / d_norm if d_norm > 0 else math.inf)
        if debug and not rd >= strategy.gamma * r_norm * d_norm * (1 - 1e-12):
            raise AssertionError(f"descent angle violated at iteration {k}")
        Ad = A_apply(d)
        dAd = _finite(inner(d, Ad), "curvature")
        if dAd <= 0:
            raise NotSPDError(f"<d, A d> = {dAd:.3e} <= 0 at iteration {k}")
        alpha = rd / dAd
        tol_x = strategy.iterate_tol(r_norm, alpha, d_norm)
        x = truncate(x + alpha * d, tol_x)
        stats.tol_x.append(tol_x)

        r_new = f - A_apply(x)
        r_new_norm = _finite(norm(r_new), "residual")
        stats.iterations = k + 1
        stats.residuals.append(r_new_norm)
        stats.ranks.append(_max_rank(x))
        if r_new_norm <= tol:
            stats.converged = True
            break
        beta = -inner(r_new, Ad) / dAd
        tol_d = strategy.direction_tol(r_new_norm, beta, d_norm)
        d_new = truncate(r_new + beta * d, tol_d)
        stats.tol_d.append(tol_d)
        stats.conjugacy.append(inner(d_new, Ad))
        r, r_norm, d = r_new, r_new_norm, d_new
        if callback is not None:
            callback(k, x, r, d)
    return x, stats


def truncated_gradient_descent(A_apply, f, u0, index_sets=None, tol: float = 1e-8,
                               strategy=None, max_iter: int = 100, *, truncate=None,
                               inner=None, norm=None, callback=None):
    """Steepest descent with exact line search and truncated updates.

    Same interface as :func:`truncated_pcg`. The direction is the truncated
    residual; the step minimizes the energy along it.
    """
    inner = inner or _inner
    norm = norm or _norm
    truncate = truncate or _truncate
    if not tol > 0:
        raise ValueError("tol must be positive")
    f, x = _prepare(f, u0, index_sets)
    strategy = _resolve(strategy, A_apply, f, inner, norm, truncate)
    stats = PcgStats(lam_min=strategy.lam_min, lam_max=strategy.lam_max)
    r = f - A_apply(x)
    r_norm = _finite(norm(r), "residual")
    stats.residuals.append(r_norm)
    stats.ranks.append(_max_rank(x))
    for k in range(max_iter):
        if r_norm <= tol:
            stats.converged = True
            break
        tol_d = strategy.direction_tol(r_norm, 0.0, 0.0)
        d = truncate(r, tol_d)
        stats.tol_d.append(tol_d)
        Ad = A_apply(d)
        dAd = _finite(inner(d, Ad), "curvature")
        if dAd <= 0:
            raise NotSPDError(f"<d, A d> = {dAd:.3e} <= 0 at iteration {k}")
        alpha = inner(r, d) / dAd
        tol_x = strategy.iterate_tol(r_norm, alpha, norm(d))
        x = truncate(x + alpha * d, tol_x)
        stats.tol_x.append(tol_x)
        r = f - A_apply(x)
        r_norm = _finite(norm(r), "residual")
        stats.iterations = k + 1
        stats.residuals.append(r_norm)
        stats.ranks.append(_max_rank(x))
        if callback is not None:
            callback(k, x, r, d)
    else:
        stats.converged = r_norm <= tol
    return x, stats


def gradient_rate(lam_min: float, lam_max: float) -> float:
    """Steepest-descent energy contraction ``(lam_max - lam_min)/(lam_max + lam_min)``."""
    return (lam_max - lam_min) / (lam_max + lam_min)
