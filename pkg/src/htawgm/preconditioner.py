"""Exponential-sum approximation of the diagonal H^1 scaling.

For ``t >= 1`` the inverse square root is approximated by

    1/sqrt(t) ≈ phi(t) = sum_{k=-n}^{n_plus} h w(kh) exp(-alpha(kh) t),
    w(x) = 2/sqrt(pi) / (1 + exp(-x)),   alpha(x) = log(1 + exp(x))^2,

a sinc rule for ``2/sqrt(pi) ∫ exp(-t s^2) ds`` after ``s = log(1 + e^x)``.
Applied to a tensor with index weights ``t_lam = sum_j ||psi_{lam_j}||_{H^1}^2``
every term factorizes over dimensions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .ht_core import HTTensor, add, norm, truncate

_C = 2.0 / math.sqrt(math.pi)


class PreconditionerWindowError(ValueError):
    """An active index has a scaling weight above the validity bound ``T``."""


def step_bound(delta: float) -> float:
    """Upper bound on the sinc step size for accuracy ``delta``."""
    return math.pi**2 / (5.0 * (abs(math.log(delta / 2.0)) + 4.0))


@dataclass(frozen=True)
class ExpSumPrecond:
    """Terms ``(omega_k, a_k)`` of the approximation ``phi`` on ``[1, T]``."""

    delta: float
    eta: float
    T: float
    h: float
    n_plus: int
    n_minus: int
    weights: np.ndarray
    exponents: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.n_minus, self.n_plus + 1)

    def __call__(self, t):
        return phi(self, t)

    def to_csv(self) -> str:
        """Rows ``k, omega_k, a_k``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "omega", "a"])
        for k, om, a in zip(self.ks, self.weights, self.exponents):
            w.writerow([int(k), repr(float(om)), repr(float(a))])
        return buf.getvalue()


def _terms(h, n_minus, n_plus):
    x = h * np.arange(-n_minus, n_plus + 1)
    weights = h * _C / (1.0 + np.exp(-x))
    exponents = np.logaddexp(0.0, x) ** 2
    return weights, exponents


def build_expsum(delta: float, eta: float = None, T: float = 2.0, h_factor: float = 0.9,
                 n_minus: int = None) -> ExpSumPrecond:
    """Exponential sum with relative accuracy ``delta`` on ``[1, T]``.

    Parameters
    ----------
    delta : float
        Relative accuracy, ``0 < delta < 1``.
    eta : float, optional
        Accuracy of cutting the negative tail; defaults to ``delta / 10``.
    T : float
        Upper end of the validity window, ``T > 1``.
    h_factor : float
        Step size as a fraction of its admissible upper bound.
    n_minus : int, optional
        Override for the number of negative terms (tail studies).
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if eta is None:
        eta = delta / 10.0
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if not T > 1:
        raise ValueError(f"T must exceed 1, got {T}")
    if not 0 < h_factor < 1:
        raise ValueError("h_factor must lie in (0, 1)")
    h = h_factor * step_bound(delta)
    ld = abs(math.log(delta / 2.0))
    n_plus = math.ceil(max(4.0 / math.sqrt(math.pi), math.sqrt(ld)) / h)
    if n_minus is None:
        n_minus = math.ceil((math.log(_C) + abs(math.log(min(delta / 2.0, eta)))
                             + 0.5 * math.log(T)) / h)
    weights, exponents = _terms(h, n_minus, n_plus)
    weights.flags.writeable = False
    exponents.flags.writeable = False
    return ExpSumPrecond(float(delta), float(eta), float(T), h, int(n_plus), int(n_minus),
                         weights, exponents)


def phi(P: ExpSumPrecond, t):
    """``sum_k omega_k exp(-a_k t)``, vectorized over ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-np.multiply.outer(t, P.exponents)) @ P.weights
    return float(out) if out.ndim == 0 else out


def accuracy(P: ExpSumPrecond, n_points: int = 10_000, T: float = None) -> float:
    """``max sqrt(t) |1/sqrt(t) - phi(t)|`` on a log grid over ``[1, T]``."""
    t = np.geomspace(1.0, P.T if T is None else T, n_points)
    return float(np.max(np.abs(1.0 - np.sqrt(t) * phi(P, t))))


def index_weights(basis, index_sets) -> list:
    """Per-dimension squared H^1 norms of the index sets."""
    return [basis.h1_weights(s) for s in index_sets]


def check_window(P: ExpSumPrecond, weights) -> float:
    """Largest product-index weight; raises if it exceeds ``P.T``."""
    tmax = float(sum(w.max() if len(w) else 0.0 for w in weights))
    if tmax > P.T:
        raise PreconditionerWindowError(
            f"scaling weight {tmax:.6g} exceeds the window T={P.T:.6g}; rebuild with larger T")
    return tmax


def apply_precond(P: ExpSumPrecond, basis, u: HTTensor, trunc_tol: float = 0.0,
                  abs_tol: float = None) -> HTTensor:
    """``S^-1 u = sum_k omega_k (⊗_j diag exp(-a_k w_j)) u``.

    When truncating, terms that are provably negligible on the active
    weights are skipped (see :func:`apply_weighted`). Terms are accumulated
    in batches. After adding a batch the partial sum
    is truncated with absolute tolerance ``trunc_tol * ||partial sum|| / B``
    for ``B`` batches; partial sums of positive diagonal scalings grow in norm,
    so the total error stays below ``trunc_tol * ||S^-1 u||``.
    ``trunc_tol = 0`` skips truncation and returns the exact sum. With
    ``abs_tol`` every truncation uses ``abs_tol / B`` instead, bounding the
    total error by ``abs_tol``.
    """
    weights = index_weights(basis, u.index_sets)
    check_window(P, weights)
    return apply_weighted(P, weights, u, trunc_tol, abs_tol)


_EXACT_REL = 1e-14


def apply_weighted(P: ExpSumPrecond, weights, u: HTTensor, trunc_tol: float = 0.0,
                   abs_tol: float = None, block: int = 64) -> HTTensor:
    """:func:`apply_precond` with precomputed per-dimension weights.

    Every active weight lies in ``[t_min, t_max]``, so term ``k`` has norm at
    most ``omega_k exp(-a_k t_min) ||u||`` and ``||S^-1 u|| >= phi(t_max) ||u||``.
    When truncating, the smallest terms whose summed bound fits in half the
    tolerance are dropped. The rest are summed in batches of about
    ``block / rank(u)`` terms; each batch is formed exactly with
    block-diagonal transfer tensors, added to the partial sum, and the partial
    sum is truncated once per batch with the other half of the tolerance.
    Without a tolerance the partial sums are only recompressed at roundoff
    level.
    """
    if trunc_tol < 0 or (abs_tol is not None and abs_tol < 0):
        raise ValueError("truncation tolerance must be non-negative")
    truncating = (abs_tol is not None and abs_tol > 0) or (abs_tol is None and trunc_tol > 0)
    keep = np.arange(P.n_terms)
    if truncating:
        tmin = float(sum(np.min(w) for w in weights))
        tmax = float(sum(np.max(w) for w in weights))
        unorm = norm(u)
        if abs_tol is not None:
            budget = 0.5 * abs_tol
        else:
            budget = 0.5 * trunc_tol * phi(P, tmax) * unorm
        bound = P.weights * np.exp(-P.exponents * tmin) * unorm
        small = np.argsort(bound, kind="stable")
        n_drop = int(np.searchsorted(np.cumsum(bound[small]), budget, side="right"))
        n_drop = min(n_drop, P.n_terms - 1)
        keep = np.sort(small[n_drop:])
        if abs_tol is not None:
            abs_tol = abs_tol - float(bound[small[:n_drop]].sum())
        else:
            trunc_tol = 0.5 * trunc_tol
    # largest exponents first: those terms are the most local in t
    order = keep[np.argsort(-P.exponents[keep], kind="stable")]
    size = max(1, block // max(1, u.max_rank))
    batches = [order[i:i + size] for i in range(0, len(order), size)]
    acc = None
    for idx in batches:
        term = _term_block(u, weights, P.weights[idx], P.exponents[idx])
        acc = term if acc is None else add(acc, term)
        if len(batches) == 1:
            continue
        if not truncating:
            # recompression at roundoff level keeps the ranks bounded
            acc = truncate(acc, _EXACT_REL * norm(acc))
        elif abs_tol is not None:
            acc = truncate(acc, abs_tol / len(batches))
        else:
            acc = truncate(acc, trunc_tol * norm(acc) / len(batches))
    return acc


def _term_block(u: HTTensor, weights, oms, exps) -> HTTensor:
    """``sum_k oms[k] (⊗_j diag exp(-exps[k] weights[j])) u`` with ranks ``len(oms) * r``."""
    tree = u.tree
    scal = [np.exp(-np.multiply.outer(exps, np.asarray(w, dtype=float))) for w in weights]
    if tree.d == 1:
        f = (oms[:, None] * scal[0]).sum(axis=0)[:, None] * u.frames[0]
        return HTTensor(tree, u.index_sets, [f], [None], check=False)
    nb = len(oms)
    frames = [np.hstack([s[:, None] * f for s in sc]) for sc, f in zip(scal, u.frames)]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        b = u.transfers[t]
        rl, rr, rt = b.shape
        if t == tree.root:
            nbk = np.zeros((nb * rl, nb * rr, 1))
            for k in range(nb):
                nbk[k * rl:(k + 1) * rl, k * rr:(k + 1) * rr] = oms[k] * b
        else:
            nbk = np.zeros((nb * rl, nb * rr, nb * rt))
            for k in range(nb):
                nbk[k * rl:(k + 1) * rl, k * rr:(k + 1) * rr, k * rt:(k + 1) * rt] = b
        transfers[t] = nbk
    return HTTensor(tree, u.index_sets, frames, transfers, check=False)


def dense_scaling(P: ExpSumPrecond, weights) -> np.ndarray:
    """``phi(t_lam)`` on the full product grid (test oracle)."""
    t = weights[0]
    for w in weights[1:]:
        t = np.add.outer(t, w)
    return phi(P, t)


def exact_scaling(weights) -> np.ndarray:
    """``1/sqrt(t_lam)`` on the full product grid (test oracle)."""
    t = weights[0]
    for w in weights[1:]:
        t = np.add.outer(t, w)
    return 1.0 / np.sqrt(t)
