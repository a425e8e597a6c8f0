"""Exact versus contraction-based index-set sizes for the bulk criterion.

``NE(alpha, v)`` is the smallest total size ``sum_j #Λ_j`` of a product set
with ``||R_Λ v|| >= alpha ||v||``. ``NQ(alpha, v)`` is the smallest number of
contraction entries, taken largest first across all dimensions, whose
complement carries at most ``(1 - alpha^2) ||v||^2`` of the contraction mass.
Everything here works on small dense arrays and is independent of the solver.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_SUM = 40
MAX_PROD = 10**6
MAX_WORK = 2**27

CSV_COLUMNS = ("d", "shape", "alpha", "structure", "trial", "NE", "NQ", "ratio",
               "bound_low", "bound_high", "within_bounds")


def dense_contractions(v) -> list:
    """``pi_j(v)[i] = sqrt(sum of v^2 over all modes but j)`` for every ``j``."""
    v = np.asarray(v, dtype=float)
    sq = v * v
    out = []
    for j in range(v.ndim):
        axes = tuple(a for a in range(v.ndim) if a != j)
        out.append(np.sqrt(sq.sum(axis=axes)))
    return out


def _target(v, alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha * alpha * float(np.sum(v * v))


def _first_reaching(cum, target):
    """Number of leading entries of ``cum`` needed to reach ``target``; -1 if none."""
    hit = cum >= target * (1 - 1e-12)
    idx = np.argmax(hit, axis=-1)
    return np.where(hit.any(axis=-1), idx + 1, -1)


def ne_exact(v, alpha: float) -> int:
    """Minimal ``sum_j #Λ_j`` with ``||R_Λ v|| >= alpha ||v||``.

    All subset combinations of every dimension but the largest are
    enumerated; the remaining dimension is filled greedily, which is optimal
    once the other sets are fixed.

    Raises
    ------
    ValueError
        When ``sum_j n_j > 40``, ``prod_j n_j > 10^6``, or the enumeration
        would exceed ``2^27`` work units.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.size == 0:
        raise ValueError("need a non-empty tensor")
    n = v.shape
    if sum(n) > MAX_SUM or math.prod(n) > MAX_PROD:
        raise ValueError(f"tensor of shape {n} exceeds the exhaustive-search limits")
    target = _target(v, alpha)
    if target == 0:
        return v.ndim
    last = int(np.argmax(n))
    sq = np.moveaxis(v * v, last, -1)
    rest = sq.shape[:-1]
    P = math.prod(rest)
    bits = sum(rest)
    if (2**bits) * max(P, 1) > MAX_WORK:
        raise ValueError(f"tensor of shape {n} needs too many subset combinations")
    flat = sq.reshape(P, sq.shape[-1])
    # masks of all subsets for each of the enumerated dimensions
    subsets = [((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(float) for m in rest]
    sizes = [s.sum(axis=1) for s in subsets]
    best = math.inf
    chunk = max(1, MAX_WORK // (8 * max(P, 1)))
    combos = itertools.product(*[range(2**m) for m in rest])
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            break
        idx = np.array(block, dtype=np.intp).reshape(len(block), len(rest))
        mask = np.ones((len(block), 1))
        size = np.zeros(len(block))
        for j, m in enumerate(rest):
            sel = subsets[j][idx[:, j]]
            mask = (mask[:, :, None] * sel[:, None, :]).reshape(len(block), -1)
            size += sizes[j][idx[:, j]]
        mass = mask @ flat
        mass = -np.sort(-mass, axis=1)
        k = _first_reaching(np.cumsum(mass, axis=1), target)
        ok = k > 0
        if ok.any():
            best = min(best, float((size[ok] + k[ok]).min()))
    return int(best)


def ne_superdiagonal(values, d: int, alpha: float) -> int:
    """``NE`` of the tensor with ``values`` on its superdiagonal and zeros elsewhere.

    A product set captures exactly the diagonal entries in the intersection
    of its factors, so the optimum takes the same top entries in every
    dimension.
    """
    sq = np.sort(np.asarray(values, dtype=float) ** 2)[::-1]
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    target = alpha * alpha * sq.sum()
    if target == 0:
        return d
    return d * int(_first_reaching(np.cumsum(sq), target))


def nq_from_contractions(pis, alpha: float, norm2: float) -> int:
    """``NQ`` from precomputed contraction vectors and ``||v||^2``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    vals = np.sort(np.concatenate([np.asarray(p, dtype=float) ** 2 for p in pis]))[::-1]
    total = float(vals.sum())
    allowed = (1.0 - alpha * alpha) * norm2
    tail = total - np.concatenate([[0.0], np.cumsum(vals)])
    ok = tail <= allowed + 1e-12 * max(total, 1e-300)
    return int(np.argmax(ok))


def nq_contraction(v, alpha: float) -> int:
    """Smallest ``N`` whose ``N`` largest contraction entries leave tail ``<= sqrt(1-alpha^2)||v||``."""
    v = np.asarray(v, dtype=float)
    return nq_from_contractions(dense_contractions(v), alpha, float(np.sum(v * v)))


def c_mean(shape) -> float:
    """Ratio of arithmetic and geometric means of the mode sizes."""
    n = np.asarray(shape, dtype=float)
    return float(n.mean() / np.exp(np.log(n).mean()))


def bound_window(shape, alpha: float):
    """Candidate-constant window ``C_mean (d-1+a^2)/(d a^{2/d})`` to ``C_mean (d-1+a^2)/(d a^2)``."""
    d = len(shape)
    c = c_mean(shape) * (d - 1 + alpha * alpha) / d
    return c / alpha ** (2.0 / d), c / alpha**2


# -- test tensors --------------------------------------------------------------


def random_tensor(shape, rng) -> np.ndarray:
    return rng.standard_normal(shape)


def residual_like_tensor(shape, rng, decay: float = 0.8, n_spikes: int = 3,
                         spike: float = 0.3) -> np.ndarray:
    """Smoothly decaying bulk with a few isolated spikes."""
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    bulk = np.exp(-decay * sum(grids)) * (1.0 + 0.1 * rng.standard_normal(shape))
    bulk *= rng.choice([-1.0, 1.0], size=shape)
    for _ in range(n_spikes):
        pos = tuple(int(rng.integers(n)) for n in shape)
        bulk[pos] += spike * rng.choice([-1.0, 1.0])
    return bulk


def diagonal_tensor(t: float, n: int, d: int = 2) -> np.ndarray:
    """Superdiagonal tensor ``diag(1, t, ..., t)`` with ``n`` diagonal entries."""
    v = np.zeros((n,) * d)
    vals = np.full(n, t)
    vals[0] = 1.0
    v[(np.arange(n),) * d] = vals
    return v


def diagonal_family(ts=(0.5, 0.1, 0.01), tail: float = 0.25, alpha: float = math.sqrt(0.7),
                    d: int = 2) -> list:
    """``NE`` and ``NQ`` of ``diag(1, t, ..., t)`` with tail mass ``(n-1) t^2 ≈ tail``.

    The norm stays fixed while the number of small entries grows like
    ``t^-2``; ``NE`` stays at ``d`` and ``NQ`` grows.
    """
    rows = []
    for t in ts:
        n = 1 + int(round(tail / (t * t)))
        vals = np.full(n, t)
        vals[0] = 1.0
        ne = ne_superdiagonal(vals, d, alpha)
        pis = [np.abs(vals)] * d
        nq = nq_from_contractions(pis, alpha, float(np.sum(vals * vals)))
        rows.append({"t": t, "n": n, "NE": ne, "NQ": nq, "ratio": nq / ne})
    return rows


# -- experiment ------------------------------------------------------------------


@dataclass
class RatioReport:
    """Per-trial rows and summary statistics of :func:`ratio_experiment`."""

    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def n_trials(self) -> int:
        return len(self.rows)

    @property
    def nq_ge_ne(self) -> int:
        return sum(r["NQ"] >= r["NE"] for r in self.rows)

    @property
    def within_bounds(self) -> int:
        return sum(r["within_bounds"] for r in self.rows)

    @property
    def above_low(self) -> int:
        return sum(r["ratio"] >= r["bound_low"] for r in self.rows)

    def summary(self) -> list:
        """Ratio statistics per ``(d, shape, alpha, structure)``."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["d"], r["shape"], r["alpha"], r["structure"]), []).append(r)
        out = []
        for (d, shape, alpha, structure), rs in groups.items():
            ratios = np.array([r["ratio"] for r in rs])
            out.append({
                "d": d, "shape": shape, "alpha": alpha, "structure": structure,
                "trials": len(rs), "ratio_mean": float(ratios.mean()),
                "ratio_min": float(ratios.min()), "ratio_max": float(ratios.max()),
                "bound_low": rs[0]["bound_low"], "bound_high": rs[0]["bound_high"],
                "within_bounds": sum(r["within_bounds"] for r in rs),
                "above_low": sum(r["ratio"] >= r["bound_low"] for r in rs),
                "nq_ge_ne": sum(r["NQ"] >= r["NE"] for r in rs),
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r[k] for k in CSV_COLUMNS})
        return buf.getvalue()


def ratio_experiment(dims, sizes, alpha_grid, trials: int, structure: str = "random",
                     seed: int = 42) -> RatioReport:
    """``NE``, ``NQ`` and the candidate-constant window over random trials.

    Parameters
    ----------
    dims : sequence of int
    sizes : sequence of int
        Mode size ``n``; every configuration uses the shape ``(n,) * d``.
    alpha_grid : sequence of float
    trials : int
    structure : {"random", "residual_like"}
    seed : int

    Returns
    -------
    RatioReport
        Configurations beyond the exhaustive-search limits are listed in
        ``skipped``.
    """
    makers = {"random": random_tensor, "residual_like": residual_like_tensor}
    if structure not in makers:
        raise ValueError(f"unknown structure {structure!r}")
    rng = np.random.default_rng(seed)
    report = RatioReport()
    for d in dims:
        for n in sizes:
            shape = (int(n),) * int(d)
            for trial in range(trials):
                v = makers[structure](shape, rng)
                pis = dense_contractions(v)
                norm2 = float(np.sum(v * v))
                for alpha in alpha_grid:
                    try:
                        ne = ne_exact(v, alpha)
                    except ValueError:
                        if shape not in report.skipped:
                            report.skipped.append(shape)
                        break
                    nq = nq_from_contractions(pis, alpha, norm2)
                    low, high = bound_window(shape, alpha)
                    ratio = nq / ne
                    report.rows.append({
                        "d": int(d), "shape": "x".join(map(str, shape)), "alpha": float(alpha),
                        "structure": structure, "trial": trial, "NE": ne, "NQ": nq,
                        "ratio": ratio, "bound_low": low, "bound_high": high,
                        "within_bounds": bool(low <= ratio <= high),
                    })
    return report
