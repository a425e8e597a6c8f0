"""Wavelet indices, tree-structured index sets and the 1D Galerkin layer."""

from __future__ import annotations

import math
import threading
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from .family import T_MINUS, reference_family

SCALING = "scaling"
WAVELET = "wavelet"

# wavelet components
INTERNAL_EVEN, INTERNAL_ODD, STRADDLE_EVEN, STRADDLE_ODD = 0, 1, 2, 3
N_SCALING = 3

_XG, _WG = legendre.leggauss(4)


class WaveletIndex(NamedTuple):
    """Index of one basis function.

    Scaling functions live on level 0 with translation 0 and component
    0..2. Wavelets of level ``j`` have components

    * 0, 1: internal wavelets on cell ``[k, k+1] 2^-j``, ``0 <= k < 2^j``;
    * 2: even straddler at node ``k 2^-j``, ``0 < k < 2^j``;
    * 3: odd straddler at node ``k 2^-j``, ``0 <= k <= 2^j`` (folded at the
      two end points).
    """

    level: int
    translation: int
    kind: str
    component: int

    def __repr__(self):
        tag = "s" if self.kind == SCALING else "w"
        return f"{tag}{self.component}({self.level},{self.translation})"


def scaling_index(component: int) -> WaveletIndex:
    return WaveletIndex(0, 0, SCALING, component)


def wavelet_index(level: int, translation: int, component: int) -> WaveletIndex:
    return WaveletIndex(level, translation, WAVELET, component)


def is_valid(lam) -> bool:
    """Whether ``lam`` names a function of the family on (0, 1)."""
    if not isinstance(lam, WaveletIndex):
        return False
    j, k, kind, c = lam
    if kind == SCALING:
        return j == 0 and k == 0 and 0 <= c < N_SCALING
    if kind != WAVELET or j < 0:
        return False
    n = 1 << j
    if c in (INTERNAL_EVEN, INTERNAL_ODD):
        return 0 <= k < n
    if c == STRADDLE_EVEN:
        return 0 < k < n
    if c == STRADDLE_ODD:
        return 0 <= k <= n
    return False


def _require_valid(lam):
    if not is_valid(lam):
        raise ValueError(f"invalid wavelet index {lam!r}")


def support(lam) -> tuple:
    """Support interval ``(a, b)`` in units of ``2^-level``."""
    j, k, kind, c = lam
    if kind == SCALING or c in (INTERNAL_EVEN, INTERNAL_ODD):
        return k, k + 1
    return max(k - 1, 0), min(k + 1, 1 << j)


def parent(lam):
    """Unique parent index, ``None`` for scaling functions."""
    _require_valid(lam)
    j, k, kind, c = lam
    if kind == SCALING:
        return None
    if j == 0:
        return scaling_index(0)
    if c in (INTERNAL_EVEN, INTERNAL_ODD):
        return wavelet_index(j - 1, k // 2, c)
    if k % 2 == 0:
        return wavelet_index(j - 1, k // 2, c)
    return wavelet_index(j - 1, (k - 1) // 2, c - 2)


def children(lam) -> list:
    """Indices whose parent is ``lam``."""
    _require_valid(lam)
    j, k, kind, c = lam
    if kind == SCALING:
        if c != 0:
            return []
        return [wavelet_index(0, 0, INTERNAL_EVEN), wavelet_index(0, 0, INTERNAL_ODD),
                wavelet_index(0, 0, STRADDLE_ODD), wavelet_index(0, 1, STRADDLE_ODD)]
    if c in (INTERNAL_EVEN, INTERNAL_ODD):
        return [wavelet_index(j + 1, 2 * k, c), wavelet_index(j + 1, 2 * k + 1, c),
                wavelet_index(j + 1, 2 * k + 1, c + 2)]
    return [wavelet_index(j + 1, 2 * k, c)]


def level_indices(level: int) -> list:
    """All wavelets of one level, ordered by translation."""
    n = 1 << level
    out = []
    for k in range(n + 1):
        if k < n:
            out += [wavelet_index(level, k, INTERNAL_EVEN), wavelet_index(level, k, INTERNAL_ODD)]
        if 0 < k < n:
            out.append(wavelet_index(level, k, STRADDLE_EVEN))
        out.append(wavelet_index(level, k, STRADDLE_ODD))
    return out


class IndexSet1D:
    """Ordered, immutable set of wavelet indices.

    Parameters
    ----------
    members : iterable of WaveletIndex
        Order is kept; duplicates are dropped.
    """

    __slots__ = ("members", "_set")

    def __init__(self, members=()):
        members = tuple(dict.fromkeys(members))
        for lam in members:
            _require_valid(lam)
        self.members = members
        self._set = frozenset(members)

    @classmethod
    def uniform(cls, max_level: int) -> "IndexSet1D":
        """Scaling functions and all wavelets of levels ``0..max_level``."""
        members = [scaling_index(c) for c in range(N_SCALING)]
        for j in range(max_level + 1):
            members += level_indices(j)
        return cls(members)

    @classmethod
    def roots(cls) -> "IndexSet1D":
        return cls(scaling_index(c) for c in range(N_SCALING))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, lam):
        return lam in self._set

    def __eq__(self, other):
        return isinstance(other, IndexSet1D) and self._set == other._set

    def __hash__(self):
        return hash(self._set)

    def __repr__(self):
        return f"IndexSet1D({len(self)} indices, max level {self.max_level})"

    def __le__(self, other):
        return self._set <= other._set

    @property
    def max_level(self) -> int:
        return max((lam.level for lam in self.members if lam.kind == WAVELET), default=-1)

    def union(self, other) -> "IndexSet1D":
        return IndexSet1D(self.members + tuple(other))

    def is_tree(self) -> bool:
        return all(parent(lam) is None or parent(lam) in self._set for lam in self.members)

    def closure(self) -> "IndexSet1D":
        """Smallest tree-structured superset; ancestors precede descendants."""
        out = dict.fromkeys(self.members)
        missing = []
        for lam in self.members:
            chain = []
            p = parent(lam)
            while p is not None and p not in out:
                chain.append(p)
                out[p] = None
                p = parent(p)
            missing += chain[::-1]
        if not missing:
            return self
        return IndexSet1D(missing + [lam for lam in self.members])

    def sorted(self) -> "IndexSet1D":
        return IndexSet1D(sorted(self.members, key=lambda m: (m.kind != SCALING, m.level,
                                                               m.translation, m.component)))


def _centre(lam) -> float:
    a, b = support(lam)
    if lam.kind == WAVELET and lam.component in (STRADDLE_EVEN, STRADDLE_ODD):
        return lam.translation / (1 << lam.level)
    return 0.5 * (a + b) / (1 << lam.level)


def _near(level, lo, hi):
    """Wavelets of ``level`` whose support centre lies in ``[lo, hi]``."""
    n = 1 << level
    kmin = max(int(math.floor(lo * n)) - 1, 0)
    kmax = min(int(math.ceil(hi * n)) + 1, n)
    out = []
    for k in range(kmin, kmax + 1):
        cands = []
        if k < n:
            cands += [wavelet_index(level, k, INTERNAL_EVEN), wavelet_index(level, k, INTERNAL_ODD)]
        if 0 < k < n:
            cands.append(wavelet_index(level, k, STRADDLE_EVEN))
        cands.append(wavelet_index(level, k, STRADDLE_ODD))
        out += [c for c in cands if lo - 1e-12 <= _centre(c) <= hi + 1e-12]
    return out


def expand_security_zone(index_set, width: int = 1) -> IndexSet1D:
    """Enlarge an index set around its members.

    For every member this adds the next-level wavelets centred in its support
    and the same-level wavelets centred within ``width`` support widths of it,
    then closes the result under the tree property. ``width = 0`` returns the
    tree closure.
    """
    base = index_set if isinstance(index_set, IndexSet1D) else IndexSet1D(index_set)
    if width < 0:
        raise ValueError("width must be non-negative")
    if width == 0:
        return base.closure()
    added = []
    for lam in base:
        a, b = support(lam)
        h = 1.0 / (1 << lam.level)
        lo, hi = a * h, b * h
        if lam.kind == SCALING:
            added += [scaling_index(c) for c in range(N_SCALING)]
            added += _near(0, lo, hi)
            continue
        added += _near(lam.level + 1, lo, hi)
        pad = width * (hi - lo)
        added += _near(lam.level, lo - pad, hi + pad)
    return base.union(added).closure()


class _Ref(NamedTuple):
    fun: object
    der: object
    interior: bool  # compact wavelet away from the boundary: full vanishing moments


def _integrate(f, g, dilation, shift):
    """``∫ f(y) g(dilation y + shift) dy`` by Gauss rules on the merged mesh."""
    ga, gb = g.knots[0], g.knots[-1]
    lo = max(f.knots[0], (ga - shift) / dilation)
    hi = min(f.knots[-1], (gb - shift) / dilation)
    if hi <= lo:
        return 0.0
    pts = np.concatenate([f.knots, (g.knots - shift) / dilation])
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    pts = np.union1d(pts, [lo, hi])
    a, b = pts[:-1], pts[1:]
    x = (a[:, None] + b[:, None]) / 2 + np.outer((b - a) / 2, _XG)
    w = np.outer((b - a) / 2, _WG)
    return float(np.sum(w * f(x) * g(dilation * x + shift)))


class Basis1D:
    """Orthonormal cubic multiwavelet basis of H^1_0(0, 1).

    ``psi_{j,k}(x) = 2^{j/2} psi(2^j x - k)`` with the reference functions of
    :func:`reference_family`. Entries are evaluated by exact Gauss quadrature
    and cached per relative configuration, so repeated queries are cheap.

    Parameters
    ----------
    t : float
        Shape parameter of the family.
    """

    def __init__(self, t: float = T_MINUS):
        fam = reference_family(t)
        self.t = fam["t"]
        refs = {}
        for c, f in enumerate(fam["scaling"]):
            refs[("s", c)] = _Ref(f, f.derivative(), False)
        for c, f in enumerate(fam["internal"]):
            refs[("i", c)] = _Ref(f, f.derivative(), True)
        refs["even"] = _Ref(fam["even"], fam["even"].derivative(), True)
        refs["odd"] = _Ref(fam["odd"], fam["odd"].derivative(), True)
        left = fam["boundary"]
        refs["left"] = _Ref(left, left.derivative(), False)
        right = left.mirrored()
        refs["right"] = _Ref(right, right.derivative(), False)
        self._refs = refs
        self._cache = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"Basis1D(t={self.t:.6f})"

    def _ref(self, lam):
        """Reference key and the affine map ``x -> 2^level x - offset``."""
        j, k, kind, c = lam
        if kind == SCALING:
            return ("s", c), 0, 0
        if c in (INTERNAL_EVEN, INTERNAL_ODD):
            return ("i", c), j, k
        if c == STRADDLE_EVEN:
            return "even", j, k
        if k == 0:
            return "left", j, 0
        if k == 1 << j:
            return "right", j, k
        return "odd", j, k

    def evaluate(self, lam, x, derivative=False):
        """Values of ``psi_lam`` (or its derivative) at points ``x``."""
        _require_valid(lam)
        key, j, k = self._ref(lam)
        ref = self._refs[key]
        y = (2.0**j) * np.asarray(x, dtype=float) - k
        if derivative:
            return 2.0 ** (1.5 * j) * ref.der(y)
        return 2.0 ** (0.5 * j) * ref.fun(y)

    def _pair(self, lam, mu, kind):
        key_a, ja, ka = self._ref(lam)
        key_b, jb, kb = self._ref(mu)
        # canonical order keeps the cached value and the matrices exactly symmetric
        if (ja, str(key_a), ka) > (jb, str(key_b), kb):
            key_a, ja, ka, key_b, jb, kb = key_b, jb, kb, key_a, ja, ka
        delta = jb - ja
        shift = (ka << delta) - kb
        ck = (kind, key_a, key_b, delta, shift)
        val = self._cache.get(ck)
        if val is None:
            val = self._reference_integral(kind, key_a, key_b, delta, shift)
            with self._lock:
                self._cache[ck] = val
        if kind == "stiff":
            return val * 2.0 ** (0.5 * (ja + jb) + jb)
        return val * 2.0 ** (0.5 * (jb - ja))

    def _reference_integral(self, kind, key_a, key_b, delta, shift):
        fa, fb = self._refs[key_a], self._refs[key_b]
        dil = 2.0**delta
        if fb.interior and delta >= 1:
            # a wavelet with four vanishing moments inside one cubic piece of the
            # coarser function is orthogonal to it in L2 and in the energy product
            lo, hi = (fb.fun.knots[0] - shift) / dil, (fb.fun.knots[-1] - shift) / dil
            kn = fa.fun.knots
            if lo >= kn[-1] or hi <= kn[0]:
                return 0.0
            i = np.searchsorted(kn, lo, side="right") - 1
            if 0 <= i < len(kn) - 1 and hi <= kn[i + 1] + 1e-15:
                return 0.0
        if kind == "stiff":
            return _integrate(fa.der, fb.der, dil, shift)
        return _integrate(fa.fun, fb.fun, dil, shift)

    def mass_entry(self, lam, mu) -> float:
        """``∫ psi_lam psi_mu dx``."""
        _require_valid(lam)
        _require_valid(mu)
        return self._pair(lam, mu, "mass")

    def stiffness_entry(self, lam, mu) -> float:
        """``∫ psi_lam' psi_mu' dx``."""
        _require_valid(lam)
        _require_valid(mu)
        return self._pair(lam, mu, "stiff")

    def h1_norm(self, lam) -> float:
        """``sqrt(||psi||^2 + ||psi'||^2)``."""
        _require_valid(lam)
        return math.sqrt(self._pair(lam, lam, "mass") + self._pair(lam, lam, "stiff"))

    def h1_weights(self, index_set) -> np.ndarray:
        """Squared H^1 norms of the members, the 1D scaling weights."""
        cache = self._cache
        out = np.empty(len(index_set))
        for i, lam in enumerate(index_set):
            key = ("h1", lam.level, lam.kind, lam.component, lam.translation in (0, 1 << lam.level))
            val = cache.get(key)
            if val is None:
                val = self.h1_norm(lam) ** 2
                with self._lock:
                    cache[key] = val
            out[i] = val
        return out

    def _assemble(self, rows, cols, kind) -> sp.csr_matrix:
        rows, cols = tuple(rows), tuple(cols)
        for lam in set(rows) | set(cols):
            _require_valid(lam)
        # bucket columns by level and cell so only overlapping pairs are visited
        grid = {}
        for i, mu in enumerate(cols):
            a, b = support(mu)
            for cell in range(a, max(b, a + 1)):
                grid.setdefault((mu.level if mu.kind == WAVELET else -1, cell), []).append(i)
        levels = sorted({lv for lv, _ in grid})
        r_idx, c_idx, vals = [], [], []
        for i, lam in enumerate(rows):
            a, b = support(lam)
            j = lam.level if lam.kind == WAVELET else 0
            lo, hi = a / 2.0**j, b / 2.0**j
            seen = set()
            for lv in levels:
                n = 1 << max(lv, 0)
                for cell in range(int(math.floor(lo * n)), int(math.ceil(hi * n))):
                    for c in grid.get((lv, cell), ()):
                        if c in seen:
                            continue
                        seen.add(c)
                        v = self._pair(lam, cols[c], kind)
                        if v != 0.0:
                            r_idx.append(i)
                            c_idx.append(c)
                            vals.append(v)
        return sp.csr_matrix((vals, (r_idx, c_idx)), shape=(len(rows), len(cols)))

    def stiffness_matrix(self, rows, cols=None) -> sp.csr_matrix:
        """Sparse matrix of ``∫ psi_row' psi_col'`` for two index lists."""
        return self._assemble(rows, rows if cols is None else cols, "stiff")

    def mass_matrix(self, rows, cols=None) -> sp.csr_matrix:
        return self._assemble(rows, rows if cols is None else cols, "mass")

    def integral(self, lam) -> float:
        """``∫_0^1 psi_lam dx``; exactly zero for wavelets with full vanishing moments."""
        _require_valid(lam)
        key, j, _ = self._ref(lam)
        ref = self._refs[key]
        if ref.interior:
            return 0.0
        ck = ("int", key)
        val = self._cache.get(ck)
        if val is None:
            f = ref.fun
            a, b = f.knots[:-1], f.knots[1:]
            x = (a[:, None] + b[:, None]) / 2 + np.outer((b - a) / 2, _XG)
            val = float(np.sum(np.outer((b - a) / 2, _WG) * f(x)))
            with self._lock:
                self._cache[ck] = val
        return val * 2.0 ** (-0.5 * j)


def h1_norm(basis: Basis1D, lam) -> float:
    """H^1 norm of one basis function."""
    return basis.h1_norm(lam)


def stiffness_entry(basis: Basis1D, lam, mu) -> float:
    """``∫ psi_lam' psi_mu' dx``."""
    return basis.stiffness_entry(lam, mu)


def assemble_stiffness(basis: Basis1D, index_set) -> sp.csr_matrix:
    """Symmetric positive definite stiffness matrix on ``index_set``."""
    return basis.stiffness_matrix(tuple(index_set))


def rhs_one_coefficients(basis: Basis1D, index_set) -> np.ndarray:
    """Coefficients ``∫_0^1 psi_lam dx`` of the constant function 1."""
    return np.array([basis.integral(lam) for lam in index_set], dtype=float)
