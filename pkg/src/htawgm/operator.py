"""Separable operators acting on HT tensors."""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np
import scipy.sparse as sp

from .ht_core import HTTensor, add, leaf_apply, reindex
from .ht_core.tensor import _take_rows
from .wavelet_basis import Basis1D

IDENTITY = "I"


def _labels(s):
    return tuple(s)


class StiffnessFactor:
    """1D stiffness matrix of a wavelet basis, assembled on demand."""

    def __init__(self, basis: Basis1D, cache_size: int = 64):
        self.basis = basis
        self._cache = OrderedDict()
        self._size = cache_size
        self._lock = threading.Lock()

    def __repr__(self):
        return f"StiffnessFactor({self.basis!r})"

    def matrix(self, rows, cols) -> sp.csr_matrix:
        key = (rows, cols)
        with self._lock:
            m = self._cache.get(key)
            if m is not None:
                self._cache.move_to_end(key)
                return m
        m = self.basis.stiffness_matrix(rows, cols)
        with self._lock:
            self._cache[key] = m
            if len(self._cache) > self._size:
                self._cache.popitem(last=False)
        return m

    def check_domain(self, labels):
        pass


class MatrixFactor:
    """Explicit square matrix on a fixed list of labels."""

    def __init__(self, labels, matrix):
        self.labels = _labels(labels)
        self.mat = sp.csr_matrix(matrix)
        if self.mat.shape != (len(self.labels), len(self.labels)):
            raise ValueError("matrix shape does not match its labels")
        self._pos = {lab: i for i, lab in enumerate(self.labels)}

    def __repr__(self):
        return f"MatrixFactor(n={len(self.labels)})"

    def _index(self, labels):
        idx = np.fromiter((self._pos.get(lab, -1) for lab in labels), dtype=np.intp,
                          count=len(labels))
        return idx

    def matrix(self, rows, cols) -> sp.csr_matrix:
        if rows == self.labels and cols == self.labels:
            return self.mat
        ri, ci = self._index(rows), self._index(cols)
        pr = sp.csr_matrix((np.ones(np.count_nonzero(ri >= 0)),
                            (np.flatnonzero(ri >= 0), ri[ri >= 0])),
                           shape=(len(rows), len(self.labels)))
        pc = sp.csr_matrix((np.ones(np.count_nonzero(ci >= 0)),
                            (ci[ci >= 0], np.flatnonzero(ci >= 0))),
                           shape=(len(self.labels), len(cols)))
        return (pr @ self.mat @ pc).tocsr()

    def check_domain(self, labels):
        missing = [lab for lab in labels if lab not in self._pos]
        if missing:
            raise ValueError(f"indices {missing[:3]} lie outside the factor's domain")


class SepOperator:
    """Sum of Kronecker products ``sum_terms A_1 ⊗ ... ⊗ A_d``.

    Parameters
    ----------
    terms : list of list
        Each term lists ``d`` factors, each :data:`IDENTITY` or an object
        with ``matrix(rows, cols)``.
    """

    def __init__(self, terms):
        terms = [tuple(t) for t in terms]
        if not terms:
            raise ValueError("operator needs at least one term")
        d = len(terms[0])
        if any(len(t) != d for t in terms):
            raise ValueError("all terms need the same number of factors")
        self.terms = tuple(terms)
        self.d = d

    @property
    def rank(self) -> int:
        return len(self.terms)

    def __repr__(self):
        return f"SepOperator(d={self.d}, rank={self.rank})"

    def is_kronecker_sum(self) -> bool:
        return all(sum(f is not IDENTITY for f in t) <= 1 for t in self.terms)


def laplacian(basis: Basis1D, d: int) -> SepOperator:
    """``-Δ`` on ``(0,1)^d``: term ``j`` carries the 1D stiffness matrix in slot ``j``."""
    if d < 1:
        raise ValueError("d must be positive")
    stiff = StiffnessFactor(basis)
    return SepOperator([[stiff if i == j else IDENTITY for i in range(d)] for j in range(d)])


def _out_sets(u, out):
    if out is None:
        return u.index_sets
    out = [_labels(s) for s in out]
    if len(out) != u.d:
        raise ValueError("need one output index set per dimension")
    return out


def _factor_sum(factors, rows, cols):
    mats = [f.matrix(rows, cols) for f in factors]
    return mats[0] if len(mats) == 1 else sum(mats[1:], mats[0])


def apply(A: SepOperator, u: HTTensor, out=None) -> HTTensor:
    """``R_out A u`` computed exactly in HT format.

    Kronecker sums use the rank-doubling representation (ranks ``<= 2 r``);
    general operators are applied term by term and added.
    """
    if A.d != u.d:
        raise ValueError(f"operator acts on {A.d} dimensions, tensor has {u.d}")
    out = _out_sets(u, out)
    for term in A.terms:
        for j, f in enumerate(term):
            if f is not IDENTITY:
                f.check_domain(u.index_sets[j])
    if A.is_kronecker_sum():
        return _apply_kronecker_sum(A, u, out)
    result = None
    for term in A.terms:
        v = reindex(u, [s if f is IDENTITY else u.index_sets[j]
                        for j, (f, s) in enumerate(zip(term, out))])
        for j, f in enumerate(term):
            if f is not IDENTITY:
                v = leaf_apply(v, j, f.matrix(out[j], u.index_sets[j]), out[j])
        result = v if result is None else add(result, v)
    return result


def _apply_kronecker_sum(A, u, out):
    tree = u.tree
    per_dim = [[] for _ in range(A.d)]
    n_identity = 0
    for term in A.terms:
        ops = [(j, f) for j, f in enumerate(term) if f is not IDENTITY]
        if ops:
            per_dim[ops[0][0]].append(ops[0][1])
        else:
            n_identity += 1
    ident = reindex(u, out)
    if tree.d == 1:
        f = ident.frames[0] * n_identity
        if per_dim[0]:
            f = f + _factor_sum(per_dim[0], out[0], u.index_sets[0]) @ u.frames[0]
        return HTTensor(tree, out, [f], [None], check=False)
    has_op = {}
    frames = []
    for j in range(A.d):
        t = tree.leaf(j)
        has_op[t] = bool(per_dim[j])
        if has_op[t]:
            w = _factor_sum(per_dim[j], out[j], u.index_sets[j]) @ u.frames[j]
            frames.append(np.hstack([ident.frames[j], np.asarray(w)]))
        else:
            frames.append(ident.frames[j])
    transfers = [None] * tree.n_nodes
    for t in tree.postorder():
        if tree.is_leaf(t):
            continue
        left, right = tree.children[t]
        has_op[t] = has_op[left] or has_op[right]
        b = u.transfers[t]
        rl, rr, rt = b.shape
        nl = rl * (2 if has_op[left] else 1)
        nr = rr * (2 if has_op[right] else 1)
        if t == tree.root:
            # only the operator part is needed at the root
            nb = np.zeros((nl, nr, 1))
            if has_op[left]:
                nb[rl:, :rr] += b
            if has_op[right]:
                nb[:rl, rr:] += b
            if n_identity:
                nb[:rl, :rr] += n_identity * b
        else:
            nb = np.zeros((nl, nr, rt * (2 if has_op[t] else 1)))
            nb[:rl, :rr, :rt] = b
            if has_op[left]:
                nb[rl:, :rr, rt:] = b
            if has_op[right]:
                nb[:rl, rr:, rt:] = b
        transfers[t] = nb
    return HTTensor(tree, out, frames, transfers, check=False)


def galerkin_restrict(A: SepOperator, index_sets) -> SepOperator:
    """``R_Λ A E_Λ`` with every factor materialized on ``Λ_j``."""
    index_sets = [_labels(s) for s in index_sets]
    if len(index_sets) != A.d:
        raise ValueError("need one index set per dimension")
    cache = {}
    terms = []
    for term in A.terms:
        new = []
        for j, f in enumerate(term):
            if f is IDENTITY:
                new.append(IDENTITY)
                continue
            key = (id(f), j)
            if key not in cache:
                s = index_sets[j]
                cache[key] = MatrixFactor(s, f.matrix(s, s))
            new.append(cache[key])
        terms.append(new)
    return SepOperator(terms)


def to_sparse(A: SepOperator, index_sets, cols=None) -> sp.csr_matrix:
    """Sparse matrix of ``A`` in the row-major order used by ``densify``."""
    rows = [_labels(s) for s in index_sets]
    cols = rows if cols is None else [_labels(s) for s in cols]
    total = None
    for term in A.terms:
        m = sp.identity(1, format="csr")
        for j, f in enumerate(term):
            if f is IDENTITY:
                fj = _take_rows(np.eye(len(cols[j])), cols[j], rows[j])
                fj = sp.csr_matrix(fj)
            else:
                fj = f.matrix(rows[j], cols[j])
            m = sp.kron(m, fj, format="csr")
        total = m if total is None else total + m
    return total.tocsr()
