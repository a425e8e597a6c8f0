"""Hierarchical Tucker tensors on sparse per-dimension index sets.

A tensor is stored as one frame matrix per dimension, whose rows are labelled
by an explicit list of hashable indices, and one transfer tensor
``B_t[left, right, own]`` per internal node of a :class:`DimTree`. The root
rank is 1. A non-root rank of 0 encodes the zero tensor.

All values are immutable; every operation returns a new tensor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _linalg
from .tree import DimTree, build_dim_tree

MAX_DENSE_ENTRIES = 10**7


def _seal(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _take_rows(frame, labels, new_labels, pos=None):
    """Rows of ``frame`` reordered to ``new_labels``; missing labels give zero rows."""
    if labels == new_labels:
        return frame
    if pos is None:
        pos = {lab: i for i, lab in enumerate(labels)}
    idx = np.fromiter((pos.get(lab, -1) for lab in new_labels), dtype=np.intp,
                      count=len(new_labels))
    out = np.zeros((len(new_labels), frame.shape[1]))
    hit = idx >= 0
    out[hit] = frame[idx[hit]]
    return out


def _union(a, b):
    if a == b:
        return a
    seen = set(a)
    return a + tuple(lab for lab in b if lab not in seen)


class HTTensor:
    """Hierarchical Tucker tensor.

    Parameters
    ----------
    tree : DimTree
    index_sets : sequence of sequences
        Row labels of each frame, one list per dimension.
    frames : sequence of ndarray
        ``frames[j]`` has shape ``(len(index_sets[j]), r_j)``.
    transfers : sequence
        One entry per tree node: an array of shape ``(r_left, r_right, r_t)``
        for internal nodes and ``None`` for leaves. The root has ``r_t = 1``.
    orthogonal : bool
        Marks frames and non-root transfers as orthonormal.
    """

    __slots__ = ("tree", "index_sets", "frames", "transfers", "orthogonal", "_pos")

    def __init__(self, tree, index_sets, frames, transfers, orthogonal=False, check=True):
        self.tree = tree
        self.index_sets = tuple(tuple(s) for s in index_sets)
        self.frames = tuple(_seal(f) for f in frames)
        self.transfers = tuple(None if b is None else _seal(b) for b in transfers)
        self.orthogonal = bool(orthogonal)
        self._pos = [None] * tree.d
        if check:
            self._check()

    def _check(self):
        tree = self.tree
        if len(self.index_sets) != tree.d or len(self.frames) != tree.d:
            raise ValueError("need one index set and one frame per dimension")
        if len(self.transfers) != tree.n_nodes:
            raise ValueError("need one transfer entry per tree node")
        for j, (labels, f) in enumerate(zip(self.index_sets, self.frames)):
            if f.ndim != 2 or f.shape[0] != len(labels):
                raise ValueError(f"frame {j} has shape {f.shape}, expected ({len(labels)}, r)")
            if len(set(labels)) != len(labels):
                raise ValueError(f"index set {j} has repeated labels")
        if tree.d == 1:
            if self.frames[0].shape[1] != 1:
                raise ValueError("root rank must be 1")
            return
        for t in tree.internal_nodes():
            b = self.transfers[t]
            if b is None or b.ndim != 3:
                raise ValueError(f"internal node {t} needs a 3-way transfer tensor")
            left, right = tree.children[t]
            if b.shape[0] != self.rank(left) or b.shape[1] != self.rank(right):
                raise ValueError(f"transfer tensor of node {t} does not match child ranks")
        if self.transfers[tree.root].shape[2] != 1:
            raise ValueError("root rank must be 1")
        if not np.all(np.isfinite(self.transfers[tree.root])):
            raise ValueError("non-finite entries in root transfer tensor")

    # -- shape and ranks ---------------------------------------------------

    @property
    def d(self) -> int:
        return self.tree.d

    @property
    def shape(self) -> tuple:
        return tuple(len(s) for s in self.index_sets)

    def rank(self, t: int) -> int:
        if self.tree.is_leaf(t):
            return self.frames[self.tree.dims[t][0]].shape[1]
        return self.transfers[t].shape[2]

    @property
    def ranks(self) -> tuple:
        """Rank of every tree node, indexed by node id."""
        return tuple(self.rank(t) for t in range(self.tree.n_nodes))

    @property
    def max_rank(self) -> int:
        """Largest non-root rank (1 for ``d = 1``)."""
        if self.d == 1:
            return 1
        return max(self.rank(t) for t in self.tree.non_root())

    def positions(self, j: int) -> dict:
        """Map from label to row of frame ``j``."""
        if self._pos[j] is None:
            self._pos[j] = {lab: i for i, lab in enumerate(self.index_sets[j])}
        return self._pos[j]

    def __repr__(self):
        return f"HTTensor(d={self.d}, shape={self.shape}, ranks={self.ranks})"

    # -- arithmetic sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return scale(self, 1.0 / c)


# -- constructors -----------------------------------------------------------


def _tree_for(tree, d):
    if tree is None:
        return build_dim_tree(d)
    if tree.d != d:
        raise ValueError(f"tree has {tree.d} dimensions, expected {d}")
    return tree


def _default_labels(shape, index_sets):
    if index_sets is None:
        return [tuple(range(n)) for n in shape]
    return [tuple(s) for s in index_sets]


def zeros(index_sets, tree=None) -> HTTensor:
    """Zero tensor of rank 0 on the given index sets."""
    index_sets = [tuple(s) for s in index_sets]
    d = len(index_sets)
    tree = _tree_for(tree, d)
    if d == 1:
        return HTTensor(tree, index_sets, [np.zeros((len(index_sets[0]), 1))], [None])
    frames = [np.zeros((len(s), 0)) for s in index_sets]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        transfers[t] = np.zeros((0, 0, 1 if t == tree.root else 0))
    return HTTensor(tree, index_sets, frames, transfers, orthogonal=True)


def elementary(vectors, index_sets=None, tree=None) -> HTTensor:
    """Rank-1 tensor ``v_1 ⊗ ... ⊗ v_d``."""
    vectors = [np.asarray(v, dtype=float).ravel() for v in vectors]
    d = len(vectors)
    tree = _tree_for(tree, d)
    index_sets = _default_labels([len(v) for v in vectors], index_sets)
    frames = [v[:, None] for v in vectors]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        transfers[t] = np.ones((1, 1, 1))
    return HTTensor(tree, index_sets, frames, transfers)


def _matricize(x, dims):
    """Matricization of dense ``x`` with the contiguous ``dims`` as rows."""
    lo, hi = dims[0], dims[-1] + 1
    n = x.shape
    rows = math.prod(n[lo:hi])
    y = x.reshape(math.prod(n[:lo]), rows, math.prod(n[hi:]))
    return y.transpose(1, 0, 2).reshape(rows, -1)


def from_dense(x, index_sets=None, tree=None, rtol=1e-14) -> HTTensor:
    """Exact HT representation of a dense array by node-wise SVDs.

    Singular values below ``rtol`` times the largest one are dropped.
    """
    x = np.asarray(x, dtype=float)
    d = x.ndim
    tree = _tree_for(tree, d)
    index_sets = _default_labels(x.shape, index_sets)
    if d == 1:
        return HTTensor(tree, index_sets, [x[:, None]], [None])
    basis = {}
    for t in tree.non_root():
        u, s, _ = _linalg.svd(_matricize(x, tree.dims[t]))
        keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, bool)
        basis[t] = u[:, keep]
    frames = [basis[tree.leaf(j)] for j in range(d)]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        left, right = tree.children[t]
        ul, ur = basis[left], basis[right]
        nl, nr = ul.shape[0], ur.shape[0]
        ut = x.reshape(-1, 1) if t == tree.root else basis[t]
        ut = ut.reshape(nl, nr, ut.shape[-1])
        transfers[t] = np.einsum("ia,jb,ijk->abk", ul, ur, ut)
    return HTTensor(tree, index_sets, frames, transfers)


# -- basic operations -------------------------------------------------------


def _check_compatible(u, v):
    if not isinstance(u, HTTensor) or not isinstance(v, HTTensor):
        raise TypeError("operands must be HTTensor values")
    if u.tree != v.tree:
        raise ValueError("tensors live on different dimension trees")


def add(u: HTTensor, v: HTTensor) -> HTTensor:
    """Exact sum; index sets are unioned and node ranks add."""
    _check_compatible(u, v)
    tree = u.tree
    labels = [_union(a, b) for a, b in zip(u.index_sets, v.index_sets)]
    fu = [_take_rows(f, a, lab, u.positions(j) if a != lab else None)
          for j, (f, a, lab) in enumerate(zip(u.frames, u.index_sets, labels))]
    fv = [_take_rows(f, a, lab, v.positions(j) if a != lab else None)
          for j, (f, a, lab) in enumerate(zip(v.frames, v.index_sets, labels))]
    if tree.d == 1:
        return HTTensor(tree, labels, [fu[0] + fv[0]], [None], check=False)
    frames = [np.hstack([a, b]) for a, b in zip(fu, fv)]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        bu, bv = u.transfers[t], v.transfers[t]
        lu, ru, ku = bu.shape
        lv, rv, kv = bv.shape
        if t == tree.root:
            b = np.zeros((lu + lv, ru + rv, 1))
            b[:lu, :ru] = bu
            b[lu:, ru:] = bv
        else:
            b = np.zeros((lu + lv, ru + rv, ku + kv))
            b[:lu, :ru, :ku] = bu
            b[lu:, ru:, ku:] = bv
        transfers[t] = b
    return HTTensor(tree, labels, frames, transfers, check=False)


def scale(u: HTTensor, c: float) -> HTTensor:
    """``c * u``, applied to the root transfer tensor."""
    c = float(c)
    tree = u.tree
    if tree.d == 1:
        return HTTensor(tree, u.index_sets, [c * u.frames[0]], [None],
                        orthogonal=u.orthogonal, check=False)
    transfers = list(u.transfers)
    transfers[tree.root] = c * transfers[tree.root]
    return HTTensor(tree, u.index_sets, u.frames, transfers, orthogonal=u.orthogonal,
                    check=False)


def _aligned_gram(u, v, j):
    fu, fv = u.frames[j], v.frames[j]
    if u.index_sets[j] == v.index_sets[j]:
        return fu.T @ fv
    pos = v.positions(j)
    idx = np.fromiter((pos.get(lab, -1) for lab in u.index_sets[j]), dtype=np.intp,
                      count=len(u.index_sets[j]))
    hit = idx >= 0
    return fu[hit].T @ fv[idx[hit]]


def inner_product(u: HTTensor, v: HTTensor) -> float:
    """Euclidean inner product, by leaf Gram matrices propagated to the root."""
    _check_compatible(u, v)
    tree = u.tree
    if tree.d == 1:
        return float(_aligned_gram(u, v, 0)[0, 0])
    gram = {tree.leaf(j): _aligned_gram(u, v, j) for j in range(tree.d)}
    for t in tree.postorder():
        if tree.is_leaf(t):
            continue
        left, right = tree.children[t]
        tmp = np.tensordot(u.transfers[t], gram[left], axes=([0], [0]))  # b k c
        tmp = np.tensordot(tmp, gram[right], axes=([0], [0]))  # k c e
        gram[t] = np.tensordot(tmp, v.transfers[t], axes=([1, 2], [0, 1]))
    return float(gram[tree.root][0, 0])


def _mode12(b, ml, mr):
    """``b x_1 ml x_2 mr`` for a transfer tensor ``b`` of shape ``(a, c, k)``."""
    tmp = np.tensordot(ml, b, axes=([1], [0]))  # i c k
    return np.tensordot(mr, tmp, axes=([1], [1])).transpose(1, 0, 2)


def orthogonalize(u: HTTensor) -> HTTensor:
    """Equivalent representation with orthonormal frames and non-root transfers."""
    if u.orthogonal:
        return u
    tree = u.tree
    if tree.d == 1:
        return HTTensor(tree, u.index_sets, u.frames, [None], orthogonal=True, check=False)
    frames = list(u.frames)
    transfers = list(u.transfers)
    r = {}
    for t in tree.postorder():
        if tree.is_leaf(t):
            j = tree.dims[t][0]
            frames[j], r[t] = _linalg.qr(frames[j])
            continue
        left, right = tree.children[t]
        b = _mode12(transfers[t], r[left], r[right])
        if t == tree.root:
            transfers[t] = b
        else:
            nl, nr, k = b.shape
            q, r[t] = _linalg.qr(b.reshape(nl * nr, k))
            transfers[t] = q.reshape(nl, nr, q.shape[1])
    return HTTensor(tree, u.index_sets, frames, transfers, orthogonal=True, check=False)


def _root_norm(w: HTTensor) -> float:
    if w.d == 1:
        return float(np.linalg.norm(w.frames[0]))
    return float(np.linalg.norm(w.transfers[w.tree.root]))


def norm(u: HTTensor) -> float:
    """Euclidean norm, read off the root after orthogonalization."""
    w = orthogonalize(u)
    if w.d == 1:
        return float(np.linalg.norm(w.frames[0]))
    return float(np.linalg.norm(w.transfers[w.tree.root]))


# below this ratio of truncation tolerance to norm the Gram shortcut is not accurate enough
_GRAM_REL = 1e-6


def _node_svds(w: HTTensor, floor: float = 0.0) -> dict:
    """Left singular vectors and values of every non-root matricization.

    ``w`` must be orthogonal. Returns ``{t: (U_t, sigma_t)}`` with ``U_t``
    expressed in the coordinates of the node's rank space. When singular
    values below ``floor`` are irrelevant and ``floor`` is not tiny relative
    to the norm, wide matricizations use the Gram matrix instead of an SVD.
    """
    tree = w.tree
    gram = floor > 0 and floor >= _GRAM_REL * _root_norm(w)
    factor = {tree.root: np.ones((1, 1))}
    out = {}
    for t in range(tree.n_nodes):
        if tree.is_leaf(t):
            continue
        left, right = tree.children[t]
        m = np.tensordot(w.transfers[t], factor[t], axes=([2], [0]))  # a b m
        nl, nr, k = m.shape
        for child, mat in ((left, m.reshape(nl, nr * k)),
                           (right, m.transpose(1, 0, 2).reshape(nr, nl * k))):
            if gram and mat.shape[1] >= 2 * mat.shape[0]:
                uc, s = _linalg.left_svd_gram(mat)
            else:
                uc, s, _ = _linalg.svd(mat)
            out[child] = (uc, s)
            factor[child] = uc * s
    return out


def node_singular_values(u: HTTensor) -> dict:
    """Singular values of the matricization at every non-root node."""
    return {t: s for t, (_, s) in _node_svds(orthogonalize(u)).items()}


# -- truncation -------------------------------------------------------------


@dataclass
class TruncationReport:
    """Discarded singular-value tails of an HOSVD truncation.

    Attributes
    ----------
    tails : dict
        Node id to the norm of the discarded singular values.
    ranks : dict
        Node id to the retained rank.
    """

    tails: dict = field(default_factory=dict)
    ranks: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        """``sqrt(sum of squared tails)``, an upper bound of the truncation error."""
        return math.sqrt(sum(e * e for e in self.tails.values()))


def _pick_rank(s, eps_node, rmax):
    tail2 = np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]])
    r = len(s)
    if eps_node is not None:
        r = int(np.argmax(tail2 <= eps_node * eps_node))
    if rmax is not None:
        r = min(r, rmax)
    return r, math.sqrt(tail2[r])


def hosvd(u: HTTensor, eps_node=None, rmax=None):
    """Root-to-leaves HOSVD truncation.

    Every non-root node keeps the smallest rank whose discarded tail is at most
    ``eps_node`` and at most ``rmax``.

    Returns
    -------
    tensor : HTTensor
    report : TruncationReport
    """
    w = orthogonalize(u)
    tree = w.tree
    report = TruncationReport()
    if tree.d == 1:
        return w, report
    svds = _node_svds(w, floor=eps_node or 0.0)
    proj = {}
    for t in tree.non_root():
        uc, s = svds[t]
        r, tail = _pick_rank(s, eps_node, rmax)
        proj[t] = uc[:, :r]
        report.tails[t] = tail
        report.ranks[t] = r
    frames = [w.frames[j] @ proj[tree.leaf(j)] for j in range(tree.d)]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        left, right = tree.children[t]
        b = _mode12(w.transfers[t], proj[left].T, proj[right].T)
        if t != tree.root:
            b = np.tensordot(b, proj[t], axes=([2], [0]))
        transfers[t] = b
    return HTTensor(tree, w.index_sets, frames, transfers, check=False), report


def truncate(u: HTTensor, eps: float) -> HTTensor:
    """HOSVD truncation with ``||u - result|| <= eps``.

    The budget is split evenly over the ``2d - 2`` non-root nodes.
    """
    return truncate_with_report(u, eps)[0]


def truncate_with_report(u: HTTensor, eps: float):
    """Like :func:`truncate`, also returning the :class:`TruncationReport`."""
    if not eps >= 0:
        raise ValueError(f"truncation tolerance must be non-negative, got {eps}")
    if u.d == 1:
        return orthogonalize(u), TruncationReport()
    return hosvd(u, eps_node=eps / math.sqrt(2 * u.d - 2))


def truncate_to_rank(u: HTTensor, rmax: int):
    """HOSVD truncation to node ranks at most ``rmax``.

    Returns
    -------
    tensor : HTTensor
    report : TruncationReport
        Per-node discarded tails; ``report.bound`` bounds the error.
    """
    if int(rmax) != rmax or rmax < 1:
        raise ValueError(f"rank bound must be a positive integer, got {rmax}")
    return hosvd(u, rmax=int(rmax))


# -- contractions and coarsening -------------------------------------------


@dataclass(frozen=True)
class ContractionVector:
    """Slice norms ``pi_j(u)[lambda]`` of one dimension."""

    dim: int
    labels: tuple
    values: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.values.tolist()))

    def __len__(self):
        return len(self.labels)


def _leaf_contractions(w: HTTensor) -> list:
    tree = w.tree
    if tree.d == 1:
        return [np.abs(w.frames[0][:, 0])]
    svds = _node_svds(w)
    out = []
    for j in range(tree.d):
        uc, s = svds[tree.leaf(j)]
        out.append(np.linalg.norm(w.frames[j] @ (uc * s), axis=1))
    return out


def contractions(u: HTTensor) -> list:
    """Contraction vectors of all dimensions."""
    w = orthogonalize(u)
    return [ContractionVector(j, w.index_sets[j], _seal(p))
            for j, p in enumerate(_leaf_contractions(w))]


def contraction(u: HTTensor, j: int) -> ContractionVector:
    """Contraction ``pi_j(u)``: norms of the slices with ``lambda_j`` fixed."""
    if int(j) != j or not 0 <= j < u.d:
        raise IndexError(f"dimension {j} out of range for d={u.d}")
    return contractions(u)[int(j)]


def bucket_order(values):
    """Approximate ascending order of nonnegative ``values``.

    Bucket ``k`` holds values in ``(2^(-(k+1)/2), 2^(-k/2)] * max``; buckets
    are visited from small values to large, zeros first, and entries inside a
    bucket keep their input order.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.zeros(0, dtype=np.intp)
    vmax = values.max()
    if vmax <= 0:
        return np.arange(values.size)
    with np.errstate(divide="ignore"):
        key = np.floor(-2.0 * np.log2(values / vmax))
    key[values <= 0] = np.inf
    key = np.minimum(key, 4096).astype(np.int64)
    return np.argsort(-key, kind="stable")


def coarsen(u: HTTensor, eps: float) -> HTTensor:
    """Drop 1D indices with the smallest contraction values.

    Entries are discarded in approximate ascending order while the norm of all
    discarded contraction values stays at most ``eps``; the result satisfies
    ``||u - result|| <= eps``.
    """
    if not eps >= 0:
        raise ValueError(f"coarsening tolerance must be non-negative, got {eps}")
    if eps == 0:
        return u
    w = orthogonalize(u)
    pis = _leaf_contractions(w)
    vals = np.concatenate(pis)
    owner = np.concatenate([np.full(len(p), j) for j, p in enumerate(pis)])
    row = np.concatenate([np.arange(len(p)) for p in pis])
    order = bucket_order(vals)
    cum = np.cumsum(vals[order] ** 2)
    n_drop = int(np.searchsorted(cum, eps * eps, side="right"))
    drop = order[:n_drop]
    keep = [np.ones(len(p), dtype=bool) for p in pis]
    for j, i in zip(owner[drop], row[drop]):
        keep[j][i] = False
    labels = [tuple(lab for lab, k in zip(w.index_sets[j], keep[j]) if k)
              for j in range(w.d)]
    frames = [w.frames[j][keep[j]] for j in range(w.d)]
    return HTTensor(w.tree, labels, frames, w.transfers, check=False)


# -- reindexing and leaf maps ----------------------------------------------


def reindex(u: HTTensor, index_sets) -> HTTensor:
    """Restriction/extension of ``u`` to the product of ``index_sets``.

    Labels absent from ``u`` get zero rows, labels absent from ``index_sets``
    are dropped.
    """
    index_sets = [tuple(s) for s in index_sets]
    if len(index_sets) != u.d:
        raise ValueError("need one index set per dimension")
    frames = [_take_rows(f, a, b, u.positions(j) if a != b else None)
              for j, (f, a, b) in enumerate(zip(u.frames, u.index_sets, index_sets))]
    return HTTensor(u.tree, index_sets, frames, u.transfers, check=False)


def leaf_apply(u: HTTensor, j: int, matrix, labels=None) -> HTTensor:
    """Apply a matrix to frame ``j``: ``U_j <- matrix @ U_j``.

    ``labels`` names the rows of the result and defaults to the old labels.
    """
    frames = list(u.frames)
    frames[j] = np.asarray(matrix @ u.frames[j])
    index_sets = list(u.index_sets)
    if labels is not None:
        index_sets[j] = tuple(labels)
    if frames[j].shape[0] != len(index_sets[j]):
        raise ValueError("matrix rows do not match the new labels")
    return HTTensor(u.tree, index_sets, frames, u.transfers, check=False)


def scale_rows(u: HTTensor, weights) -> HTTensor:
    """Diagonal scaling of every frame, ``U_j <- diag(weights[j]) U_j``."""
    frames = [np.asarray(w, dtype=float)[:, None] * f for w, f in zip(weights, u.frames)]
    return HTTensor(u.tree, u.index_sets, frames, u.transfers, check=False)


# -- dense oracle and debug dump --------------------------------------------


def densify(u: HTTensor) -> np.ndarray:
    """Full array of ``u`` in the order of its index sets (test oracle)."""
    size = math.prod(u.shape)
    if size > MAX_DENSE_ENTRIES:
        raise MemoryError(f"refusing to densify {size} > {MAX_DENSE_ENTRIES} entries")
    tree = u.tree
    if tree.d == 1:
        return np.array(u.frames[0][:, 0])
    basis = {}
    for t in tree.postorder():
        if tree.is_leaf(t):
            basis[t] = u.frames[tree.dims[t][0]]
            continue
        left, right = tree.children[t]
        ul, ur = basis.pop(left), basis.pop(right)
        m = np.einsum("ia,jb,abk->ijk", ul, ur, u.transfers[t], optimize=True)
        basis[t] = m.reshape(ul.shape[0] * ur.shape[0], m.shape[2])
    return basis[tree.root][:, 0].reshape(u.shape)


def to_json(u: HTTensor, include_data: bool = False) -> str:
    """JSON dump with tree, ranks and index sets."""
    doc = {
        "d": u.d,
        "tree": u.tree.to_list(),
        "ranks": list(u.ranks),
        "index_sets": [[repr(lab) for lab in s] for s in u.index_sets],
    }
    if include_data:
        doc["frames"] = [f.tolist() for f in u.frames]
        doc["transfers"] = [None if b is None else b.tolist() for b in u.transfers]
    return json.dumps(doc)
