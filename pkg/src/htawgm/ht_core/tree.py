"""Binary dimension trees for the hierarchical Tucker format."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DimTree:
    """Binary tree over the dimensions ``0, ..., d-1``.

    Nodes are numbered in preorder with the root at id 0. Every node holds a
    contiguous range of dimensions, the left child the leading part.

    Attributes
    ----------
    d : int
        Number of dimensions.
    dims : tuple of tuple of int
        Dimensions held by each node.
    children : tuple
        ``(left, right)`` node ids for internal nodes, ``None`` for leaves.
    parent : tuple
        Parent node id, ``None`` for the root.
    leaves : tuple of int
        Node id of the leaf holding each dimension.
    """

    d: int
    dims: tuple
    children: tuple
    parent: tuple
    leaves: tuple

    @property
    def root(self) -> int:
        return 0

    @property
    def n_nodes(self) -> int:
        return len(self.dims)

    def is_leaf(self, t: int) -> bool:
        return self.children[t] is None

    def leaf(self, j: int) -> int:
        """Node id of the leaf holding dimension ``j``."""
        return self.leaves[j]

    def internal_nodes(self) -> list:
        return [t for t in range(self.n_nodes) if self.children[t] is not None]

    def postorder(self) -> list:
        """Node ids with every child listed before its parent."""
        return list(range(self.n_nodes))[::-1]

    def non_root(self) -> list:
        return list(range(1, self.n_nodes))

    def to_list(self) -> list:
        return [list(s) for s in self.dims]


def build_dim_tree(d: int) -> DimTree:
    """Perfectly balanced binary tree over ``d`` dimensions.

    A node holding ``n`` dimensions gives the first ``ceil(n/2)`` to its left
    child, so ``d=3`` splits as ``{0,1} | {2}`` and ``d=4`` as
    ``{0,1} | {2,3}``.

    Parameters
    ----------
    d : int
        Number of dimensions, at least 1.

    Returns
    -------
    DimTree
    """
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    dims, children, parent = [], [], []

    def visit(lo, hi, par):
        t = len(dims)
        dims.append(tuple(range(lo, hi)))
        children.append(None)
        parent.append(par)
        if hi - lo > 1:
            mid = lo + (hi - lo + 1) // 2
            left = visit(lo, mid, t)
            right = visit(mid, hi, t)
            children[t] = (left, right)
        return t

    visit(0, d, None)
    leaves = [0] * d
    for t, c in enumerate(children):
        if c is None:
            leaves[dims[t][0]] = t
    return DimTree(d, tuple(dims), tuple(children), tuple(parent), tuple(leaves))
