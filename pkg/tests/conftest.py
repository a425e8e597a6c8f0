import numpy as np
import pytest

from htawgm import ht_core as ht
from htawgm.wavelet_basis import Basis1D


@pytest.fixture(scope="session")
def basis():
    return Basis1D()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_ht(rng, shape, rank=3, tree=None):
    """Random HT tensor with node ranks at most ``rank``."""
    d = len(shape)
    tree = tree or ht.build_dim_tree(d)
    if d == 1:
        return ht.HTTensor(tree, [range(shape[0])], [rng.standard_normal((shape[0], 1))], [None])
    ranks = {}
    for t in range(tree.n_nodes):
        if t == tree.root:
            ranks[t] = 1
        elif tree.is_leaf(t):
            ranks[t] = min(rank, shape[tree.dims[t][0]])
        else:
            ranks[t] = rank
    frames = [rng.standard_normal((shape[j], ranks[tree.leaf(j)])) for j in range(d)]
    transfers = [None] * tree.n_nodes
    for t in tree.internal_nodes():
        left, right = tree.children[t]
        transfers[t] = rng.standard_normal((ranks[left], ranks[right], ranks[t]))
    return ht.HTTensor(tree, [range(n) for n in shape], frames, transfers)
