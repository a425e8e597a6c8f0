"""Dense factorizations used at tree nodes.

All SVD and QR calls of the tensor layer go through this module so the
kernel can be swapped in one place.
"""

import numpy as np
import scipy.linalg


def svd(a):
    """Thin SVD ``a = u @ diag(s) @ vt`` with singular values descending."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        m, n = a.shape
        k = min(m, n)
        return np.zeros((m, k)), np.zeros(k), np.zeros((k, n))
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # divide-and-conquer occasionally fails to converge; QR iteration is slower but robust
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def left_svd_gram(a):
    """Left singular vectors and values of a wide ``a`` from ``a @ a.T``.

    Much cheaper than :func:`svd` when ``a`` has many more columns than rows;
    singular values below about ``1e-8 * s[0]`` lose relative accuracy.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((a.shape[0], 0)), np.zeros(0)
    ev, vec = np.linalg.eigh(a @ a.T)
    ev, vec = ev[::-1], vec[:, ::-1]
    return vec, np.sqrt(np.clip(ev, 0.0, None))


def qr(a):
    """Thin QR; ``q`` has ``min(m, n)`` orthonormal columns."""
    return np.linalg.qr(np.asarray(a, dtype=float), mode="reduced")
