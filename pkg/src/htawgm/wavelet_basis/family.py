"""Continuous orthonormal piecewise-cubic multiwavelets on the unit interval.

The multiresolution space ``V_j`` consists of continuous functions on [0, 1]
that vanish at both ends and lie, on every cell of width ``2^-j``, in the
five-dimensional space

    S = P_3 + span{|y| + t |y|^3},    y = (x - cell midpoint) / width.

Because every element of ``S`` is a cubic on each half cell, ``V_j`` is
contained in ``V_{j+1}``. The complement ``W_j = V_{j+1} ⊖ V_j`` is spanned by

* two *internal* wavelets per cell, supported on that cell;
* an even and an odd *straddler* per interior node, supported on the two
  adjacent cells;
* at each end point the odd straddler folded onto the interval (odd
  reflection), which keeps the Dirichlet condition.

Straddlers at neighbouring nodes overlap on one cell. They are orthogonal to
each other exactly when ``t`` solves ``15 t^2 - 56 t - 560/3 = 0``, i.e.
``t = (28 ± 16 sqrt(14)) / 15``; with that choice the whole collection is
L2-orthonormal.

Reference functions are returned as :class:`PiecewiseCubic` objects in
coordinates where a coarse cell has unit width.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import null_space

T_PLUS = (28.0 + 16.0 * math.sqrt(14.0)) / 15.0
T_MINUS = (28.0 - 16.0 * math.sqrt(14.0)) / 15.0

_DEG = 4  # coefficients per piece (cubics)
_XG, _WG = legendre.leggauss(8)
# Legendre polynomials normalised to unit L2 norm on a unit-width piece
_NORM = np.sqrt(2.0 * np.arange(_DEG) + 1.0)
_LEG = np.array([legendre.legval(_XG, np.eye(_DEG)[k]) for k in range(_DEG)]) * _NORM[:, None]
_END_LEFT = _NORM * (-1.0) ** np.arange(_DEG)
_END_RIGHT = _NORM


class PiecewiseCubic:
    """Piecewise polynomial given by Legendre coefficients on each piece.

    Parameters
    ----------
    knots : array_like, shape (p + 1,)
        Increasing breakpoints.
    coef : array_like, shape (p, m)
        Coefficients of ``P_0, ..., P_{m-1}`` in the local variable
        ``s in [-1, 1]`` of each piece.
    """

    def __init__(self, knots, coef):
        self.knots = np.asarray(knots, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.knots.flags.writeable = False
        self.coef.flags.writeable = False

    @property
    def support(self):
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        xi = x[inside]
        i = np.clip(np.searchsorted(self.knots, xi, side="right") - 1, 0, len(self.coef) - 1)
        a, b = self.knots[i], self.knots[i + 1]
        s = 2.0 * (xi - a) / (b - a) - 1.0
        basis = legendre.legvander(s, self.coef.shape[1] - 1)
        out[inside] = np.einsum("ik,ik->i", basis, self.coef[i])
        return out

    def derivative(self) -> "PiecewiseCubic":
        h = np.diff(self.knots)
        coef = np.array([legendre.legder(c) * (2.0 / hi) for c, hi in zip(self.coef, h)])
        return PiecewiseCubic(self.knots, coef)

    def scaled(self, c) -> "PiecewiseCubic":
        return PiecewiseCubic(self.knots, c * self.coef)

    def restricted(self, lo, hi) -> "PiecewiseCubic":
        keep = (self.knots[:-1] >= lo - 1e-12) & (self.knots[1:] <= hi + 1e-12)
        idx = np.flatnonzero(keep)
        return PiecewiseCubic(self.knots[idx[0]: idx[-1] + 2], self.coef[idx])

    def mirrored(self) -> "PiecewiseCubic":
        """The function ``x -> f(-x)``."""
        flip = (-1.0) ** np.arange(self.coef.shape[1])
        return PiecewiseCubic(-self.knots[::-1], self.coef[::-1] * flip)


class _Mesh:
    """Uniform mesh of pieces carrying L2-orthonormal Legendre coordinates."""

    def __init__(self, a, b, h):
        self.a, self.h = a, h
        self.n = int(round((b - a) / h))

    def piece(self, x):
        return int(round((x - self.a) / self.h))

    def project(self, f, lo, hi):
        out = np.zeros((self.n, _DEG))
        for i in range(self.piece(lo), self.piece(hi)):
            xs = self.a + (i + (_XG + 1) / 2) * self.h
            out[i] = _LEG @ (_WG / 2 * f(xs)) * math.sqrt(self.h)
        return out.ravel()

    def jump(self, x):
        i = self.piece(x)
        e = np.zeros((self.n, _DEG))
        e[i - 1] = _END_RIGHT
        e[i] = -_END_LEFT
        return e.ravel() / math.sqrt(self.h)

    def rows_outside(self, lo, hi):
        inside = np.zeros(self.n, dtype=bool)
        inside[self.piece(lo): self.piece(hi)] = True
        return np.flatnonzero(np.repeat(~inside, _DEG))

    def reflection(self, center):
        """Coordinate map of ``f -> f(2 center - x)``."""
        r = np.zeros((self.n * _DEG, self.n * _DEG))
        flip = (-1.0) ** np.arange(_DEG)
        for i in range(self.n):
            j = self.piece(2 * center - (self.a + (i + 1) * self.h))
            if 0 <= j < self.n:
                r[j * _DEG: (j + 1) * _DEG, i * _DEG: (i + 1) * _DEG] = np.diag(flip)
        return r

    def shift(self, s):
        return np.eye(self.n * _DEG, k=-int(round(s / self.h)) * _DEG)

    def to_piecewise(self, vec, lo, hi):
        c = vec.reshape(self.n, _DEG)[self.piece(lo): self.piece(hi)]
        coef = c * _NORM / math.sqrt(self.h)
        knots = self.a + self.h * np.arange(self.piece(lo), self.piece(hi) + 1)
        return PiecewiseCubic(knots, coef)


def _cell_space(mesh, c, width, t):
    def on_cell(g):
        return lambda x: g((x - c) / width - 0.5)

    gens = [np.ones_like, lambda y: y, lambda y: y**2, lambda y: y**3,
            lambda y: np.abs(y) + t * np.abs(y) ** 3]
    return np.column_stack([mesh.project(on_cell(g), c, c + width) for g in gens])


def _spline_space(mesh, width, t, lo, hi):
    cells = np.arange(lo, hi - 1e-12, width)
    b = np.hstack([_cell_space(mesh, c, width, t) for c in cells])
    jumps = np.array([mesh.jump(x) for x in cells[1:]])
    return b @ null_space(jumps @ b)


def _supported(mesh, b, lo, hi):
    return b @ null_space(b[mesh.rows_outside(lo, hi)])


def _perp(b, a):
    return b @ null_space(a.T @ b)


def _orthonormal(b):
    q, r = np.linalg.qr(b)
    return q[:, np.abs(np.diag(r)) > 1e-10]


def _split(mesh, space, center):
    """Orthonormal bases of the even and odd parts of ``space`` about ``center``."""
    r = mesh.reflection(center)
    return _orthonormal(space + r @ space), _orthonormal(space - r @ space)


def _single(b):
    if b.shape[1] != 1:
        raise RuntimeError(f"expected a one-dimensional subspace, got {b.shape[1]}")
    return b[:, 0]


def _orient(vec, mesh, x0):
    """Sign making the mean over the piece starting at ``x0`` nonnegative."""
    return vec if vec.reshape(mesh.n, _DEG)[mesh.piece(x0), 0] >= 0 else -vec


@functools.lru_cache(maxsize=4)
def reference_family(t: float = T_MINUS) -> dict:
    """Reference scaling functions and wavelets.

    Returns
    -------
    dict
        ``"scaling"``: three functions on [0, 1];
        ``"internal"``: two wavelets on [0, 1] (even, odd about 1/2);
        ``"even"``, ``"odd"``: straddlers on [-1, 1];
        ``"boundary"``: the folded odd straddler on [0, 1];
        ``"cross_gram"``: inner products of straddlers one node apart;
        ``"t"``: the shape parameter.
    """
    mesh = _Mesh(-2.0, 2.0, 0.25)
    coarse = _spline_space(mesh, 1.0, t, -2.0, 2.0)
    fine = _spline_space(mesh, 0.5, t, -2.0, 2.0)

    # scaling functions: coarse elements on [0, 1]
    v0 = _supported(mesh, coarse, 0.0, 1.0)
    ev, od = _split(mesh, v0, 0.5)
    bump = mesh.project(lambda x: x * (1 - x), 0.0, 1.0)
    s0 = ev @ (ev.T @ bump)
    s0 /= np.linalg.norm(s0)
    s1 = _single(_orthonormal(_perp(ev, s0[:, None])))
    if s1.reshape(mesh.n, _DEG)[mesh.piece(0.25)] @ _END_RIGHT < 0:  # value at 1/2
        s1 = -s1
    scaling = [s0, s1, _orient(_single(od), mesh, 0.0)]

    # internal wavelets
    internal = {}
    for c in (-1.0, 0.0):
        w = _orthonormal(_perp(_supported(mesh, fine, c, c + 1.0), coarse))
        we, wo = _split(mesh, w, c + 0.5)
        internal[c] = [_single(we), _single(wo)]
    internal[0.0][0] = _orient(internal[0.0][0], mesh, 0.25)
    internal[0.0][1] = _orient(internal[0.0][1], mesh, 0.0)

    # straddlers around node 0
    n0 = _perp(_supported(mesh, fine, -1.0, 1.0), coarse)
    n0 = _perp(n0, np.column_stack(internal[-1.0] + internal[0.0]))
    se, so = _split(mesh, n0, 0.0)
    se = _orient(_single(se), mesh, -0.25)
    so = _orient(_single(so), mesh, 0.0)

    pair = np.column_stack([se, so])
    cross = pair.T @ (mesh.shift(1.0) @ pair)

    odd = mesh.to_piecewise(so, -1.0, 1.0)
    return {
        "scaling": [mesh.to_piecewise(s, 0.0, 1.0) for s in scaling],
        "internal": [mesh.to_piecewise(w, 0.0, 1.0) for w in internal[0.0]],
        "even": mesh.to_piecewise(se, -1.0, 1.0),
        "odd": odd,
        "boundary": odd.restricted(0.0, 1.0).scaled(math.sqrt(2.0)),
        "cross_gram": cross,
        "t": t,
    }
