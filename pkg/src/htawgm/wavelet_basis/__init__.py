"""Orthonormal cubic multiwavelets on (0, 1) with Dirichlet boundary conditions."""

from .basis import (
    INTERNAL_EVEN,
    INTERNAL_ODD,
    N_SCALING,
    SCALING,
    STRADDLE_EVEN,
    STRADDLE_ODD,
    WAVELET,
    Basis1D,
    IndexSet1D,
    WaveletIndex,
    assemble_stiffness,
    children,
    expand_security_zone,
    h1_norm,
    is_valid,
    level_indices,
    parent,
    rhs_one_coefficients,
    scaling_index,
    stiffness_entry,
    support,
    wavelet_index,
)
from .family import T_MINUS, T_PLUS, PiecewiseCubic, reference_family

__all__ = [
    "INTERNAL_EVEN",
    "INTERNAL_ODD",
    "N_SCALING",
    "SCALING",
    "STRADDLE_EVEN",
    "STRADDLE_ODD",
    "WAVELET",
    "Basis1D",
    "IndexSet1D",
    "PiecewiseCubic",
    "T_MINUS",
    "T_PLUS",
    "WaveletIndex",
    "assemble_stiffness",
    "children",
    "expand_security_zone",
    "h1_norm",
    "is_valid",
    "level_indices",
    "parent",
    "reference_family",
    "rhs_one_coefficients",
    "scaling_index",
    "stiffness_entry",
    "support",
    "wavelet_index",
]
