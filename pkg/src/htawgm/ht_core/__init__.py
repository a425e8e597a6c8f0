"""Hierarchical Tucker tensor algebra."""

from .tensor import (
    MAX_DENSE_ENTRIES,
    ContractionVector,
    HTTensor,
    TruncationReport,
    add,
    bucket_order,
    coarsen,
    contraction,
    contractions,
    densify,
    elementary,
    from_dense,
    hosvd,
    inner_product,
    leaf_apply,
    node_singular_values,
    norm,
    orthogonalize,
    reindex,
    scale,
    scale_rows,
    to_json,
    truncate,
    truncate_to_rank,
    truncate_with_report,
    zeros,
)
from .tree import DimTree, build_dim_tree

__all__ = [
    "MAX_DENSE_ENTRIES",
    "ContractionVector",
    "DimTree",
    "HTTensor",
    "TruncationReport",
    "add",
    "bucket_order",
    "build_dim_tree",
    "coarsen",
    "contraction",
    "contractions",
    "densify",
    "elementary",
    "from_dense",
    "hosvd",
    "inner_product",
    "leaf_apply",
    "node_singular_values",
    "norm",
    "orthogonalize",
    "reindex",
    "scale",
    "scale_rows",
    "to_json",
    "truncate",
    "truncate_to_rank",
    "truncate_with_report",
    "zeros",
]
