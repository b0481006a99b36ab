"""Minimal SDP modeling layer with a pluggable conic backend."""

from .affine import AffineExpr, Variable, as_affine, blkdiag, bmat, kron, sy, zeros
from .problem import (
    LmiBlock,
    SdpProblem,
    Solution,
    SolverSettings,
    frobenius_epigraph,
    get_backend,
    register_backend,
    solve,
    strict_margin,
)
from .sdpa import read_sdpa, write_sdpa

__all__ = [
    "AffineExpr",
    "Variable",
    "as_affine",
    "blkdiag",
    "bmat",
    "kron",
    "sy",
    "zeros",
    "LmiBlock",
    "SdpProblem",
    "Solution",
    "SolverSettings",
    "frobenius_epigraph",
    "get_backend",
    "register_backend",
    "solve",
    "strict_margin",
    "read_sdpa",
    "write_sdpa",
]
