"""Numerical laboratory for eigenvector overlaps of non-Hermitian random matrices."""

from .eigen_overlaps import eigensystem, overlap_matrix, partial_schur
from .ensembles import EnsembleSpec, sample
from .hermitization import hermitize
from .self_consistent import solve_m

__all__ = ["EnsembleSpec", "eigensystem", "hermitize", "overlap_matrix", "partial_schur", "sample", "solve_m"]
__version__ = "0.1.0"
