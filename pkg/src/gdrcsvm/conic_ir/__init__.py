"""Solver-agnostic conic programs: LP, second-order and PSD cones."""

from .expr import Affine, MatExpr, SymVar, smat, svec, tri_index, tri_size, vstack
from .program import Block, CompiledProgram, ConicProgram, Constraint
from .solve import BACKENDS, DEFAULT_TOL, STATUSES, ConicSolution, kkt_residuals, solve
from .validate import ValidationReport, Violation, validate

__all__ = [
    "Affine", "MatExpr", "SymVar", "smat", "svec", "tri_index", "tri_size", "vstack",
    "Block", "CompiledProgram", "ConicProgram", "Constraint",
    "BACKENDS", "DEFAULT_TOL", "STATUSES", "ConicSolution", "kkt_residuals", "solve",
    "ValidationReport", "Violation", "validate",
]
