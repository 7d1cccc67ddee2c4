"""Conic program container and its compilation to solver standard form.

The compiled form is ``min c^T x + c0`` subject to ``A x + s = b`` with
``s`` in the product cone ``{0}^z x R_+^l x Q^{q_1} x ... x S^{d_1} x ...``
(PSD parts in svec).  Every user constraint is an affine expression ``e(x)``
required to lie in a cone; compiling it means setting ``s = e(x)``, i.e.
rows ``A = -C`` and ``b = d`` for ``e(x) = C x + d``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError
from .expr import Affine, MatExpr, SymVar, tri_size, vstack

CONSTRAINT_KINDS = ("eq", "ineq", "soc", "normcap", "psd")


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # "vector" or "symmetric"
    size: int
    dim: int  # vector length, or matrix order for symmetric blocks


@dataclass
class Constraint:
    """One user-level constraint.

    ``eq``: ``expr == 0``.  ``ineq``: ``expr >= 0``.  ``soc``: ``expr[0] >=
    ||expr[1:]||_2``.  ``normcap``: ``bound >= ||expr||_q``.  ``psd``:
    ``matrix`` is positive semidefinite.
    """

    kind: str
    label: str
    expr: Optional[Affine] = None
    bound: Optional[Affine] = None
    order: float = 2.0
    matrix: Optional[MatExpr] = None

    def margin(self, values) -> float:
        """Signed slack of the constraint at ``values`` (negative means violated).

        Equalities report ``-max|expr|``.
        """
        if self.kind == "eq":
            r = self.expr.value(values)
            return -float(np.max(np.abs(r))) if r.size else 0.0
        if self.kind == "ineq":
            r = self.expr.value(values)
            return float(np.min(r)) if r.size else 0.0
        if self.kind == "soc":
            r = self.expr.value(values)
            return float(r[0] - np.linalg.norm(r[1:]))
        if self.kind == "normcap":
            r = self.expr.value(values)
            return float(self.bound.value(values)[0] - np.linalg.norm(r, ord=self.order))
        M = self.matrix.value(values)
        return float(np.linalg.eigvalsh(M)[0])


@dataclass
class CompiledProgram:
    c: np.ndarray
    c0: float
    A: sp.csc_matrix
    b: np.ndarray
    zero: int
    nonneg: int
    soc: list[int]
    psd: list[int]
    layout: dict[str, tuple[int, int]]
    n_vars: int

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def split_values(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.array(x[o:o + k]) for name, (o, k) in self.layout.items()}


class ConicProgram:
    """Variables, a linear objective (minimised) and labelled conic constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.blocks: dict[str, Block] = {}
        self.constraints: list[Constraint] = []
        self.objective: Affine = Affine.constant(0.0)
        # free-form context for builders: references to variables and model data
        self.handles: dict = {}
        self.meta: dict = {}

    # variables -------------------------------------------------------------------
    def _declare(self, name: str, kind: str, size: int, dim: int):
        if name in self.blocks:
            raise ValueError(f"block {name!r} already declared")
        if name.startswith("_"):
            raise ValueError("block names starting with '_' are reserved")
        self.blocks[name] = Block(name, kind, size, dim)

    def variable(self, name: str, size: int = 1) -> Affine:
        if size < 1:
            raise ShapeError("variable size must be positive")
        self._declare(name, "vector", size, size)
        return Affine.block(name, size)

    def symmetric(self, name: str, n: int) -> SymVar:
        if n < 1:
            raise ShapeError("matrix order must be positive")
        self._declare(name, "symmetric", tri_size(n), n)
        return SymVar(name, n)

    # objective and constraints -----------------------------------------------------
    def minimize(self, expr: Affine) -> None:
        expr = expr if isinstance(expr, Affine) else Affine.constant(expr)
        if expr.size != 1:
            raise ShapeError("objective must be scalar")
        self._check_blocks(expr)
        self.objective = expr

    def _check_blocks(self, expr: Affine) -> None:
        for name, C in expr.coeffs.items():
            if name not in self.blocks:
                raise ShapeError(f"expression references undeclared block {name!r}")
            if C.shape[1] != self.blocks[name].size:
                raise ShapeError(f"block {name!r} has size {self.blocks[name].size}, coefficient has {C.shape[1]} columns")

    def _add(self, con: Constraint) -> int:
        for e in (con.expr, con.bound, con.matrix.vec if con.matrix is not None else None):
            if e is not None:
                self._check_blocks(e)
        self.constraints.append(con)
        return len(self.constraints) - 1

    def add_eq(self, expr: Affine, label: str = "") -> int:
        return self._add(Constraint("eq", label, expr=_as_affine(expr)))

    def add_ineq(self, expr: Affine, label: str = "") -> int:
        """Register ``expr >= 0`` componentwise."""
        return self._add(Constraint("ineq", label, expr=_as_affine(expr)))

    def add_soc(self, t: Affine, vec: Affine, label: str = "") -> int:
        """Register ``||vec||_2 <= t``."""
        t = _as_affine(t)
        if t.size != 1:
            raise ShapeError("second-order cone bound must be scalar")
        return self._add(Constraint("soc", label, expr=vstack([t, _as_affine(vec)])))

    def add_norm_cap(self, vec: Affine, bound: Affine, order: float, label: str = "") -> int:
        """Register ``||vec||_order <= bound`` for order 1, 2 or inf."""
        order = float(order)
        if order not in (1.0, 2.0, math.inf):
            raise ValueError(f"norm cap order must be 1, 2 or inf, got {order}")
        bound = _as_affine(bound)
        if bound.size != 1:
            raise ShapeError("norm cap bound must be scalar")
        return self._add(Constraint("normcap", label, expr=_as_affine(vec), bound=bound, order=order))

    def add_psd_block(self, matrix: Union[MatExpr, SymVar, np.ndarray], label: str = "") -> int:
        if isinstance(matrix, SymVar):
            matrix = matrix.matrix()
        elif not isinstance(matrix, MatExpr):
            matrix = MatExpr.constant(matrix)
        return self._add(Constraint("psd", label, matrix=matrix))

    # compilation -----------------------------------------------------------------
    def compile(self) -> CompiledProgram:
        """Lower to ``A x + s = b, s in K`` with cones ordered zero, nonneg, soc, psd."""
        layout: dict[str, tuple[int, int]] = {}
        off = 0
        for blk in self.blocks.values():
            layout[blk.name] = (off, blk.size)
            off += blk.size

        zero_rows: list[Affine] = []
        lin_rows: list[Affine] = []
        soc_rows: list[Affine] = []
        psd_rows: list[tuple[int, Affine]] = []
        aux = 0
        for con in self.constraints:
            if con.kind == "eq":
                zero_rows.append(con.expr)
            elif con.kind == "ineq":
                lin_rows.append(con.expr)
            elif con.kind == "soc":
                soc_rows.append(con.expr)
            elif con.kind == "psd":
                psd_rows.append((con.matrix.d, con.matrix.vec))
            elif con.order == 2.0:
                soc_rows.append(vstack([con.bound, con.expr]))
            elif math.isinf(con.order):
                lin_rows.append(con.bound - con.expr)
                lin_rows.append(con.bound + con.expr)
            else:
                # |x_i| <= t_i, sum t_i <= bound with a fresh auxiliary block
                name = f"_aux{aux}"
                aux += 1
                k = con.expr.size
                layout[name] = (off, k)
                off += k
                t = Affine.block(name, k)
                lin_rows.append(t - con.expr)
                lin_rows.append(t + con.expr)
                lin_rows.append(con.bound - t.sum())

        parts = zero_rows + lin_rows + soc_rows + [e for _, e in psd_rows]
        n_vars = off
        if parts:
            rows = vstack(parts)
            A = -_to_matrix(rows, layout, n_vars)
            b = rows.const.copy()
        else:
            A = sp.csc_matrix((0, n_vars))
            b = np.zeros(0)
        obj = self.objective
        c = np.asarray(_to_matrix(obj, layout, n_vars).todense()).ravel()
        return CompiledProgram(
            c=c, c0=float(obj.const[0]), A=sp.csc_matrix(A), b=b,
            zero=sum(e.size for e in zero_rows), nonneg=sum(e.size for e in lin_rows),
            soc=[e.size for e in soc_rows], psd=[d for d, _ in psd_rows],
            layout=layout, n_vars=n_vars,
        )

    # serialisation -----------------------------------------------------------------
    def to_dict(self) -> dict:
        def triplets(expr: Affine):
            out = []
            for name in sorted(expr.coeffs):
                C = expr.coeffs[name].tocoo()
                order = np.lexsort((C.col, C.row))
                out.extend([int(C.row[i]), name, int(C.col[i]), float(C.data[i])] for i in order if C.data[i] != 0)
            return out

        cons = []
        for con in self.constraints:
            entry = {"kind": con.kind, "label": con.label}
            if con.kind == "psd":
                entry["dim"] = con.matrix.d
                entry["triplets"] = triplets(con.matrix.vec)
                entry["const"] = con.matrix.vec.const.tolist()
            else:
                entry["rows"] = con.expr.size
                entry["triplets"] = triplets(con.expr)
                entry["const"] = con.expr.const.tolist()
            if con.kind == "normcap":
                entry["order"] = "inf" if math.isinf(con.order) else con.order
                entry["bound"] = {"triplets": triplets(con.bound), "const": con.bound.const.tolist()}
            cons.append(entry)
        return {
            "name": self.name,
            "format": "svec: upper triangle, column-major, off-diagonals scaled by sqrt(2)",
            "blocks": [{"name": b.name, "kind": b.kind, "size": b.size, "dim": b.dim} for b in self.blocks.values()],
            "objective": {"triplets": triplets(self.objective), "const": float(self.objective.const[0])},
            "constraints": cons,
        }

    def to_json(self, indent: Optional[int] = 1) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def psd_dimension(self) -> int:
        return sum(c.matrix.d for c in self.constraints if c.kind == "psd")

    def __repr__(self) -> str:
        kinds = {k: sum(c.kind == k for c in self.constraints) for k in CONSTRAINT_KINDS}
        return f"ConicProgram({self.name!r}, blocks={len(self.blocks)}, constraints={kinds})"


def _as_affine(e) -> Affine:
    return e if isinstance(e, Affine) else Affine.constant(e)


def _to_matrix(expr: Affine, layout, n_vars: int) -> sp.csc_matrix:
    blocks = []
    for name, (_, k) in layout.items():
        C = expr.coeffs.get(name)
        blocks.append(C if C is not None else sp.csr_matrix((expr.size, k)))
    if not blocks:
        return sp.csc_matrix((expr.size, n_vars))
    return sp.hstack(blocks, format="csc")
