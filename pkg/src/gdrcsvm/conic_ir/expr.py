"""Affine expressions over named variable blocks.

Symmetric matrices are stored as ``svec`` vectors: the upper triangle read
column by column, ``(0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...``, with
off-diagonal entries multiplied by ``sqrt(2)``.  Under this map
``svec(X) @ svec(Y) == trace(X @ Y)``, and the entry ``(i, j)`` with ``i <= j``
sits at position ``j (j + 1) / 2 + i`` regardless of the matrix order, so
the svec of a leading principal block is a prefix of the full svec.
"""

from __future__ import annotations

import math
from numbers import Real
from typing import Iterable, Mapping, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError

SQRT2 = math.sqrt(2.0)


def tri_size(d: int) -> int:
    return d * (d + 1) // 2


def tri_index(i: int, j: int) -> int:
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"svec needs a square matrix, got shape {M.shape}")
    d = M.shape[0]
    S = 0.5 * (M + M.T)
    iu, ju = _upper_indices(d)
    out = S[iu, ju].copy()
    out[iu != ju] *= SQRT2
    return out


def smat(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if d is None:
        d = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    if tri_size(d) != v.size:
        raise ShapeError(f"vector of length {v.size} is not an svec of a {d}x{d} matrix")
    iu, ju = _upper_indices(d)
    vals = v.copy()
    vals[iu != ju] /= SQRT2
    M = np.zeros((d, d))
    M[iu, ju] = vals
    M[ju, iu] = vals
    return M


_UPPER_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _upper_indices(d: int):
    if d not in _UPPER_CACHE:
        iu = np.concatenate([np.arange(j + 1) for j in range(d)]).astype(int) if d else np.zeros(0, int)
        ju = np.concatenate([np.full(j + 1, j) for j in range(d)]).astype(int) if d else np.zeros(0, int)
        _UPPER_CACHE[d] = (iu, ju)
    return _UPPER_CACHE[d]


Number = Union[Real, np.floating, np.integer]


class Affine:
    """Vector-valued affine function ``sum_b C_b x_b + const`` of variable blocks.

    Coefficients are sparse ``(size, block_size)`` matrices keyed by block
    name.  Supports ``+``, ``-``, scaling by numbers, left multiplication by
    constant arrays (``M @ expr``), row indexing and :func:`vstack`.
    """

    __array_ufunc__ = None  # make ``ndarray @ Affine`` defer to __rmatmul__

    def __init__(self, coeffs: Mapping[str, sp.spmatrix], const):
        self.const = np.asarray(const, dtype=float).ravel()
        m = self.const.size
        self.coeffs: dict[str, sp.csr_matrix] = {}
        for name, C in coeffs.items():
            C = sp.csr_matrix(C)
            if C.shape[0] != m:
                raise ShapeError(f"coefficient for block {name!r} has {C.shape[0]} rows, expected {m}")
            self.coeffs[name] = C

    # construction ------------------------------------------------------------
    @classmethod
    def constant(cls, value) -> "Affine":
        return cls({}, np.atleast_1d(np.asarray(value, dtype=float)))

    @classmethod
    def block(cls, name: str, size: int) -> "Affine":
        return cls({name: sp.identity(size, format="csr")}, np.zeros(size))

    @property
    def size(self) -> int:
        return self.const.size

    def __len__(self) -> int:
        return self.size

    def blocks(self) -> set[str]:
        return set(self.coeffs)

    # arithmetic ----------------------------------------------------------------
    def _coerce(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        arr = np.atleast_1d(np.asarray(other, dtype=float))
        if arr.size == 1 and self.size != 1:
            arr = np.full(self.size, float(arr[0]))
        return Affine.constant(arr)

    def __add__(self, other) -> "Affine":
        other = self._coerce(other)
        a, b = self, other
        if a.size != b.size:
            if a.size == 1:
                a = a.broadcast(b.size)
            elif b.size == 1:
                b = b.broadcast(a.size)
            else:
                raise ShapeError(f"cannot add expressions of sizes {a.size} and {b.size}")
        coeffs = dict(a.coeffs)
        for name, C in b.coeffs.items():
            coeffs[name] = coeffs[name] + C if name in coeffs else C
        return Affine(coeffs, a.const + b.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine({k: -C for k, C in self.coeffs.items()}, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Affine":
        return (-self) + other

    def __mul__(self, alpha) -> "Affine":
        if not isinstance(alpha, (Real, np.floating, np.integer)):
            return NotImplemented
        a = float(alpha)
        return Affine({k: a * C for k, C in self.coeffs.items()}, a * self.const)

    __rmul__ = __mul__

    def __truediv__(self, alpha) -> "Affine":
        return self * (1.0 / float(alpha))

    def __rmatmul__(self, M) -> "Affine":
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M[None, :]
        if M.ndim != 2 or M.shape[1] != self.size:
            raise ShapeError(f"cannot multiply {M.shape} matrix by expression of size {self.size}")
        Ms = sp.csr_matrix(M)
        return Affine({k: Ms @ C for k, C in self.coeffs.items()}, M @ self.const)

    def broadcast(self, m: int) -> "Affine":
        if self.size != 1:
            raise ShapeError("only size-1 expressions broadcast")
        return np.ones((m, 1)) @ self

    def __getitem__(self, idx) -> "Affine":
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Affine({k: C[rows] for k, C in self.coeffs.items()}, self.const[rows])

    def sum(self) -> "Affine":
        return np.ones(self.size) @ self

    def dot(self, c) -> "Affine":
        return np.asarray(c, dtype=float) @ self

    # evaluation ----------------------------------------------------------------
    def value(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for name, C in self.coeffs.items():
            out += C @ np.asarray(values[name], dtype=float).ravel()
        return out

    def __repr__(self) -> str:
        return f"Affine(size={self.size}, blocks={sorted(self.coeffs)})"


def vstack(items: Iterable) -> Affine:
    items = [it if isinstance(it, Affine) else Affine.constant(it) for it in items]
    if not items:
        raise ShapeError("vstack of nothing")
    names = sorted(set().union(*(it.coeffs for it in items)))
    coeffs = {}
    for name in names:
        parts = []
        for it in items:
            C = it.coeffs.get(name)
            if C is None:
                width = next(x.coeffs[name].shape[1] for x in items if name in x.coeffs)
                C = sp.csr_matrix((it.size, width))
            parts.append(C)
        coeffs[name] = sp.vstack(parts, format="csr")
    return Affine(coeffs, np.concatenate([it.const for it in items]))


class SymVar:
    """Symmetric ``n x n`` matrix variable stored as an svec block."""

    def __init__(self, name: str, n: int):
        self.name = name
        self.n = n
        self.vec = Affine.block(name, tri_size(n))

    def entry(self, i: int, j: int) -> Affine:
        scale = 1.0 if i == j else 1.0 / SQRT2
        return scale * self.vec[tri_index(i, j)]

    def inner(self, C) -> Affine:
        """``trace(C @ X)`` for a constant matrix ``C`` (symmetrised)."""
        C = np.asarray(C, dtype=float)
        if C.shape != (self.n, self.n):
            raise ShapeError(f"expected {self.n}x{self.n} matrix, got {C.shape}")
        return svec(C) @ self.vec

    def trace(self) -> Affine:
        return self.inner(np.eye(self.n))

    def mul_vec(self, x) -> Affine:
        """The vector ``X @ x`` for a constant vector ``x``."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise ShapeError(f"expected vector of length {self.n}, got {x.size}")
        M = np.zeros((self.n, tri_size(self.n)))
        for i in range(self.n):
            for j in range(self.n):
                M[i, tri_index(i, j)] += x[j] * (1.0 if i == j else 1.0 / SQRT2)
        return M @ self.vec

    def matrix(self) -> "MatExpr":
        return MatExpr(self.n, self.vec)

    def value(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        return smat(values[self.name], self.n)


class MatExpr:
    """Affine symmetric ``d x d`` matrix expression, held as its svec."""

    def __init__(self, d: int, vec: Affine):
        if vec.size != tri_size(d):
            raise ShapeError(f"svec of a {d}x{d} matrix must have {tri_size(d)} entries, got {vec.size}")
        self.d = d
        self.vec = vec

    @classmethod
    def constant(cls, M) -> "MatExpr":
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ShapeError(f"PSD block must be square, got shape {M.shape}")
        return cls(M.shape[0], Affine.constant(svec(M)))

    @classmethod
    def bordered(cls, top, off: Affine, corner: Affine) -> "MatExpr":
        """``[[top, off], [off^T, corner]]``."""
        if isinstance(top, SymVar):
            top = top.matrix()
        elif not isinstance(top, MatExpr):
            top = cls.constant(top)
        off = off if isinstance(off, Affine) else Affine.constant(off)
        corner = corner if isinstance(corner, Affine) else Affine.constant(corner)
        if off.size != top.d or corner.size != 1:
            raise ShapeError("bordered matrix needs an off-diagonal of length d and a scalar corner")
        return cls(top.d + 1, vstack([top.vec, SQRT2 * off, corner]))

    def __add__(self, other) -> "MatExpr":
        if not isinstance(other, MatExpr):
            other = MatExpr.constant(other)
        if other.d != self.d:
            raise ShapeError("matrix sizes differ")
        return MatExpr(self.d, self.vec + other.vec)

    __radd__ = __add__

    def __neg__(self) -> "MatExpr":
        return MatExpr(self.d, -self.vec)

    def __sub__(self, other) -> "MatExpr":
        if not isinstance(other, MatExpr):
            other = MatExpr.constant(other)
        return self + (-other)

    def __mul__(self, alpha) -> "MatExpr":
        return MatExpr(self.d, float(alpha) * self.vec)

    __rmul__ = __mul__

    def value(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        return smat(self.vec.value(values), self.d)
