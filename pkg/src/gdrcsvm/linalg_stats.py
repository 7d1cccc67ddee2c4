"""Dense symmetric linear algebra and class-wise moment estimation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InsufficientData, RangeError, ShapeError

SYMMETRY_TOL = 1e-12
# relative floor added to the covariance diagonal: floor = FLOOR_SCALE * trace / n
FLOOR_SCALE = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MomentProfile:
    """Sample moments of one class plus the derived factors.

    ``sqrt_factor`` is ``eigvecs @ diag(sqrt(eigvals))`` so that
    ``sqrt_factor @ sqrt_factor.T == covariance``; its leading columns are the
    principal directions scaled by the square root of their variance.
    """

    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int
    eigvals: Optional[np.ndarray] = None
    eigvecs: Optional[np.ndarray] = None
    sqrt_factor: Optional[np.ndarray] = None
    gamma1: float = 0.0
    gamma2: float = 1.0

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def has_eigen(self) -> bool:
        return self.eigvals is not None

    def sym_sqrt(self) -> np.ndarray:
        """Symmetric square root ``U D^{1/2} U^T`` of the covariance."""
        _require_eigen(self)
        return (self.eigvecs * np.sqrt(self.eigvals)) @ self.eigvecs.T

    def inv_sym_sqrt(self) -> np.ndarray:
        _require_eigen(self)
        return (self.eigvecs / np.sqrt(self.eigvals)) @ self.eigvecs.T


def _require_eigen(profile):
    if profile.eigvals is None:
        raise ShapeError("profile has no eigendecomposition; use moment_profile()")


def _as_points(points) -> np.ndarray:
    try:
        X = np.asarray(points, dtype=float)
    except ValueError as exc:  # ragged input
        raise ShapeError("points must all have the same dimension") from exc
    if X.ndim != 2:
        raise ShapeError(f"expected a list of vectors, got array of shape {X.shape}")
    return X


def sample_moments(points, regularization: float = 0.0) -> MomentProfile:
    """Mean and unbiased (N-1) covariance of ``points`` plus ``regularization * I``.

    Rows are sorted lexicographically before summation, which makes the
    result exactly invariant to the order of the input.
    """
    X = _as_points(points)
    N, n = X.shape
    if N < 2:
        raise InsufficientData(f"need at least 2 points, got {N}")
    if regularization < 0:
        raise RangeError("regularization must be nonnegative")
    X = X[np.lexsort(X.T[::-1])]
    mean = X.sum(axis=0) / N
    D = X - mean
    cov = D.T @ D / (N - 1)
    cov = 0.5 * (cov + cov.T)
    if regularization:
        cov = cov + regularization * np.eye(n)
    return MomentProfile(mean=_frozen(mean), covariance=_frozen(cov), sample_count=N)


def eig_sym(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Each eigenvector is normalised so that its first component with
    magnitude above 1e-12 is positive; the output is deterministic for a
    given input.
    """
    M = np.asarray(matrix, dtype=float)
    check_symmetric(M)
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    w = w[::-1].copy()
    U = U[:, ::-1].copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
    return w, U


def moment_profile(
    points,
    gamma1: float = 0.0,
    gamma2: float = 1.0,
    floor_scale: float = FLOOR_SCALE,
) -> MomentProfile:
    """Full profile: moments, regularised covariance and its eigen/sqrt factors."""
    base = sample_moments(points)
    return with_eigen(base, gamma1=gamma1, gamma2=gamma2, floor_scale=floor_scale)


def with_eigen(
    profile: MomentProfile,
    gamma1: Optional[float] = None,
    gamma2: Optional[float] = None,
    floor_scale: float = FLOOR_SCALE,
) -> MomentProfile:
    cov = np.array(profile.covariance)
    n = cov.shape[0]
    floor = floor_scale * np.trace(cov) / n
    if not floor > 0:
        floor = floor_scale
    cov = cov + floor * np.eye(n)
    w, U = eig_sym(cov)
    w = np.maximum(w, floor)
    return replace(
        profile,
        covariance=_frozen(cov),
        eigvals=_frozen(w),
        eigvecs=_frozen(U),
        sqrt_factor=_frozen(U * np.sqrt(w)),
        gamma1=profile.gamma1 if gamma1 is None else float(gamma1),
        gamma2=profile.gamma2 if gamma2 is None else float(gamma2),
    )


def sqrt_factor(profile: MomentProfile, rank: Optional[int] = None):
    """Split ``S = U D^{1/2}`` into its leading ``rank`` and trailing columns.

    Returns ``(S_lead, S_tail)`` with shapes ``(n, rank)`` and
    ``(n, n - rank)``; ``S_lead @ S_lead.T + S_tail @ S_tail.T`` is the
    covariance.
    """
    _require_eigen(profile)
    n = profile.n
    r = n if rank is None else int(rank)
    if not 1 <= r <= n:
        raise RangeError(f"rank must lie in [1, {n}], got {rank}")
    S = np.asarray(profile.sqrt_factor)
    return S[:, :r].copy(), S[:, r:].copy()


def relative_frobenius(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b) / denom)


def check_symmetric(M: np.ndarray, what: str = "matrix", tol: float = SYMMETRY_TOL) -> None:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"{what} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > tol * scale:
        raise ShapeError(f"{what} is not symmetric")

