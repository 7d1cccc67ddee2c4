"""Backend-independent solve entry point and solution type."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError
from .expr import Affine, MatExpr, SymVar, smat
from .program import CompiledProgram, ConicProgram

STATUSES = ("Optimal", "Infeasible", "Unbounded", "NumericalTrouble")
BACKENDS = ("auto", "clarabel", "cvxopt", "reference")
DEFAULT_TOL = 1e-7
# backends stop at this fraction of the requested tolerance
BACKEND_TOL_FACTOR = 0.1
# auto mode skips the CVXOPT fallback above this cost (about a minute of work)
CVXOPT_AUTO_BUDGET = 2e10


@dataclass(frozen=True)
class ConicSolution:
    status: str
    values: Mapping[str, np.ndarray]
    objective: float
    residuals: Mapping[str, float]
    backend: str
    raw_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    dual: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"

    def value(self, item: Union[str, Affine, SymVar, MatExpr]):
        if isinstance(item, str):
            return self.values[item]
        if isinstance(item, SymVar):
            return smat(self.values[item.name], item.n)
        return item.value(self.values)

    def scalar(self, item) -> float:
        return float(np.asarray(self.value(item)).ravel()[0])


def kkt_residuals(cp: CompiledProgram, x, s, z) -> dict[str, float]:
    """Relative primal/dual infeasibility and duality gap of ``(x, s, z)``.

    Uses ``min c^T x, A x + s = b, s in K`` and its dual ``max -b^T z,
    A^T z + c = 0, z in K*``.
    """
    x, s, z = (np.asarray(v, dtype=float) for v in (x, s, z))
    pres = np.linalg.norm(cp.A @ x + s - cp.b, np.inf) / (1.0 + _inf(cp.b))
    dres = np.linalg.norm(cp.A.T @ z + cp.c, np.inf) / (1.0 + _inf(cp.c))
    pobj = float(cp.c @ x)
    dobj = float(-cp.b @ z)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return {"primal_feas": float(pres), "dual_feas": float(dres), "gap": float(gap)}


def cone_violation(cp: CompiledProgram, v) -> float:
    """Largest distance below the boundary of the self-dual cone part of ``v``.

    The zero cone is skipped because its dual is the free space.
    """
    v = np.asarray(v, dtype=float)
    worst = 0.0
    off = cp.zero
    if cp.nonneg:
        worst = max(worst, -float(np.min(v[off:off + cp.nonneg])))
    off += cp.nonneg
    for k in cp.soc:
        seg = v[off:off + k]
        worst = max(worst, float(np.linalg.norm(seg[1:]) - seg[0]))
        off += k
    for d in cp.psd:
        k = d * (d + 1) // 2
        worst = max(worst, -float(np.linalg.eigvalsh(smat(v[off:off + k], d))[0]))
        off += k
    return worst


def certified(cp: CompiledProgram, x, s, z, tol: float) -> bool:
    """True when ``(x, s, z)`` is a primal-dual pair meeting ``tol`` on every test.

    The residuals and cone memberships are recomputed from scratch, so the
    answer does not depend on the solver's own stopping rule.  By weak
    duality a certified pair has an objective within the gap of the optimum.
    """
    if x is None or s is None or z is None:
        return False
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and np.all(np.isfinite(z))):
        return False
    res = kkt_residuals(cp, x, s, z)
    if max(res.values()) > tol:
        return False
    scale = 1.0 + max(_inf(cp.b), _inf(cp.c))
    return cone_violation(cp, s) <= tol * scale and cone_violation(cp, z) <= tol * scale


def _inf(v) -> float:
    return float(np.linalg.norm(v, np.inf)) if np.size(v) else 0.0


def _solve_clarabel(cp: CompiledProgram, tol: float, max_iter: int):
    import clarabel

    cones = []
    if cp.zero:
        cones.append(clarabel.ZeroConeT(cp.zero))
    if cp.nonneg:
        cones.append(clarabel.NonnegativeConeT(cp.nonneg))
    cones.extend(clarabel.SecondOrderConeT(k) for k in cp.soc)
    cones.extend(clarabel.PSDTriangleConeT(d) for d in cp.psd)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    P = sp.csc_matrix((cp.n_vars, cp.n_vars))
    solver = clarabel.DefaultSolver(P, cp.c, cp.A, cp.b, cones, settings)
    res = solver.solve()
    raw = str(res.status)
    raw = raw.split(".")[-1]
    status = {
        "Solved": "Optimal",
        "PrimalInfeasible": "Infeasible",
        "DualInfeasible": "Unbounded",
    }.get(raw, "NumericalTrouble")
    return status, raw, np.array(res.x), np.array(res.s), np.array(res.z), int(res.iterations)


def _psd_expansion(d: int) -> sp.csr_matrix:
    """Map svec coordinates to the column-major full ``d x d`` matrix."""
    rows, cols, vals = [], [], []
    for j in range(d):
        for i in range(d):
            a, c = min(i, j), max(i, j)
            rows.append(j * d + i)
            cols.append(c * (c + 1) // 2 + a)
            vals.append(1.0 if i == j else 1.0 / math.sqrt(2.0))
    return sp.csr_matrix((vals, (rows, cols)), shape=(d * d, d * (d + 1) // 2))


def _cvxopt_cost(cp: CompiledProgram) -> float:
    """Rough flop count of one dense CVXOPT KKT factorisation."""
    rows = cp.zero + cp.nonneg + sum(cp.soc) + sum(d * d for d in cp.psd)
    return float(rows) * float(cp.n_vars) ** 2


def _solve_cvxopt(cp: CompiledProgram, tol: float, max_iter: int):
    from cvxopt import matrix, solvers, spmatrix

    def to_cvx(M):
        M = sp.coo_matrix(M)
        return spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), size=M.shape)

    A = sp.csr_matrix(cp.A)
    z0 = cp.zero
    n_cone = A.shape[0] - z0
    # cvxopt wants PSD blocks as full column-major matrices
    expand = [sp.identity(cp.nonneg + sum(cp.soc), format="csr")]
    expand += [_psd_expansion(d) for d in cp.psd]
    E = sp.block_diag(expand, format="csr") if n_cone else sp.csr_matrix((0, 0))
    G = E @ A[z0:]
    h = E @ cp.b[z0:]
    dims = {"l": cp.nonneg, "q": list(cp.soc), "s": list(cp.psd)}
    kwargs = {}
    if z0:
        kwargs = {"A": to_cvx(A[:z0]), "b": matrix(cp.b[:z0])}
    options = {"show_progress": False, "maxiters": max_iter,
               "abstol": tol, "reltol": tol, "feastol": tol}
    G_cvx = to_cvx(G) if G.shape[0] else spmatrix([], [], [], (0, cp.n_vars))
    try:
        res = solvers.conelp(matrix(cp.c), G_cvx, matrix(h), dims, options=options, **kwargs)
    except (ArithmeticError, ValueError) as exc:
        # cvxopt raises on a breakdown of its scaling updates instead of
        # returning a status
        z = np.zeros(cp.n_rows)
        return "NumericalTrouble", f"error: {exc}", np.zeros(cp.n_vars), z, z.copy(), 0
    raw = str(res["status"])
    status = {"optimal": "Optimal", "primal infeasible": "Infeasible",
              "dual infeasible": "Unbounded"}.get(raw, "NumericalTrouble")

    def vec(key, size):
        v = res.get(key)
        return np.zeros(size) if v is None else np.array(v).ravel()

    x = vec("x", cp.n_vars)
    # back to svec: E^T is the adjoint of the expansion on symmetric matrices
    s_cone = E.T @ vec("s", G.shape[0])
    z_cone = E.T @ vec("z", G.shape[0])
    y = vec("y", z0)
    s = np.concatenate([np.zeros(z0), s_cone])
    z = np.concatenate([y, z_cone])
    return status, raw, x, s, z, int(res.get("iterations") or 0)


def _run_backend(name: str, cp: CompiledProgram, tol: float, max_iter: int):
    if name == "clarabel":
        return _solve_clarabel(cp, tol, max_iter)
    if name == "cvxopt":
        return _solve_cvxopt(cp, tol, max_iter)
    from .reference import solve_dense

    return solve_dense(cp, tol=tol, max_iter=max_iter)


def _confirm(cp: CompiledProgram, result, tol: float):
    """Re-grade a backend result with :func:`certified`.

    Optimal requires the independent certificate, whatever the backend
    claimed; an uncertified stall that nevertheless meets ``tol`` is
    promoted.  Infeasible and Unbounded pass through.
    """
    status, raw, x, s, z, iters = result
    if status in ("Infeasible", "Unbounded"):
        return result
    ok = certified(cp, x, s, z, tol)
    if status == "Optimal" and not ok:
        return ("NumericalTrouble", f"{raw} (residuals above {tol:g})", x, s, z, iters)
    if status != "Optimal" and ok:
        return ("Optimal", f"{raw} (certified)", x, s, z, iters)
    return result


def solve(
    program: ConicProgram,
    tol: float = DEFAULT_TOL,
    backend: str = "auto",
    max_iter: int = 200,
) -> ConicSolution:
    """Solve ``program`` with one of :data:`BACKENDS`.

    The backend runs at ``BACKEND_TOL_FACTOR * tol`` because each solver
    normalises its residuals in its own way; the status is Optimal only
    when :func:`certified` confirms the returned point at ``tol``.

    ``"auto"`` runs Clarabel first.  Clarabel is fast but tends to stall
    one step short of its own stopping rule on SDPs with a degenerate
    optimal face.  If its point cannot be certified, CVXOPT re-solves the
    program provided the estimated cost is below :data:`CVXOPT_AUTO_BUDGET`.
    A status other than Optimal is returned, never raised; callers decide
    whether NumericalTrouble is fatal.
    """
    if not tol > 0:
        raise ConfigError("solver tolerance must be positive", key="tol")
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}", key="backend")
    cp = program.compile()
    t0 = time.perf_counter()
    inner = BACKEND_TOL_FACTOR * tol
    chain = ["clarabel", "cvxopt"] if backend == "auto" else [backend]
    used, result = chain[0], None
    for name in chain:
        if result is not None and _cvxopt_cost(cp) > CVXOPT_AUTO_BUDGET:
            break
        attempt = _confirm(cp, _run_backend(name, cp, inner, max_iter), tol)
        # a retry replaces the earlier iterate only if it did better
        if result is None or attempt[0] != "NumericalTrouble":
            used, result = name, attempt
        if result[0] != "NumericalTrouble":
            break
    status, raw, x, s, z, iters = result
    elapsed = time.perf_counter() - t0
    values = {k: v for k, v in cp.split_values(x).items() if not k.startswith("_")}
    objective = float(cp.c @ x + cp.c0) if status == "Optimal" else float("nan")
    return ConicSolution(
        status=status,
        values=values,
        objective=objective,
        residuals=kkt_residuals(cp, x, s, z),
        backend=used,
        raw_status=raw,
        iterations=iters,
        solve_time=elapsed,
        dual={"s": s, "z": z},
    )
