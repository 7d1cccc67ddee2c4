"""Small dense primal-dual interior-point solver for LP/SOC/PSD programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector.  Everything is dense, so it is meant for programs with
a few hundred variables at most; it exists to cross-check the production
backend on small instances.

Notation: ``min c^T x`` s.t. ``A x = b`` (zero-cone rows) and
``G x + s = h``, ``s in K``.  Scaled point ``lam = W z = W^{-T} s``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .expr import smat, svec, tri_size
from .program import CompiledProgram

REG = 1e-10


class _Cones:
    def __init__(self, nonneg: int, soc: list[int], psd: list[int]):
        self.l = nonneg
        self.soc = []
        self.psd = []
        off = nonneg
        for k in soc:
            self.soc.append(slice(off, off + k))
            off += k
        for d in psd:
            self.psd.append((slice(off, off + tri_size(d)), d))
            off += tri_size(d)
        self.m = off
        self.degree = nonneg + len(soc) + sum(psd)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.soc:
            e[sl.start] = 1.0
        for sl, d in self.psd:
            e[sl] = svec(np.eye(d))
        return e

    def jordan(self, u, v) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.soc:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1: sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        for sl, d in self.psd:
            U, V = smat(u[sl], d), smat(v[sl], d)
            out[sl] = svec(0.5 * (U @ V + V @ U))
        return out

    def max_step(self, x, dx) -> float:
        """Largest ``alpha`` with ``x + alpha dx`` in the cone (``inf`` if unbounded)."""
        alpha = math.inf
        lx, ld = x[: self.l], dx[: self.l]
        neg = ld < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-lx[neg] / ld[neg])))
        for sl in self.soc:
            alpha = min(alpha, _soc_step(x[sl], dx[sl]))
        for sl, d in self.psd:
            X, D = smat(x[sl], d), smat(dx[sl], d)
            try:
                L = np.linalg.cholesky(X)
                Li = sla.solve_triangular(L, np.eye(d), lower=True)
                ev = np.linalg.eigvalsh(Li @ D @ Li.T)[0]
            except np.linalg.LinAlgError:
                ev = -np.inf
            if ev < 0:
                alpha = min(alpha, -1.0 / ev)
        return alpha


def _soc_step(x, d) -> float:
    # smallest positive root of (x0 + a d0)^2 - ||x1 + a d1||^2
    qa = d[0] ** 2 - d[1:] @ d[1:]
    qb = 2.0 * (x[0] * d[0] - x[1:] @ d[1:])
    qc = x[0] ** 2 - x[1:] @ x[1:]
    if qc <= 0:
        return 0.0
    roots = []
    if abs(qa) < 1e-300:
        if qb < 0:
            roots.append(-qc / qb)
    else:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = math.sqrt(disc)
            roots += [(-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)]
    pos = [r for r in roots if r > 0]
    if d[0] < 0:
        pos.append(-x[0] / d[0])
    return min(pos) if pos else math.inf


def _nt_scaling(cones: _Cones, s, z):
    """Dense NT scaling ``W`` (block diagonal), its inverse and ``lam = W z``."""
    m = cones.m
    W = np.zeros((m, m))
    Winv = np.zeros((m, m))
    l = cones.l
    if l:
        d = np.sqrt(s[:l] / z[:l])
        W[:l, :l] = np.diag(d)
        Winv[:l, :l] = np.diag(1.0 / d)
    psd_eigs = []
    for sl in cones.soc:
        k = sl.stop - sl.start
        J = -np.eye(k)
        J[0, 0] = 1.0
        sj = s[sl] @ J @ s[sl]
        zj = z[sl] @ J @ z[sl]
        sb = s[sl] / math.sqrt(sj)
        zb = z[sl] / math.sqrt(zj)
        gam = math.sqrt(0.5 * (1.0 + sb @ zb))
        wb = (sb + J @ zb) / (2.0 * gam)
        beta = (sj / zj) ** 0.25
        # beta (2 wb wb^T - J) is W^2; W itself uses the half-way point v
        e0 = np.zeros(k)
        e0[0] = 1.0
        v = (wb + e0) / math.sqrt(2.0 * (wb[0] + 1.0))
        W[sl, sl] = beta * (2.0 * np.outer(v, v) - J)
        Jv = J @ v
        Winv[sl, sl] = (2.0 * np.outer(Jv, Jv) - J) / beta
    for sl, d in cones.psd:
        L1 = np.linalg.cholesky(smat(s[sl], d))
        L2 = np.linalg.cholesky(smat(z[sl], d))
        _, lam, Vt = np.linalg.svd(L2.T @ L1)
        R = L1 @ Vt.T / np.sqrt(lam)
        Rinv = np.linalg.inv(R)
        k = tri_size(d)
        Wb = np.empty((k, k))
        Wib = np.empty((k, k))
        for j in range(k):
            E = smat(np.eye(k)[j], d)
            Wb[:, j] = svec(R.T @ E @ R)
            Wib[:, j] = svec(Rinv.T @ E @ Rinv)
        W[sl, sl] = Wb
        Winv[sl, sl] = Wib
        psd_eigs.append(lam)
    return W, Winv, W @ z, psd_eigs


def _inv_jordan(cones: _Cones, lam, psd_eigs, w) -> np.ndarray:
    """Solve ``lam o x = w`` for ``x``."""
    out = np.empty(cones.m)
    l = cones.l
    out[:l] = w[:l] / lam[:l]
    for sl in cones.soc:
        a, v = lam[sl], w[sl]
        det = a[0] ** 2 - a[1:] @ a[1:]
        x0 = (a[0] * v[0] - a[1:] @ v[1:]) / det
        out[sl.start] = x0
        out[sl.start + 1: sl.stop] = (v[1:] - x0 * a[1:]) / a[0]
    for (sl, d), ev in zip(cones.psd, psd_eigs):
        Wm = smat(w[sl], d)
        out[sl] = svec(2.0 * Wm / (ev[:, None] + ev[None, :]))
    return out


def solve_dense(cp: CompiledProgram, tol: float = 1e-8, max_iter: int = 100):
    """Returns ``(status, raw_status, x, s, z, iterations)`` in the compiled layout.

    ``s`` and ``z`` cover all rows (zero-cone rows first), matching the
    ``A x + s = b`` convention, so the equality multipliers are ``z[:zero]``.
    """
    A_full = cp.A.toarray()
    nz = cp.zero
    Aeq, beq = A_full[:nz], cp.b[:nz]
    G, h = A_full[nz:], cp.b[nz:]
    c = cp.c
    n = cp.n_vars
    cones = _Cones(cp.nonneg, cp.soc, cp.psd)
    m = cones.m
    e = cones.identity()

    x = np.zeros(n)
    y = np.zeros(nz)
    s = e.copy()
    z = e.copy()
    tau = kappa = 1.0
    scale_p = 1.0 + max(_inf(beq), _inf(h))
    scale_d = 1.0 + _inf(c)

    status, raw = "NumericalTrouble", "MaxIterations"
    it = 0
    for it in range(1, max_iter + 1):
        rx = Aeq.T @ y + G.T @ z + c * tau
        ry = Aeq @ x - beq * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + beq @ y + h @ z

        pcost = c @ x / tau
        dcost = -(beq @ y + h @ z) / tau
        pres = max(_inf(ry), _inf(rz)) / tau / scale_p
        dres = _inf(rx) / tau / scale_d
        gap = (s @ z) / tau ** 2
        if pres <= tol and dres <= tol and gap <= tol * (1.0 + min(abs(pcost), abs(dcost))):
            status, raw = "Optimal", "Solved"
            break
        by = beq @ y + h @ z
        if by < 0 and _inf(Aeq.T @ y + G.T @ z) / -by <= tol:
            status, raw = "Infeasible", "PrimalInfeasible"
            break
        cx = c @ x
        if cx < 0 and max(_inf(Aeq @ x), _inf(G @ x + s)) / -cx <= tol:
            status, raw = "Unbounded", "DualInfeasible"
            break

        try:
            W, Winv, lam, psd_eigs = _nt_scaling(cones, s, z)
        except (np.linalg.LinAlgError, ValueError, ZeroDivisionError):
            raw = "ScalingFailed"
            break
        mu = (s @ z + tau * kappa) / (cones.degree + 1)
        K = np.zeros((n + nz + m, n + nz + m))
        K[:n, n:n + nz] = Aeq.T
        K[:n, n + nz:] = G.T
        K[n:n + nz, :n] = Aeq
        K[n + nz:, :n] = G
        K[n + nz:, n + nz:] = -W.T @ W
        # static regularisation keeps K factorizable when A or G lack rank;
        # refinement against the exact K removes its effect
        Kreg = K.copy()
        Kreg[np.arange(n), np.arange(n)] += REG
        Kreg[n + np.arange(nz), n + np.arange(nz)] -= REG
        try:
            lu = sla.lu_factor(Kreg, check_finite=True)
        except (ValueError, sla.LinAlgError):
            raw = "FactorizationFailed"
            break

        def ksolve(rhs):
            sol = sla.lu_solve(lu, rhs)
            for _ in range(3):
                sol += sla.lu_solve(lu, rhs - K @ sol)
            return sol

        v = ksolve(np.concatenate([-c, beq, h]))
        vx, vy, vz = v[:n], v[n:n + nz], v[n + nz:]
        denom = c @ vx + beq @ vy + h @ vz - kappa / tau

        def direction(eta, ds_target, dk_target):
            lz = _inv_jordan(cones, lam, psd_eigs, ds_target)
            rhs = np.concatenate([-eta * rx, -eta * ry, -eta * rz - W.T @ lz])
            u = ksolve(rhs)
            ux, uy, uz = u[:n], u[n:n + nz], u[n + nz:]
            dtau = (-eta * rt - dk_target / tau - c @ ux - beq @ uy - h @ uz) / denom
            dx = ux + dtau * vx
            dy = uy + dtau * vy
            dz = uz + dtau * vz
            ds = W.T @ lz - W.T @ (W @ dz)
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(dz, ds, dtau, dkappa):
            a = min(cones.max_step(s, ds), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lam2 = cones.jordan(lam, lam)
        aff = direction(1.0, -lam2, -tau * kappa)
        alpha_aff = min(1.0, step_length(aff[2], aff[3], aff[4], aff[5]))
        sigma = (1.0 - alpha_aff) ** 3
        cross = cones.jordan(Winv.T @ aff[3], W @ aff[2])
        dx, dy, dz, ds, dtau, dkappa = direction(
            1.0 - sigma,
            -lam2 - cross + sigma * mu * e,
            -tau * kappa - aff[4] * aff[5] + sigma * mu,
        )
        alpha = min(1.0, 0.99 * step_length(dz, ds, dtau, dkappa))
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if not (np.all(np.isfinite(x)) and tau > 0):
            raw = "Diverged"
            break

    if status == "Optimal":
        xs, ss, zs = x / tau, s / tau, z / tau
        ys = y / tau
    elif status == "Infeasible":
        by = -(beq @ y + h @ z)
        xs, ss, zs, ys = np.full(n, np.nan), s, z / by, y / by
    elif status == "Unbounded":
        cx = -(c @ x)
        xs, ss, zs, ys = x / cx, s / cx, z, y
    else:
        xs, ss, zs, ys = x / tau, s / tau, z / tau, y / tau
    s_all = np.concatenate([np.zeros(nz), ss])
    z_all = np.concatenate([ys, zs])
    return status, raw, xs, s_all, z_all, it


def _inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0
