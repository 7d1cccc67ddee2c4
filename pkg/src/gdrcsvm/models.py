"""Conic builders for the five classifiers and the trained-classifier type.

Every builder returns a :class:`~gdrcsvm.conic_ir.ConicProgram`.  Data are
centred by the global training mean ``m`` before assembly; because the
models are affine-equivariant the solution maps back exactly:
``b = b_c - w^T m`` and, for the full moment model, ``q = q_c - 2 Lam m``,
``t = t_c + m^T Lam m - q_c^T m`` (all other blocks are unchanged).

The quadratic objective ``1/2 ||w||^2`` is handled through the epigraph
``||(2w, t_w - 1)||_2 <= t_w + 1``, which is ``||w||^2 <= t_w``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .ambiguity import AmbiguityConfig, CoreSet, build_core_sets, drc_mean_radius, norm
from .conic_ir import (
    DEFAULT_TOL, Affine, ConicProgram, ConicSolution, MatExpr, ValidationReport, solve, validate, vstack,
)
from .data_io import Dataset
from .errors import (
    AssumptionViolated,
    CertificateRequired,
    ConfigError,
    RangeError,
    ShapeError,
    SolverFailed,
)
from .linalg_stats import MomentProfile, moment_profile, sqrt_factor

CLASS_LABELS = (1, -1)
MODEL_KINDS = ("svm", "drc", "drc-mu", "gdrc", "gdrc-app")


# --- trained classifier ---------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    """Multipliers of the moment model, in original (uncentred) coordinates.

    Every field is a pair indexed by class (``+1`` first); ``v`` and ``u``
    hold one vector per core set.
    """

    Lambda: tuple
    q: tuple
    t: tuple
    r: tuple
    tau: tuple
    v: tuple
    u: tuple

    def to_dict(self) -> dict:
        return {
            "Lambda": [np.asarray(L).tolist() for L in self.Lambda],
            "q": [np.asarray(q).tolist() for q in self.q],
            "t": list(map(float, self.t)),
            "r": list(map(float, self.r)),
            "tau": list(map(float, self.tau)),
            "v": [[np.asarray(x).tolist() for x in vs] for vs in self.v],
            "u": [[np.asarray(x).tolist() for x in us] for us in self.u],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        arr = np.asarray
        return cls(
            Lambda=tuple(arr(L, float) for L in d["Lambda"]),
            q=tuple(arr(q, float) for q in d["q"]),
            t=tuple(map(float, d["t"])),
            r=tuple(map(float, d["r"])),
            tau=tuple(map(float, d["tau"])),
            v=tuple(tuple(arr(x, float) for x in vs) for vs in d["v"]),
            u=tuple(tuple(arr(x, float) for x in us) for us in d["u"]),
        )


@dataclass(frozen=True)
class TrainedClassifier:
    """Linear classifier ``sign(w^T x + b)`` plus training by-products.

    ``xi`` is per sample for SVM/DRC/DRC-mu and per class for the moment
    models.  ``rank`` is set only for the PCA-reduced model.
    """

    w: np.ndarray
    b: float
    xi: np.ndarray
    C: float
    epsilon: Optional[float]
    objective: float
    model_kind: str
    certificate: Optional[Certificate] = None
    rank: Optional[int] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).ravel())
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).ravel())
        object.__setattr__(self, "b", float(self.b))

    @property
    def n(self) -> int:
        return self.w.size

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise ShapeError(f"classifier expects {self.n} features, got {X.shape[1]}")
        return X @ self.w + self.b

    def predict(self, X) -> np.ndarray:
        """Labels in {+1, -1}; points on the hyperplane get -1."""
        return np.where(self.decision_function(X) > 0, 1, -1)

    def flipped(self) -> "TrainedClassifier":
        return TrainedClassifier(-self.w, -self.b, self.xi, self.C, self.epsilon, self.objective,
                                 self.model_kind, None, self.rank, dict(self.config))

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "w": self.w.tolist(),
            "b": self.b,
            "xi": self.xi.tolist(),
            "C": self.C,
            "epsilon": self.epsilon,
            "objective": self.objective,
            "rank": self.rank,
            "config": self.config,
            "certificate": self.certificate.to_dict() if self.certificate else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        cert = d.get("certificate")
        return cls(
            w=d["w"], b=d["b"], xi=d.get("xi", []), C=float(d["C"]),
            epsilon=d.get("epsilon"), objective=float(d["objective"]),
            model_kind=d["model_kind"],
            certificate=Certificate.from_dict(cert) if cert else None,
            rank=d.get("rank"), config=d.get("config", {}),
        )

    def to_json(self, indent: Optional[int] = 1) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedClassifier":
        return cls.from_dict(json.loads(text))


def predict(classifier: TrainedClassifier, x) -> Union[int, np.ndarray]:
    """Label of one point (returns int) or of each row of a matrix."""
    x = np.asarray(x, dtype=float)
    labels = classifier.predict(x)
    return int(labels[0]) if x.ndim == 1 else labels


# --- helpers -----------------------------------------------------------------------

def _check_common(C: float, epsilon: Optional[float] = None):
    if not C > 0:
        raise ConfigError("must be positive", key="C")
    if epsilon is not None and not 0.0 < epsilon < 1.0:
        raise ConfigError("must lie in (0, 1)", key="epsilon")


def _objective_epigraph(prog: ConicProgram, w: Affine) -> Affine:
    t = prog.variable("t_w")
    prog.add_soc(t + 1.0, vstack([2.0 * w, t - 1.0]), "objective epigraph ||w||^2 <= t_w")
    return t


def class_profiles(train: Dataset, gamma1: float = 0.0, gamma2: float = 1.0):
    """Moment profiles of the +1 and -1 classes of ``train``."""
    train.require_both_classes()
    return tuple(moment_profile(train.class_points(y), gamma1, gamma2) for y in CLASS_LABELS)


def kappa(epsilon: float) -> float:
    """Chebyshev multiplier ``sqrt((1 - eps) / eps)``."""
    _check_common(1.0, epsilon)
    return math.sqrt((1.0 - epsilon) / epsilon)


def _global_mean(profiles: Sequence[MomentProfile]) -> np.ndarray:
    N = sum(p.sample_count for p in profiles)
    return sum(p.sample_count * np.asarray(p.mean) for p in profiles) / N


def _covariance(profile: MomentProfile) -> np.ndarray:
    # S S^T with the floored eigenvalues, so the full and reduced models see
    # exactly the same covariance
    S = np.asarray(profile.sqrt_factor)
    return S @ S.T


# --- per-sample models -------------------------------------------------------------

def _per_sample_model(name: str, train: Dataset, C: float, factors) -> ConicProgram:
    train.require_both_classes()
    X = np.asarray(train.features, dtype=float)
    y = np.asarray(train.labels, dtype=float)
    N, n = X.shape
    m = X.mean(axis=0)
    Xc = X - m
    prog = ConicProgram(name)
    w = prog.variable("w", n)
    b = prog.variable("b")
    xi = prog.variable("xi", N)
    t = _objective_epigraph(prog, w)
    margin = (y[:, None] * Xc) @ w + y[:, None] @ b - 1.0 + xi
    if factors is None:
        prog.add_ineq(margin, "soft margin")
    else:
        spread = {lab: factors[lab].T @ w for lab in CLASS_LABELS}
        for i in range(N):
            prog.add_soc(margin[i], spread[int(y[i])], f"robust margin, sample {i}")
    prog.add_ineq(xi, "slack >= 0")
    prog.minimize(0.5 * t + C * xi.sum())
    prog.handles = {"w": w, "b": b, "xi": xi}
    prog.meta = {"kind": name, "C": float(C), "shift": m, "n": n}
    return prog


def build_svm(train: Dataset, C: float) -> ConicProgram:
    """Soft-margin SVM with per-sample slacks."""
    _check_common(C)
    return _per_sample_model("SVM", train, C, None)


def build_drc(train: Dataset, C: float, epsilon: float, cov_scale: float = 0.01) -> ConicProgram:
    """Per-sample moment-robust SVM.

    Sample ``i`` of class ``k`` is treated as the mean of a distribution
    with covariance ``cov_scale * Sigma_k``; the worst-case chance
    constraint becomes ``y_i (w^T x_i + b) >= 1 - xi_i + kappa ||(cov_scale
    Sigma_k)^{1/2} w||_2``.
    """
    return _drc_family("DRC", train, C, epsilon, cov_scale, 0.0)


def build_drc_mu(train: Dataset, C: float, epsilon: float, cov_scale: float = 0.01,
                 nu_sq: float = 0.0) -> ConicProgram:
    """DRC with an additional ellipsoidal mean perturbation of squared radius ``nu_sq``."""
    return _drc_family("DRC-mu", train, C, epsilon, cov_scale, nu_sq)


def _drc_family(name, train, C, epsilon, cov_scale, nu_sq) -> ConicProgram:
    _check_common(C, epsilon)
    if cov_scale < 0:
        raise ConfigError("must be nonnegative", key="cov_scale")
    if nu_sq < 0:
        raise ConfigError("must be nonnegative", key="nu_sq")
    profiles = class_profiles(train)
    mult = (kappa(epsilon) + math.sqrt(nu_sq)) * math.sqrt(cov_scale)
    factors = {lab: mult * p.sym_sqrt() for lab, p in zip(CLASS_LABELS, profiles)}
    prog = _per_sample_model(name, train, C, factors)
    prog.meta.update(epsilon=float(epsilon), cov_scale=float(cov_scale), nu_sq=float(nu_sq))
    return prog


# --- moment models -------------------------------------------------------------------

@dataclass(frozen=True)
class PcaReduction:
    """Leading/trailing scaled principal factors of each class covariance."""

    rank: int
    projector: tuple
    trailing: tuple
    explained: tuple


def pca_reduction(profiles: Sequence[MomentProfile], rank: int) -> PcaReduction:
    lead, tail, expl = [], [], []
    for p in profiles:
        S_r, S_t = sqrt_factor(p, rank)
        lead.append(S_r)
        tail.append(S_t)
        w = np.asarray(p.eigvals)
        expl.append(float(w[:rank].sum() / w.sum()))
    return PcaReduction(int(rank), tuple(lead), tuple(tail), tuple(expl))


def _normalise_core_sets(core_sets, n: int):
    out = []
    for sets in core_sets:
        if isinstance(sets, CoreSet):
            sets = (sets,)
        sets = tuple(sets)
        if not sets:
            raise ConfigError("every class needs at least one core set", key="m_per_class")
        for cs in sets:
            if cs.n != n:
                raise ShapeError(f"core set has dimension {cs.n}, data has {n}")
        out.append(sets)
    if len(out) != 2:
        raise ShapeError("expected core sets for exactly two classes")
    return tuple(out)


def _check_moment_inputs(profiles, core_sets, C, epsilon):
    _check_common(C, epsilon)
    if len(profiles) != 2:
        raise ShapeError("expected two class profiles")
    n = profiles[0].n
    for p in profiles:
        if not p.has_eigen:
            raise ShapeError("profiles need eigen factors; build them with moment_profile()")
        if p.n != n:
            raise ShapeError("class profiles have different dimensions")
    core_sets = _normalise_core_sets(core_sets, n)
    for k, (p, sets) in enumerate(zip(profiles, core_sets)):
        for j, cs in enumerate(sets):
            if not cs.contains(p.mean, rtol=1e-9)[0]:
                raise AssumptionViolated(
                    f"class {CLASS_LABELS[k]:+d} mean lies outside core set {j}; "
                    "enlarge the radius or move the centre"
                )
    return n, core_sets


def _moment_program(kind, profiles, core_sets, C, epsilon, reduction: Optional[PcaReduction]):
    n, core_sets = _check_moment_inputs(profiles, core_sets, C, epsilon)
    m = _global_mean(profiles)
    full = reduction is None
    prog = ConicProgram(kind)
    w = prog.variable("w", n)
    b = prog.variable("b")
    xi = prog.variable("xi", 2)
    t_w = _objective_epigraph(prog, w)
    prog.add_ineq(xi, "slack >= 0")
    handles = {"w": w, "b": b, "xi": xi, "classes": []}

    for k, (prof, sets, y) in enumerate(zip(profiles, core_sets, CLASS_LABELS)):
        tag = f"class {y:+d}"
        mu = np.asarray(prof.mean) - m
        Sigma = _covariance(prof)
        d = n if full else reduction.rank
        Lam = prog.symmetric(f"Lam{k}", d)
        q = prog.variable(f"q{k}", d)
        t = prog.variable(f"t{k}")
        # the solver works with theta * r: the distance caps then carry unit
        # coefficients, which keeps interior-point iterates well scaled
        r_unit = max((cs.attention for cs in sets), default=0.0) or 1.0
        r = prog.variable(f"r_scaled{k}") / r_unit
        tau = prog.variable(f"tau{k}")
        rho = prog.variable(f"rho{k}")
        prog.add_psd_block(Lam, f"{tag}: Lambda PSD")
        prog.add_ineq(vstack([r, tau]), f"{tag}: r, tau >= 0")
        g1, g2 = prof.gamma1, prof.gamma2
        if full:
            # t + Lam.(g2 Sigma + mu mu^T) + sqrt(g1) ||Sigma^{1/2}(q + 2 Lam mu)|| + q^T mu + r <= eps tau
            prog.add_soc(rho, prof.sym_sqrt() @ (q + 2.0 * Lam.mul_vec(mu)), f"{tag}: mean-confidence norm")
            lhs = t + Lam.inner(g2 * Sigma + np.outer(mu, mu)) + math.sqrt(g1) * rho + q.dot(mu) + r
        else:
            prog.add_soc(rho, q, f"{tag}: mean-confidence norm")
            lhs = t + g2 * Lam.trace() + math.sqrt(g1) * rho + r
            S_r = reduction.projector[k]
        prog.add_ineq(epsilon * tau - lhs, f"{tag}: moment risk bound")

        cls_handles = {"Lam": Lam, "q": q, "t": t, "r": r, "tau": tau, "v": [], "u": []}
        for j, cs in enumerate(sets):
            ctag = f"{tag}, core set {j}"
            v = prog.variable(f"v{k}_{j}", n)
            u = prog.variable(f"u{k}_{j}", n)
            sv = prog.variable(f"sv{k}_{j}")
            su = prog.variable(f"su{k}_{j}")
            A = cs.perturbation
            qd = cs.dual_order
            root = math.sqrt(cs.radius_sq)
            center = cs.center - m
            # sv, su bound the spread terms of the support function from above
            prog.add_norm_cap(A.T @ v, sv, qd, f"{ctag}: support spread of v")
            prog.add_norm_cap(A.T @ u, su, qd, f"{ctag}: support spread of u")
            if full:
                off_v = 0.5 * (v + q + y * w)
                corner_v = t - tau + y * b - 1.0 + xi[k] - center @ v - root * sv
                off_u = 0.5 * (u + q)
                corner_u = t - center @ u - root * su
            else:
                shift = center - mu
                off_v = 0.5 * (q + S_r.T @ (y * w + v))
                corner_v = t - tau + y * (mu @ w + b) - 1.0 + xi[k] - shift @ v - root * sv
                off_u = 0.5 * (q + S_r.T @ u)
                corner_u = t - shift @ u - root * su
            prog.add_psd_block(MatExpr.bordered(Lam, off_v, corner_v), f"{ctag}: margin LMI")
            prog.add_psd_block(MatExpr.bordered(Lam, off_u, corner_u), f"{ctag}: support LMI")
            prog.add_norm_cap(v, cs.attention * r, qd, f"{ctag}: distance cap on v")
            prog.add_norm_cap(u, cs.attention * r, qd, f"{ctag}: distance cap on u")
            cls_handles["v"].append(v)
            cls_handles["u"].append(u)
        handles["classes"].append(cls_handles)

    prog.minimize(0.5 * t_w + C * xi.sum())
    prog.handles = handles
    prog.meta = {
        "kind": kind, "C": float(C), "epsilon": float(epsilon), "shift": m, "n": n,
        "rank": None if full else reduction.rank, "reduction": reduction,
        "m_per_class": [len(s) for s in core_sets],
    }
    return prog


def build_gdrc(profiles, core_sets, C: float, epsilon: float) -> ConicProgram:
    """Globalised moment model: one chance constraint per class.

    ``profiles`` are the two class :class:`MomentProfile` objects (carrying
    ``gamma1``/``gamma2``) and ``core_sets`` one core set or a sequence of
    core sets per class.
    """
    return _moment_program("GDRC", profiles, core_sets, C, epsilon, None)


def build_gdrc_app(profiles, core_sets, C: float, epsilon: float, rank: int) -> ConicProgram:
    """Moment model restricted to the ``rank`` leading scaled principal directions."""
    n = profiles[0].n
    if not 1 <= int(rank) <= n:
        raise RangeError(f"rank must lie in [1, {n}], got {rank}")
    reduction = pca_reduction(profiles, int(rank))
    return _moment_program(f"GDRC-app({int(rank)})", profiles, core_sets, C, epsilon, reduction)


# --- extraction ----------------------------------------------------------------------

def extract_classifier(program: ConicProgram, solution: ConicSolution, config: Optional[dict] = None) -> TrainedClassifier:
    if not solution.optimal:
        raise SolverFailed(f"{program.name}: solver returned {solution.status} ({solution.raw_status})",
                           status=solution.status)
    h, meta = program.handles, program.meta
    m = meta["shift"]
    w = solution.value(h["w"])
    b = solution.scalar(h["b"]) - float(w @ m)
    xi = solution.value(h["xi"])
    cert = None
    if "classes" in h:
        full = meta["rank"] is None
        parts = {key: [] for key in ("Lambda", "q", "t", "r", "tau", "v", "u")}
        for ch in h["classes"]:
            Lam = solution.value(ch["Lam"])
            q = solution.value(ch["q"])
            t = solution.scalar(ch["t"])
            if full:
                t = t + float(m @ Lam @ m) - float(q @ m)
                q = q - 2.0 * Lam @ m
            parts["Lambda"].append(Lam)
            parts["q"].append(q)
            parts["t"].append(t)
            parts["r"].append(solution.scalar(ch["r"]))
            parts["tau"].append(solution.scalar(ch["tau"]))
            parts["v"].append(tuple(solution.value(v) for v in ch["v"]))
            parts["u"].append(tuple(solution.value(u) for u in ch["u"]))
        cert = Certificate(**{k: tuple(v) for k, v in parts.items()})
    return TrainedClassifier(
        w=w, b=b, xi=xi, C=meta["C"], epsilon=meta.get("epsilon"),
        objective=solution.objective, model_kind=meta["kind"], certificate=cert,
        rank=meta.get("rank"), config=dict(config or {}),
    )


@dataclass(frozen=True)
class FitResult:
    classifier: TrainedClassifier
    program: ConicProgram
    solution: ConicSolution
    report: ValidationReport


def fit_program(program: ConicProgram, tol: float = DEFAULT_TOL, backend: str = "auto",
                config: Optional[dict] = None) -> FitResult:
    """Solve, validate and extract; raises :class:`SolverFailed` unless Optimal."""
    sol = solve(program, tol=tol, backend=backend)
    clf = extract_classifier(program, sol, config)
    return FitResult(clf, program, sol, validate(program, sol, tol=1e-6))


# --- gap bound and certificate check ---------------------------------------------------

def gap_bound(classifier: TrainedClassifier, profiles, core_sets=None, C: Optional[float] = None) -> float:
    """Upper bound on ``v*(n) - v*(r)`` from a reduced-model solution.

    ``(C/2) sum_{k,j} ||S_tail_k^T (y_k w + v_kj)||_2 + ||S_tail_k^T u_kj||_2``
    with ``S_tail_k`` the trailing scaled principal factor of class ``k``.
    """
    if classifier.certificate is None or classifier.rank is None:
        raise CertificateRequired("gap_bound needs a reduced-model classifier with its certificate")
    C = classifier.C if C is None else float(C)
    cert = classifier.certificate
    total = 0.0
    for k, (prof, y) in enumerate(zip(profiles, CLASS_LABELS)):
        _, S_t = sqrt_factor(prof, classifier.rank)
        if S_t.shape[1] == 0:
            continue
        for v, u in zip(cert.v[k], cert.u[k]):
            total += np.linalg.norm(S_t.T @ (y * classifier.w + v)) + np.linalg.norm(S_t.T @ u)
    return 0.5 * C * float(total)


def certificate_margins(classifier: TrainedClassifier, profiles, core_sets) -> dict:
    """Re-evaluate the moment-model constraints at the certificate directly.

    Works in original coordinates and evaluates the support-function norms
    exactly, so it is independent of both the centring and the epigraph
    variables of the conic program.  Returns the smallest margin of each
    constraint family (negative means violated).
    """
    cert = classifier.certificate
    if cert is None:
        raise CertificateRequired("classifier carries no certificate")
    core_sets = _normalise_core_sets(core_sets, classifier.n)
    w, b, eps = classifier.w, classifier.b, classifier.epsilon
    full = classifier.rank is None
    out = {"risk": math.inf, "lmi": math.inf, "lambda_psd": math.inf, "cap": math.inf, "sign": math.inf}
    for k, (prof, sets, y) in enumerate(zip(profiles, core_sets, CLASS_LABELS)):
        Lam, q, t = cert.Lambda[k], cert.q[k], cert.t[k]
        r, tau = cert.r[k], cert.tau[k]
        mu = np.asarray(prof.mean)
        g1, g2 = prof.gamma1, prof.gamma2
        if full:
            Sigma = _covariance(prof)
            lhs = (t + np.sum(Lam * (g2 * Sigma + np.outer(mu, mu)))
                   + math.sqrt(g1) * np.linalg.norm(prof.sym_sqrt() @ (q + 2 * Lam @ mu)) + q @ mu + r)
        else:
            S_r, _ = sqrt_factor(prof, classifier.rank)
            lhs = t + g2 * np.trace(Lam) + math.sqrt(g1) * np.linalg.norm(q) + r
        out["risk"] = min(out["risk"], eps * tau - lhs)
        out["lambda_psd"] = min(out["lambda_psd"], float(np.linalg.eigvalsh(Lam)[0]))
        out["sign"] = min(out["sign"], r, tau, float(classifier.xi[k]))
        for cs, v, u in zip(sets, cert.v[k], cert.u[k]):
            qd = cs.dual_order
            root = math.sqrt(cs.radius_sq)
            spread_v = norm(cs.perturbation.T @ v, qd)
            spread_u = norm(cs.perturbation.T @ u, qd)
            if full:
                off_v, off_u = 0.5 * (v + q + y * w), 0.5 * (u + q)
                cv = t - tau + y * b - 1 + classifier.xi[k] - cs.center @ v - root * spread_v
                cu = t - cs.center @ u - root * spread_u
            else:
                off_v, off_u = 0.5 * (q + S_r.T @ (y * w + v)), 0.5 * (q + S_r.T @ u)
                shift = cs.center - mu
                cv = t - tau + y * (w @ mu + b) - 1 + classifier.xi[k] - shift @ v - root * spread_v
                cu = t - shift @ u - root * spread_u
            for off, corner in ((off_v, cv), (off_u, cu)):
                M = np.block([[Lam, off[:, None]], [off[None, :], np.array([[corner]])]])
                out["lmi"] = min(out["lmi"], float(np.linalg.eigvalsh(M)[0]))
            cap = cs.attention * r
            out["cap"] = min(out["cap"], cap - norm(v, qd), cap - norm(u, qd))
    return out


# --- high-level training ------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Hyper-parameters shared by all models.

    ``ambiguity.epsilon`` is the risk level of every chance-constrained
    model.  ``rank_fraction`` picks ``ceil(fraction * n)`` principal
    directions for the reduced model unless ``rank`` is given.
    """

    C: float = 16.0
    ambiguity: AmbiguityConfig = field(default_factory=AmbiguityConfig)
    cov_scale: float = 0.01
    N0: int = 100
    nu_quantile: float = 0.9
    rank: Optional[int] = None
    rank_fraction: float = 1.0
    backend: str = "auto"
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        _check_common(self.C)
        if not 0.0 < self.rank_fraction <= 1.0:
            raise ConfigError("must lie in (0, 1]", key="rank_fraction")

    @property
    def epsilon(self) -> float:
        return self.ambiguity.epsilon

    def resolve_rank(self, n: int) -> int:
        if self.rank is not None:
            return int(self.rank)
        return max(1, int(math.ceil(self.rank_fraction * n - 1e-9)))

    def as_dict(self) -> dict:
        d = {"C": self.C, "cov_scale": self.cov_scale, "N0": self.N0, "nu_quantile": self.nu_quantile,
             "rank": self.rank, "rank_fraction": self.rank_fraction, "backend": self.backend, "tol": self.tol}
        d.update(self.ambiguity.as_dict())
        return d


def parse_model(spec: str) -> tuple[str, Optional[float]]:
    """``"gdrc-app:0.5"`` -> ``("gdrc-app", 0.5)``; other kinds carry no argument."""
    kind, _, arg = spec.strip().lower().partition(":")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model {spec!r}; choose from {MODEL_KINDS}", key="models")
    if arg and kind != "gdrc-app":
        raise ConfigError(f"model {kind!r} takes no argument", key="models")
    frac = None
    if arg:
        try:
            frac = float(arg.rstrip("%")) / (100.0 if arg.endswith("%") else 1.0)
        except ValueError:
            raise ConfigError(f"bad rank fraction in {spec!r}", key="models") from None
        if not 0.0 < frac <= 1.0:
            raise ConfigError(f"rank fraction must lie in (0, 1], got {frac}", key="models")
    return kind, frac


def display_name(spec: str) -> str:
    kind, frac = parse_model(spec)
    names = {"svm": "SVM", "drc": "DRC", "drc-mu": "DRC-mu", "gdrc": "GDRC-SVM"}
    if kind in names:
        return names[kind]
    return "app" if frac is None else f"app({round(100 * frac):d}%)"


def build_model(spec: str, train: Dataset, params: ModelParams) -> ConicProgram:
    kind, frac = parse_model(spec)
    amb = params.ambiguity
    if kind == "svm":
        return build_svm(train, params.C)
    if kind == "drc":
        return build_drc(train, params.C, amb.epsilon, params.cov_scale)
    if kind == "drc-mu":
        nu_sq = drc_mean_radius(train.n, params.N0, params.nu_quantile)
        return build_drc_mu(train, params.C, amb.epsilon, params.cov_scale, nu_sq)
    profiles = class_profiles(train, amb.gamma1, amb.gamma2)
    core_sets = build_core_sets(profiles, train, amb)
    if kind == "gdrc":
        return build_gdrc(profiles, core_sets, params.C, amb.epsilon)
    rank = params.resolve_rank(train.n) if frac is None else max(1, math.ceil(frac * train.n - 1e-9))
    return build_gdrc_app(profiles, core_sets, params.C, amb.epsilon, rank)


def fit_model(spec: str, train: Dataset, params: ModelParams = ModelParams()) -> FitResult:
    prog = build_model(spec, train, params)
    return fit_program(prog, tol=params.tol, backend=params.backend, config=params.as_dict())
