"""Ingredients of the class-wise ambiguity sets.

A core set is the norm-ball image ``{c + A z : ||z||_p <= sqrt(radius_sq)}``.
Its support function and the dual-norm cap on the distance multipliers are
the only pieces of the core-set geometry the conic builders need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data_io import Dataset
from .errors import ConfigError, NumericalError, ShapeError
from .linalg_stats import MomentProfile

NORM_ORDERS = (1.0, 2.0, math.inf)
MAX_CONDITION = 1e12


def parse_norm_order(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        p = math.inf if p in ("inf", "infinity", "oo") else float(p)
    p = float(p)
    if p not in NORM_ORDERS:
        raise ConfigError(f"norm order must be 1, 2 or inf, got {p}", key="p_norm")
    return p


def dual_order(p: float) -> float:
    """Hoelder conjugate ``q`` with ``1/p + 1/q = 1``."""
    p = parse_norm_order(p)
    return {1.0: math.inf, 2.0: 2.0, math.inf: 1.0}[p]


def norm(x, p: float) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float).ravel(), ord=p))


@dataclass(frozen=True)
class CoreSet:
    center: np.ndarray
    perturbation: np.ndarray
    radius_sq: float
    norm_order: float = 2.0
    attention: float = 0.0

    def __post_init__(self):
        c = np.array(self.center, dtype=float).ravel()
        A = np.array(self.perturbation, dtype=float)
        if A.shape != (c.size, c.size):
            raise ShapeError(f"perturbation must be {c.size}x{c.size}, got {A.shape}")
        if self.radius_sq < 0:
            raise ConfigError("core-set radius must be nonnegative", key="radius_sq")
        if self.attention < 0:
            raise ConfigError("attention must be nonnegative", key="theta")
        c.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "perturbation", A)
        object.__setattr__(self, "norm_order", parse_norm_order(self.norm_order))
        object.__setattr__(self, "radius_sq", float(self.radius_sq))
        object.__setattr__(self, "attention", float(self.attention))

    @property
    def n(self) -> int:
        return self.center.size

    @property
    def dual_order(self) -> float:
        return dual_order(self.norm_order)

    def membership_stat(self, points) -> np.ndarray:
        """``||A^{-1}(x - center)||_p^2`` for each row of ``points``."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        Z = np.linalg.solve(self.perturbation, (X - self.center).T).T
        return np.linalg.norm(Z, ord=self.norm_order, axis=1) ** 2

    def contains(self, points, rtol: float = 0.0) -> np.ndarray:
        return self.membership_stat(points) <= self.radius_sq * (1.0 + rtol)


@dataclass(frozen=True)
class AmbiguityConfig:
    lam: float = 0.0
    theta: float = 400.0
    containment_fraction: float = 0.1
    gamma1: float = 0.1
    gamma2: float = 1.2
    epsilon: float = 0.05
    p_norm: float = 2.0
    m_per_class: int = 1
    # explicit squared core-set radius; None calibrates it from containment_fraction
    radius_sq: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.lam < 0.5:
            raise ConfigError(f"must satisfy 0 <= lambda < 0.5, got {self.lam}", key="lambda")
        if self.theta < 0:
            raise ConfigError("must be nonnegative", key="theta")
        if not 0.0 < self.containment_fraction <= 1.0:
            raise ConfigError("must lie in (0, 1]", key="containment_fraction")
        if self.gamma1 < 0:
            raise ConfigError("must be nonnegative", key="gamma1")
        if self.gamma2 < 1:
            raise ConfigError("must be >= 1", key="gamma2")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("must lie in (0, 1)", key="epsilon")
        if int(self.m_per_class) != self.m_per_class or self.m_per_class < 1:
            raise ConfigError("must be a positive integer", key="m_per_class")
        if self.radius_sq is not None and not self.radius_sq > 0:
            raise ConfigError("must be positive", key="radius_sq")
        object.__setattr__(self, "p_norm", parse_norm_order(self.p_norm))

    # file/CLI keys differ from attribute names only for lambda
    KEYS = ("lambda", "theta", "containment_fraction", "gamma1", "gamma2", "epsilon", "p_norm", "m_per_class",
            "radius_sq")

    def as_dict(self) -> dict:
        p = "inf" if math.isinf(self.p_norm) else self.p_norm
        return {
            "lambda": self.lam, "theta": self.theta,
            "containment_fraction": self.containment_fraction,
            "gamma1": self.gamma1, "gamma2": self.gamma2, "epsilon": self.epsilon,
            "p_norm": p, "m_per_class": int(self.m_per_class),
            "radius_sq": "auto" if self.radius_sq is None else self.radius_sq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AmbiguityConfig":
        kw = {("lam" if k == "lambda" else k): v for k, v in d.items() if k in cls.KEYS}
        for k in ("lam", "theta", "containment_fraction", "gamma1", "gamma2", "epsilon"):
            if k in kw:
                kw[k] = float(kw[k])
        if "m_per_class" in kw:
            kw["m_per_class"] = int(kw["m_per_class"])
        if "radius_sq" in kw:
            r = kw["radius_sq"]
            kw["radius_sq"] = None if r is None or str(r).strip().lower() in ("auto", "") else float(r)
        return cls(**kw)


def _required_count(fraction: float, total: int) -> int:
    # 1e-9 keeps ceil(0.1 * 30) at 3 despite 0.1 * 30 == 3.0000000000000004
    return max(1, int(math.ceil(fraction * total - 1e-9)))


def calibrate_radius(center, perturbation, points, mean, fraction: float, p: float = 2.0) -> float:
    """Smallest squared radius whose core set holds ``ceil(fraction * N)`` of
    ``points`` and also ``mean``."""
    probe = CoreSet(center, perturbation, 0.0, p)
    stats = np.sort(probe.membership_stat(points))
    k = _required_count(fraction, stats.size)
    mean_stat = float(probe.membership_stat(mean)[0])
    return max(float(stats[k - 1]), mean_stat)


def _checked_sqrt(profile: MomentProfile) -> np.ndarray:
    w = np.asarray(profile.eigvals)
    if w[-1] <= 0:
        raise NumericalError("class covariance is singular after regularisation")
    if math.sqrt(w[0] / w[-1]) > MAX_CONDITION:
        raise NumericalError("core-set perturbation matrix is too ill-conditioned")
    return profile.sym_sqrt()


def build_core_sets(
    profiles: Sequence[MomentProfile],
    train: Dataset,
    config: AmbiguityConfig,
) -> tuple[tuple[CoreSet, ...], tuple[CoreSet, ...]]:
    """Core sets of both classes.

    With one core set per class the centres are the interpolations
    ``(1 - lam) mu_own + lam mu_other``.  With ``m_per_class = m > 1`` the
    j-th centre uses ``lam * j / (m - 1)``, spreading the sets from the class
    mean to the interpolated point.  Every set uses ``A = Sigma^{1/2}`` of its
    class.  The radius is calibrated from ``containment_fraction`` unless
    ``config.radius_sq`` fixes it; a fixed radius is raised where needed so
    the class mean stays inside.
    """
    if not 0.0 <= config.lam < 0.5:
        raise ConfigError(f"must satisfy 0 <= lambda < 0.5, got {config.lam}", key="lambda")
    pos, neg = profiles
    m = int(config.m_per_class)
    lams = [config.lam] if m == 1 else [config.lam * j / (m - 1) for j in range(m)]
    out = []
    for own, other, label in ((pos, neg, 1), (neg, pos, -1)):
        A = _checked_sqrt(own)
        pts = train.class_points(label)
        sets = []
        for lam in lams:
            center = (1.0 - lam) * np.asarray(own.mean) + lam * np.asarray(other.mean)
            if config.radius_sq is None:
                rad = calibrate_radius(center, A, pts, own.mean, config.containment_fraction, config.p_norm)
            else:
                # the class mean must stay inside the core set
                probe = CoreSet(center, A, 0.0, config.p_norm)
                rad = max(float(config.radius_sq), float(probe.membership_stat(own.mean)[0]))
            sets.append(CoreSet(center, A, rad, config.p_norm, config.theta))
        out.append(tuple(sets))
    return out[0], out[1]


def support_function(core_set: CoreSet, v) -> float:
    """``sup {v^T x : x in Y} = c^T v + sqrt(radius_sq) ||A^T v||_q``."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != core_set.n:
        raise ShapeError(f"v has length {v.size}, core set dimension is {core_set.n}")
    spread = norm(core_set.perturbation.T @ v, core_set.dual_order)
    return float(core_set.center @ v + math.sqrt(core_set.radius_sq) * spread)


def biconjugate_bound(core_set: CoreSet, r_scale: float, v, tol: float = 0.0) -> bool:
    """Whether the scaled distance biconjugate at ``(v, -v)`` is finite (zero).

    That happens exactly when ``||v||_q <= r_scale * attention``.
    """
    return norm(v, core_set.dual_order) <= r_scale * core_set.attention + tol


# --- F distribution ------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-16) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc_reg needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    if x <= 0:
        return 0.0
    return betainc_reg(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))


def f_ppf(q: float, d1: float, d2: float, rtol: float = 1e-14) -> float:
    """Inverse CDF of the F(d1, d2) distribution by bisection."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < q:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NumericalError("could not bracket the F quantile")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d1, d2) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def drc_mean_radius(n: int, N0: int, quantile: float = 0.9) -> float:
    """Squared mean-perturbation radius ``n(N0-1)/(N0(N0-n)) F^{-1}_{n,N0-n}(quantile)``."""
    if N0 <= n:
        raise ConfigError(f"N0 must exceed the dimension n={n}, got {N0}", key="N0")
    if not 0.0 < quantile < 1.0:
        raise ConfigError("must lie in (0, 1)", key="quantile")
    return n * (N0 - 1) / (N0 * (N0 - n)) * f_ppf(quantile, n, N0 - n)
