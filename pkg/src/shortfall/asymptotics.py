"""Limit laws for the rescaled (quantile, ES) estimators.

The quantile converges at rate ``a_n = n**rate_exponent`` to ``psi_inv(W1)``,
the ES at rate sqrt(n) to ``W2``, with ``(W1, W2)`` jointly Gaussian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .estimators import SpectralMeasure
from .models import DistributionModel, LocalExpansion

__all__ = [
    "Shape",
    "PsiForm",
    "JointLaw",
    "MultiLevelLaw",
    "UnsupportedShapeError",
    "psi_from_expansion",
    "psi_inverse",
    "sigma_joint",
    "sigma_multi",
    "joint_law",
    "limit_quantile_cdf",
    "limit_joint_density",
    "limit_joint_cdf",
    "spectral_limit_variance",
    "oracle_variance_gap",
]


class Shape(enum.Enum):
    RIGHT_POWER = "right_power"
    LEFT_POWER = "left_power"
    TWO_SIDED_POWER = "two_sided_power"
    PLATEAU = "plateau"
    SIGN_INFINITY = "sign_infinity"


class UnsupportedShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PsiForm:
    """One of the admissible limit shapes of sqrt(n)(F(q + t/a_n) - alpha).

    ``kappa_minus`` is a positive magnitude here; the left branch is
    ``-kappa_minus * (-t)**beta``.
    """

    shape: Shape
    kappa_plus: float = 0.0
    kappa_minus: float = 0.0
    beta: float = 1.0
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        s = self.shape
        if s in (Shape.RIGHT_POWER, Shape.TWO_SIDED_POWER) and not self.kappa_plus > 0:
            raise ValueError("kappa_plus must be positive")
        if s in (Shape.LEFT_POWER, Shape.TWO_SIDED_POWER) and not self.kappa_minus > 0:
            raise ValueError("kappa_minus must be positive")
        if s in (Shape.RIGHT_POWER, Shape.LEFT_POWER, Shape.TWO_SIDED_POWER) and not self.beta > 0:
            raise ValueError("beta must be positive")
        if s is Shape.PLATEAU and not (self.c1 >= 0 and self.c2 >= 0):
            raise ValueError("plateau ends must be non-negative")

    @classmethod
    def two_sided(cls, kappa_plus, kappa_minus, beta):
        return cls(Shape.TWO_SIDED_POWER, kappa_plus, kappa_minus, beta)

    @classmethod
    def right(cls, kappa_plus, beta):
        return cls(Shape.RIGHT_POWER, kappa_plus=kappa_plus, beta=beta)

    @classmethod
    def left(cls, kappa_minus, beta):
        return cls(Shape.LEFT_POWER, kappa_minus=kappa_minus, beta=beta)

    @classmethod
    def plateau(cls, c1, c2):
        return cls(Shape.PLATEAU, c1=c1, c2=c2)

    @classmethod
    def sign_infinity(cls):
        return cls(Shape.SIGN_INFINITY)

    def __call__(self, t):
        """psi(t), with +-inf encoding the extended-real values."""
        t = np.asarray(t, dtype=float)
        s = self.shape
        with np.errstate(invalid="ignore"):
            pos = self.kappa_plus * np.abs(t) ** self.beta
            neg = -self.kappa_minus * np.abs(t) ** self.beta
        if s is Shape.TWO_SIDED_POWER:
            out = np.where(t > 0, pos, neg)
        elif s is Shape.RIGHT_POWER:
            out = np.where(t >= 0, pos, -np.inf)
        elif s is Shape.LEFT_POWER:
            out = np.where(t <= 0, neg, np.inf)
        elif s is Shape.PLATEAU:
            out = np.where(t < -self.c1, -np.inf, np.where(t > self.c2, np.inf, 0.0))
        else:
            out = np.where(t > 0, np.inf, np.where(t < 0, -np.inf, 0.0))
        return out if out.ndim else float(out)

    def derivative(self, t):
        if self.shape is not Shape.TWO_SIDED_POWER:
            raise UnsupportedShapeError(f"psi of shape {self.shape.value} is not invertible")
        t = np.asarray(t, dtype=float)
        b = self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            mag = b * np.abs(t) ** (b - 1)
        out = np.where(t > 0, self.kappa_plus * mag, self.kappa_minus * mag)
        if b > 1:
            out = np.where(t == 0, 0.0, out)
        return out if out.ndim else float(out)

    def right_limit(self, t):
        """psi(t+), the right-continuous version used for the limit CDF."""
        t = np.asarray(t, dtype=float)
        s = self.shape
        if s is Shape.LEFT_POWER:
            out = np.where(t < 0, self(t), np.inf)
        elif s is Shape.PLATEAU:
            out = np.where(t < -self.c1, -np.inf, np.where(t >= self.c2, np.inf, 0.0))
        elif s is Shape.SIGN_INFINITY:
            out = np.where(t >= 0, np.inf, -np.inf)
        else:
            out = np.asarray(self(t))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class JointLaw:
    alpha: float
    rate_exponent: float
    psi: PsiForm
    sigma: np.ndarray

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=float)
        if sig.shape != (2, 2):
            raise ValueError("sigma must be 2x2")
        if abs(sig[0, 0] - self.alpha * (1 - self.alpha)) > 1e-12:
            raise ValueError("sigma[0, 0] must equal alpha (1 - alpha)")
        if sig[0, 1] != sig[1, 0] or np.linalg.det(sig) < -1e-12:
            raise ValueError("sigma must be symmetric positive semidefinite")
        object.__setattr__(self, "sigma", sig)

    def rate(self, n):
        return np.asarray(n, dtype=float) ** self.rate_exponent


@dataclass(frozen=True)
class MultiLevelLaw:
    levels: tuple[float, ...]
    laws: tuple[JointLaw, ...]
    cov: np.ndarray

    @property
    def es_block(self) -> np.ndarray:
        return self.cov[1::2, 1::2]


def psi_from_expansion(exp: LocalExpansion) -> tuple[float, PsiForm]:
    """Rate exponent and limit shape implied by a one-sided power expansion."""
    r, l = exp.r, exp.l
    if r == l:
        return 1 / (2 * (r + 1)), PsiForm.two_sided(exp.kappa_plus, -exp.kappa_minus, r + 1)
    if r > l:
        return 1 / (2 * (r + 1)), PsiForm.right(exp.kappa_plus, r + 1)
    return 1 / (2 * (l + 1)), PsiForm.left(-exp.kappa_minus, l + 1)


def psi_inverse(psi: PsiForm, x):
    """Generalised inverse: inf{t <= 0: psi(t) >= x} for x < 0, sup{t >= 0: psi(t) <= x} for x > 0."""
    x = np.asarray(x, dtype=float)
    s = psi.shape
    with np.errstate(invalid="ignore", divide="ignore"):
        up = (np.maximum(x, 0.0) / psi.kappa_plus) ** (1 / psi.beta) if psi.kappa_plus > 0 else 0.0
        down = -((np.maximum(-x, 0.0) / psi.kappa_minus) ** (1 / psi.beta)) if psi.kappa_minus > 0 else 0.0
    if s is Shape.TWO_SIDED_POWER:
        out = np.where(x > 0, up, np.where(x < 0, down, 0.0))
    elif s is Shape.RIGHT_POWER:
        out = np.where(x > 0, up, 0.0)
    elif s is Shape.LEFT_POWER:
        out = np.where(x < 0, down, 0.0)
    elif s is Shape.PLATEAU:
        out = np.where(x > 0, psi.c2, np.where(x < 0, -psi.c1, 0.0))
    else:
        out = np.zeros_like(x)
    out = out + 0.0  # normalise -0.0
    return out if out.ndim else float(out)


def sigma_joint(model: DistributionModel, alpha: float) -> np.ndarray:
    """Covariance of (W1, W2) at a single level."""
    tv = model.true_values(alpha)
    q, es = tv.q_alpha, tv.es_alpha
    m2 = model.truncated_moment(q, 2)
    s11 = alpha * (1 - alpha)
    s12 = (1 - alpha) * (q - es)
    s22 = (q * q * alpha - 2 * q * alpha * es + m2) / alpha**2 - (q - es) ** 2
    return np.array([[s11, s12], [s12, s22]])


def joint_law(model: DistributionModel, alpha: float) -> JointLaw:
    rate, psi = psi_from_expansion(model.local_expansion(alpha))
    return JointLaw(alpha, rate, psi, sigma_joint(model, alpha))


def sigma_multi(model: DistributionModel, levels) -> MultiLevelLaw:
    """Joint covariance of (W1^m, W2^m) over several levels, ordered level by level.

    The ES-ES covariance carries ``- (es_s - q_s)(es_t - q_t)``; with the plus
    sign the s = t entries would not reproduce the single-level variance.
    """
    levels = tuple(float(a) for a in levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be distinct and sorted")
    tvs = [model.true_values(a) for a in levels]
    k = len(levels)
    cov = np.empty((2 * k, 2 * k))
    for s in range(k):
        for t in range(k):
            a_s, a_t = levels[s], levels[t]
            q_s, q_t = tvs[s].q_alpha, tvs[t].q_alpha
            es_s, es_t = tvs[s].es_alpha, tvs[t].es_alpha
            lo = min(s, t)
            a_m, es_m, q_m = levels[lo], tvs[lo].es_alpha, tvs[lo].q_alpha
            cov[2 * s, 2 * t] = a_m - a_s * a_t
            cov[2 * s, 2 * t + 1] = a_m / a_t * (q_t - es_m) - a_s * (q_t - es_t)
            cov[2 * s + 1, 2 * t + 1] = (
                a_m / (a_s * a_t) * (q_s * q_t - (q_s + q_t) * es_m)
                + model.truncated_moment(q_m, 2) / (a_s * a_t)
                - (es_s - q_s) * (es_t - q_t)
            )
    for s in range(k):
        for t in range(k):
            cov[2 * s + 1, 2 * t] = cov[2 * t, 2 * s + 1]
    laws = []
    for i, a in enumerate(levels):
        law = joint_law(model, a)
        block = cov[2 * i : 2 * i + 2, 2 * i : 2 * i + 2]
        if np.max(np.abs(block - law.sigma)) > 1e-9:
            raise RuntimeError(f"covariance block at level {a} disagrees with the single-level law")
        cov[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = law.sigma
        laws.append(law)
    return MultiLevelLaw(levels, tuple(laws), cov)


def _w1_sd(law: JointLaw) -> float:
    return math.sqrt(law.sigma[0, 0])


def limit_quantile_cdf(law: JointLaw, z):
    """P(psi_inv(W1) <= z), right-continuous, including atoms of one-sided shapes."""
    arg = np.asarray(law.psi.right_limit(z), dtype=float) / _w1_sd(law)
    out = special.ndtr(arg)
    return out if np.ndim(out) else float(out)


def limit_joint_density(law: JointLaw, t, v):
    """Density of (psi_inv(W1), W2) by change of variables; needs an invertible psi."""
    psi = law.psi
    if psi.shape is not Shape.TWO_SIDED_POWER:
        raise UnsupportedShapeError(f"no joint density for shape {psi.shape.value}")
    t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    w = np.stack([psi(t), v], axis=-1)
    dens = stats.multivariate_normal(mean=[0.0, 0.0], cov=law.sigma).pdf(w)
    out = np.abs(psi.derivative(t)) * dens
    return out if np.ndim(out) else float(out)


def limit_joint_cdf(law: JointLaw, t, v):
    """P(psi_inv(W1) <= t, W2 <= v) = P(W1 <= psi(t), W2 <= v) for an invertible psi."""
    psi = law.psi
    if psi.shape is not Shape.TWO_SIDED_POWER:
        raise UnsupportedShapeError(f"no joint CDF for shape {psi.shape.value}")
    t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    pts = np.stack([psi(t), v], axis=-1)
    out = stats.multivariate_normal(mean=[0.0, 0.0], cov=law.sigma).cdf(pts)
    return out if np.ndim(out) else float(out)


def spectral_limit_variance(model: DistributionModel, mu: SpectralMeasure) -> float:
    """Variance of sum_m p_m W2^m."""
    p = np.asarray(mu.weights)
    c = sigma_multi(model, mu.levels).es_block
    return float(p @ c @ p)


def oracle_variance_gap(model: DistributionModel, alpha: float) -> float:
    """Var(1{Y<=q}(q - Y)/alpha) - Var(1{Y<=q} Y/alpha) in closed form."""
    tv = model.true_values(alpha)
    q, es = tv.q_alpha, tv.es_alpha
    return (1 - alpha) / alpha * q * (q - 2 * es)
