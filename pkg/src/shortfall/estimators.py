"""Sample estimators of quantile, expected shortfall and spectral risk."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .scoring import ScoringSpec, logistic_spec, score, spectral_score

__all__ = [
    "ConsistencyError",
    "EstimateResult",
    "SpectralMeasure",
    "order_rank",
    "empirical_quantile",
    "contrast_es",
    "empirical_es",
    "minimize_contrast",
    "smoothed_quantile",
    "smoothed_es",
    "spectral_estimate",
    "minimize_spectral_contrast",
    "un_minimizer",
]

AGREEMENT_TOL = 1e-6
SIMPLEX_TOL = 1e-10
BISECTION_TOL = 1e-10


class ConsistencyError(RuntimeError):
    """The closed-form minimiser and the direct search disagree."""


@dataclass(frozen=True)
class EstimateResult:
    alpha: float
    n: int
    q_hat: float
    es_hat: float
    empirical_es: float


@dataclass(frozen=True)
class SpectralMeasure:
    """Finitely supported spectral measure sum_m p_m delta_{alpha_m}.

    Pairs are stored sorted by level, so construction order does not matter.
    """

    levels: tuple[float, ...]
    weights: tuple[float, ...]

    def __init__(self, levels: Sequence[float], weights: Sequence[float]):
        levels = [float(a) for a in levels]
        weights = [float(p) for p in weights]
        if len(levels) != len(weights) or not levels:
            raise ValueError("levels and weights must be non-empty and of equal length")
        if any(not 0 < a < 1 for a in levels):
            raise ValueError("spectral levels must lie in (0, 1)")
        if any(p <= 0 for p in weights):
            raise ValueError("spectral weights must be positive")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"spectral weights must sum to 1, got {math.fsum(weights)!r}")
        pairs = sorted(zip(levels, weights))
        if any(a == b for (a, _), (b, _) in zip(pairs, pairs[1:])):
            raise ValueError("spectral levels must be distinct")
        object.__setattr__(self, "levels", tuple(a for a, _ in pairs))
        object.__setattr__(self, "weights", tuple(p for _, p in pairs))

    @classmethod
    def atom(cls, alpha: float) -> "SpectralMeasure":
        return cls([alpha], [1.0])


def _as_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("sample must be non-empty")
    return x


def _check_level(alpha: float):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def order_rank(n: int, alpha: float) -> int:
    """ceil(n * alpha), with alpha read as its shortest decimal form.

    Plain float arithmetic gives ceil(10 * 0.3) == 4.
    """
    k = math.ceil(n * Fraction(repr(float(alpha))))
    return min(max(k, 1), n)


def empirical_quantile(sample, alpha: float) -> float:
    """The ceil(n alpha)-th order statistic, found by partial selection."""
    _check_level(alpha)
    x = _as_sample(sample)
    k = order_rank(x.size, alpha)
    return float(np.partition(x, k - 1)[k - 1])


def contrast_es(sample, alpha: float) -> float:
    """ES estimate minimising the empirical score at the empirical quantile."""
    _check_level(alpha)
    x = _as_sample(sample)
    n = x.size
    q = empirical_quantile(x, alpha)
    below = x <= q
    return float(np.sum(x[below]) / (alpha * n) + q * (1 - np.count_nonzero(below) / (alpha * n)))


def empirical_es(sample, alpha: float) -> float:
    """Tail average (alpha n)^-1 sum of X_i over X_i <= q_hat."""
    _check_level(alpha)
    x = _as_sample(sample)
    q = empirical_quantile(x, alpha)
    return float(np.sum(x[x <= q]) / (alpha * x.size))


def _search(fun, start, scale):
    # Nelder-Mead restarted from shrinking axis-aligned simplices: on the pinball
    # kinks a collapsed simplex can stall short of the minimum
    best = np.asarray(start, dtype=float)
    fbest = fun(best)
    for step in range(10):
        size = scale * 10.0**-step
        simplex = [best] + [best + size * e for e in np.eye(best.size)]
        res = optimize.minimize(
            fun,
            best,
            method="Nelder-Mead",
            options={
                "initial_simplex": np.array(simplex),
                "xatol": SIMPLEX_TOL,
                "fatol": 1e-15,
                "maxiter": 20000,
                "maxfev": 40000,
            },
        )
        if res.fun <= fbest:
            best, fbest = np.asarray(res.x), float(res.fun)
    return best, fbest


def minimize_contrast(spec: ScoringSpec, sample) -> EstimateResult:
    """Minimum-contrast estimate of (q_alpha, es_alpha) for the score ``spec``.

    The quantile coordinate is the left end of the pinball minimising interval;
    the ES coordinate solves the first-order condition in closed form. A
    two-dimensional Nelder-Mead search from (median, mean) must reproduce the
    ES coordinate to within 1e-6.
    """
    x = _as_sample(sample)
    a = spec.alpha
    q_hat = empirical_quantile(x, a)
    es_hat = contrast_es(x, a)
    emp = empirical_es(x, a)

    xl = x.astype(np.longdouble)

    # extended precision: the x2-curvature is G'(x2), tiny when es sits far in G's tail
    def objective(p):
        p = np.asarray(p, dtype=np.longdouble)
        return float(np.mean(score(spec, p[0], p[1], xl)))

    start = (float(np.median(x)), float(np.mean(x)))
    spread = float(np.ptp(x)) or max(1.0, abs(start[1]))
    found, f_found = _search(objective, start, 0.1 * spread)
    f_closed = objective((q_hat, es_hat))
    # the search may stop anywhere on the flat quantile interval; compare the profiled ES
    es_at_found = contrast_es_at(x, a, found[0])
    if abs(found[1] - es_hat) > AGREEMENT_TOL and not (
        abs(es_at_found - es_hat) <= AGREEMENT_TOL and abs(found[1] - es_at_found) <= AGREEMENT_TOL
    ):
        raise ConsistencyError(
            f"direct search gave es={found[1]!r} (objective {f_found!r}) but the closed form "
            f"gives es={es_hat!r} (objective {f_closed!r}); check that G' > 0"
        )
    return EstimateResult(a, x.size, q_hat, es_hat, emp)


def contrast_es_at(sample, alpha: float, q: float) -> float:
    """First-order-condition ES for a fixed quantile coordinate ``q``."""
    x = _as_sample(sample)
    below = x <= q
    return float(np.sum(x[below]) / (alpha * x.size) + q * (1 - np.count_nonzero(below) / (alpha * x.size)))


def _check_bandwidth(h: float):
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")


def smoothed_quantile(sample, alpha: float, h: float) -> float:
    """Root q of mean(Phi((q - X_i) / h)) = alpha, by bisection to 1e-10 * min(1, h).

    Scaling the tolerance with h keeps the kernel weights accurate for tiny bandwidths.
    """
    _check_level(alpha)
    _check_bandwidth(h)
    x = _as_sample(sample)
    target = alpha * x.size
    lo, hi = float(x.min()) - 5 * h, float(x.max()) + 5 * h
    tol = BISECTION_TOL * min(1.0, h)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.sum(special.ndtr((mid - x) / h)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def smoothed_es(sample, alpha: float, h: float, q_smooth: Optional[float] = None) -> float:
    """Kernel-weighted tail average (n alpha)^-1 sum X_i Phi((q~ - X_i) / h)."""
    _check_level(alpha)
    _check_bandwidth(h)
    x = _as_sample(sample)
    if q_smooth is None:
        q_smooth = smoothed_quantile(x, alpha, h)
    return float(np.sum(x * special.ndtr((q_smooth - x) / h)) / (x.size * alpha))


def spectral_estimate(sample, mu: SpectralMeasure) -> float:
    """Weighted sum of contrast ES estimates over the levels of ``mu``."""
    x = _as_sample(sample)
    return math.fsum(p * contrast_es(x, a) for a, p in zip(mu.levels, mu.weights))


def minimize_spectral_contrast(sample, mu: SpectralMeasure, spec: Optional[ScoringSpec] = None):
    """Direct Nelder-Mead minimisation of the spectral score.

    Intended for small samples; returns ``(quantiles, nu_hat)``.
    """
    x = _as_sample(sample)
    if spec is None:
        spec = logistic_spec(0.5)
    k = len(mu.levels)

    xl = x.astype(np.longdouble)

    def objective(p):
        p = np.asarray(p, dtype=np.longdouble)
        return float(np.mean(spectral_score(spec, p[:k], p[k], mu.levels, mu.weights, xl)))

    start = [empirical_quantile(x, a) for a in mu.levels] + [float(np.mean(x))]
    spread = float(np.ptp(x)) or 1.0
    found, _ = _search(objective, start, 0.1 * spread)
    return found[:k], float(found[k])


def un_minimizer(sample, alpha: float, q_true: float, es_true: float) -> float:
    """sqrt(n) (alpha^-1 mean(1{Y <= q}(Y - q)) - es + q) at the true (q, es)."""
    x = _as_sample(sample)
    tail = np.sum(np.where(x <= q_true, x - q_true, 0.0)) / x.size
    return math.sqrt(x.size) * (tail / alpha - es_true + q_true)
