"""Bivariate (quantile, ES) scoring functions and their increment identities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "ScoringSpec",
    "logistic_spec",
    "exponential_spec",
    "corrupted_spec",
    "SPECS",
    "pinball",
    "score",
    "score_rearranged",
    "spectral_score",
    "score_increment_identity_check",
]

Fn = Callable[[np.ndarray], np.ndarray]

_GL_T, _GL_W = np.polynomial.legendre.leggauss(64)
_EXP_CAP = 700.0


@dataclass(frozen=True)
class ScoringSpec:
    """Specification pair for the score: ``G`` increasing and its antiderivative ``calG``."""

    G: Fn
    G_prime: Fn
    G_double_prime: Fn
    calG: Fn
    alpha: float
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def with_alpha(self, alpha: float) -> "ScoringSpec":
        return ScoringSpec(self.G, self.G_prime, self.G_double_prime, self.calG, alpha, self.name)

    def violations(self, grid=None) -> list[str]:
        """Return human-readable descriptions of failed invariants on ``grid``."""
        if grid is None:
            grid = np.linspace(-10, 10, 2001)
        grid = np.asarray(grid, dtype=float)
        problems = []
        gp = self.G_prime(grid)
        if np.any(gp <= 0):
            bad = grid[gp <= 0]
            problems.append(f"G' <= 0 on [{bad.min():.3g}, {bad.max():.3g}]")
        if abs(float(self.G(np.float64(-50.0)))) > 1e-12:
            problems.append("G(-50) is not ~0")
        a, b = grid[:-1:200], grid[200::200]
        quad = _integrate(self.G, a, b)
        drift = np.max(np.abs(self.calG(b) - self.calG(a) - quad))
        if drift > 1e-8:
            problems.append(f"calG' != G (max drift {drift:.3g})")
        return problems


def _logistic_prime(x):
    s = special.expit(x)
    return s * (1 - s)


def _logistic_second(x):
    s = special.expit(x)
    return s * (1 - s) * (1 - 2 * s)


def logistic_spec(alpha: float) -> ScoringSpec:
    """G = logistic sigmoid, calG = softplus. Bounded and strictly increasing."""
    return ScoringSpec(
        G=special.expit,
        G_prime=_logistic_prime,
        G_double_prime=_logistic_second,
        calG=lambda x: np.logaddexp(0.0, x),
        alpha=alpha,
        name="logistic",
    )


def _capped_exp(x):
    return np.exp(np.minimum(x, _EXP_CAP))


def exponential_spec(alpha: float) -> ScoringSpec:
    """G = calG = exp, with the argument capped to keep values finite."""
    return ScoringSpec(_capped_exp, _capped_exp, _capped_exp, _capped_exp, alpha, "exponential")


# Negative control: logistic G minus a Gaussian bump, so G' < 0 near -1.
_BUMP = 0.4


def _corrupted_G(x):
    return special.expit(x) - _BUMP * np.exp(-np.square(x))


def _corrupted_prime(x):
    return _logistic_prime(x) + 2 * _BUMP * x * np.exp(-np.square(x))


def _corrupted_second(x):
    return _logistic_second(x) + 2 * _BUMP * (1 - 2 * np.square(x)) * np.exp(-np.square(x))


def _corrupted_calG(x):
    erf = special.erf(np.asarray(x, dtype=np.float64))
    return np.logaddexp(0.0, x) - _BUMP * math.sqrt(math.pi) / 2 * (erf + 1)


def corrupted_spec(alpha: float) -> ScoringSpec:
    return ScoringSpec(_corrupted_G, _corrupted_prime, _corrupted_second, _corrupted_calG, alpha, "corrupted")


SPECS = {
    "logistic": logistic_spec,
    "exponential": exponential_spec,
    "corrupted": corrupted_spec,
}


def _integrate(f, a, b):
    """Vectorised 64-point Gauss-Legendre integral of ``f`` over [a, b] (b < a allowed)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = (b - a) / 2
    vals = f(half * _GL_T + (a + b) / 2)
    return np.sum(half * _GL_W * vals, axis=-1)


def pinball(alpha, x1, y):
    ind = (y <= x1).astype(float)
    return (ind - alpha) * (x1 - y)


def _real_arrays(*vals):
    # keeps extended precision when any input carries it
    arrs = [np.asarray(v) for v in vals]
    dtype = np.result_type(np.float64, *arrs)
    return np.broadcast_arrays(*(a.astype(dtype, copy=False) for a in arrs))


def score(spec: ScoringSpec, x1, x2, y):
    """Score of the forecast pair (x1, x2) for observation y, written out term by term."""
    x1, x2, y = _real_arrays(x1, x2, y)
    a = spec.alpha
    ind = (y <= x1).astype(float)
    g = spec.G(x2)
    out = (ind - a) * (x1 - y) + g * (x2 + (ind - a) * (x1 - y) / a) - spec.calG(x2) - g * y
    return out if out.ndim else float(out)


def score_rearranged(spec: ScoringSpec, x1, x2, y):
    """Equivalent form (1 + G(x2)/alpha) * pinball + G(x2)(x2 - y) - calG(x2)."""
    x1, x2, y = _real_arrays(x1, x2, y)
    g = spec.G(x2)
    out = (1 + g / spec.alpha) * pinball(spec.alpha, x1, y) + g * (x2 - y) - spec.calG(x2)
    return out if out.ndim else float(out)


def spectral_score(spec: ScoringSpec, quantiles, level, levels, weights, y):
    """Score for a finitely supported spectral risk measure.

    ``quantiles`` holds one forecast per level, ``level`` the forecast of the
    spectral risk itself. ``spec.alpha`` is ignored.
    """
    y, level = _real_arrays(y, level)
    g = spec.G(level)
    cg = spec.calG(level)
    total = np.zeros_like(y)
    for xm, am, pm in zip(quantiles, levels, weights):
        total = total + (1 + pm / am * g) * pinball(am, xm, y) + pm * (g * (level - y) - cg)
    return total


def _indicator_integral(x1, y1, z):
    """Exact value of the integral over s from 0 to y1 of 1{z <= x1 + s} - 1{z <= x1}."""
    d = z - x1
    up = np.where(d <= 0, 0.0, np.maximum(0.0, y1 - d))
    down = np.where(d <= 0, np.maximum(0.0, d - y1), 0.0)
    return np.where(y1 >= 0, up, down)


def score_increment_identity_check(spec: ScoringSpec, x1, y1, x2, y2, z) -> float:
    """Largest absolute residual over the scoring-function increment identities.

    Checks, elementwise over broadcast inputs:

    * the x2-increment written with the integral of G'(x2 + s) s,
    * the same increment after integrating by parts (G'' form),
    * the pinball increment in x1,
    * the joint increment in (x1, x2).

    Smooth integrals use Gauss-Legendre quadrature; the indicator integral is
    evaluated exactly.
    """
    x1, y1, x2, y2, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, y1, x2, y2, z)))
    a = spec.alpha
    lhs_a = score(spec, x1, x2 + y2, z) - score(spec, x1, x2, z)
    dG = spec.G(x2 + y2) - spec.G(x2)
    tail = x2 - x1 + (z <= x1) * (x1 - z) / a
    int1 = _integrate_shift(lambda s, c: spec.G_prime(c + s) * s, x2, y2)
    int2 = _integrate_shift(lambda s, c: spec.G_double_prime(c + s) * s * s, x2, y2)
    rhs_a1 = dG * tail + int1
    rhs_a2 = dG * tail + 0.5 * spec.G_prime(x2 + y2) * y2**2 - 0.5 * int2

    lhs_b = pinball(a, x1 + y1, z) - pinball(a, x1, z)
    rho_inc = y1 * ((z <= x1) - a) + _indicator_integral(x1, y1, z)

    lhs_c = score(spec, x1 + y1, x2 + y2, z) - score(spec, x1, x2, z)
    rhs_c = (1 + spec.G(x2 + y2) / a) * rho_inc + rhs_a2

    res = [lhs_a - rhs_a1, lhs_a - rhs_a2, lhs_b - rho_inc, lhs_c - rhs_c]
    return float(max(np.max(np.abs(r)) if np.size(r) else 0.0 for r in res))


def _integrate_shift(f, c, upper):
    # integral over s in [0, upper] of f(s, c), vectorised over (c, upper)
    c = np.asarray(c, dtype=float)[..., None]
    half = np.asarray(upper, dtype=float)[..., None] / 2
    s = half * _GL_T + half
    return np.sum(half * _GL_W * f(s, c), axis=-1)
