"""Synthetic distribution models with exact quantile, ES and local-expansion data.

Every model is an immutable value. Samples are produced by inverse transform
only, so a model is fully described by its quantile function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

__all__ = [
    "Kind",
    "DistributionModel",
    "LocalExpansion",
    "TrueRiskValues",
    "NoExpansionError",
    "kinked",
    "cubic",
    "standard_normal",
    "piecewise",
    "BUILTIN_MODELS",
    "get_model",
]

GL_NODES = 64
_KNOT_TOL = 1e-12


class Kind(enum.Enum):
    KINKED = "kinked"
    CUBIC = "cubic"
    NORMAL = "normal"
    PIECEWISE = "piecewise"


class NoExpansionError(ValueError):
    """Raised when no one-sided power expansion of F exists at the requested level."""


@dataclass(frozen=True)
class LocalExpansion:
    """One-sided power behaviour of ``F(x) - alpha`` around the alpha-quantile.

    ``kappa_minus`` is stored with its natural negative sign: on the left of the
    quantile ``F(x) - alpha = (q - x)**(l + 1) * kappa_minus``.
    """

    r: float
    l: float
    kappa_plus: float
    kappa_minus: float

    def __post_init__(self):
        if not (self.r > -1 and self.l > -1):
            raise ValueError(f"orders must exceed -1, got r={self.r}, l={self.l}")
        if not self.kappa_plus > 0:
            raise ValueError(f"kappa_plus must be positive, got {self.kappa_plus}")
        if not self.kappa_minus < 0:
            raise ValueError(f"kappa_minus must be negative, got {self.kappa_minus}")


@dataclass(frozen=True)
class TrueRiskValues:
    alpha: float
    q_alpha: float
    es_alpha: float


@dataclass(frozen=True)
class DistributionModel:
    """A law on the real line given by closed forms or by a monotone (u, x) table.

    ``loc`` shifts the whole law: ``Y = X + loc``.
    """

    kind: Kind
    loc: float = 0.0
    table: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind is Kind.PIECEWISE:
            if self.table is None:
                raise ValueError("piecewise model needs a (u, x) table")
            u, x = (np.asarray(c, dtype=float) for c in self.table)
            if u.ndim != 1 or u.shape != x.shape or u.size < 2:
                raise ValueError("table needs two equal-length columns with at least two rows")
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(x))):
                raise ValueError("table entries must be finite")
            if np.any(np.diff(u) <= 0) or np.any(np.diff(x) <= 0):
                raise ValueError("both table columns must be strictly increasing")
            if u[0] != 0.0 or u[-1] != 1.0:
                raise ValueError("table u column must start at 0 and end at 1")
        elif self.table is not None:
            raise ValueError(f"{self.kind.value} model takes no table")

    # -- basic description -------------------------------------------------

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def support(self) -> tuple[float, float]:
        if self.kind is Kind.KINKED:
            lo, hi = -1.0, 0.5
        elif self.kind is Kind.CUBIC:
            lo, hi = 0.0, 2.0
        elif self.kind is Kind.NORMAL:
            lo, hi = -math.inf, math.inf
        else:
            lo, hi = self.table[1][0], self.table[1][-1]
        return lo + self.loc, hi + self.loc

    def shifted(self, c: float) -> "DistributionModel":
        return DistributionModel(self.kind, self.loc + c, self.table)

    def _arrays(self):
        u, x = self.table
        return np.asarray(u, dtype=float), np.asarray(x, dtype=float)

    # -- distribution function and its inverse -----------------------------

    def cdf(self, x):
        """Distribution function, clamped to [0, 1] outside the support."""
        z = np.asarray(x, dtype=float) - self.loc
        if self.kind is Kind.KINKED:
            out = np.where(z <= 0, (z + 1) / 5, 0.2 + 1.6 * z)
        elif self.kind is Kind.CUBIC:
            out = ((z - 1) ** 3 + 1) / 2
        elif self.kind is Kind.NORMAL:
            out = special.ndtr(z)
        else:
            u, xs = self._arrays()
            out = np.interp(z, xs, u)
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        """Lower quantile function inf{x : F(x) >= u} on the open unit interval."""
        u = np.asarray(u, dtype=float)
        if np.any(~((u > 0) & (u < 1))):
            raise ValueError("quantile level must lie in the open interval (0, 1)")
        return self._ppf(u)

    def _ppf(self, u):
        # closed unit interval allowed; callers validate
        if self.kind is Kind.KINKED:
            out = np.where(u <= 0.2, 5 * u - 1, (5 * u - 1) / 8)
        elif self.kind is Kind.CUBIC:
            out = 1 + np.cbrt(2 * u - 1)
        elif self.kind is Kind.NORMAL:
            out = special.ndtri(u)
        else:
            us, xs = self._arrays()
            out = np.interp(u, us, xs)
        out = out + self.loc
        return out if np.ndim(out) else float(out)

    inverse_cdf = ppf

    def sample(self, u):
        """Inverse-transform map of uniforms to draws; identical to :meth:`ppf`."""
        return self.ppf(u)

    def _ppf_breaks(self) -> list[float]:
        # levels where the quantile function is not smooth
        if self.kind is Kind.KINKED:
            return [0.2]
        if self.kind is Kind.CUBIC:
            return [0.5]
        if self.kind is Kind.PIECEWISE:
            return list(self.table[0][1:-1])
        return []

    # -- moments -----------------------------------------------------------

    def mean(self) -> float:
        if self.kind is Kind.KINKED:
            m = 0.2 * (-0.5) + 0.8 * 0.25
        elif self.kind is Kind.CUBIC:
            m = 1.0
        elif self.kind is Kind.NORMAL:
            m = 0.0
        else:
            u, x = self._arrays()
            m = float(np.sum(np.diff(u) * (x[1:] + x[:-1]) / 2))
        return m + self.loc

    def truncated_moment(self, c: float, power: int) -> float:
        """E[1{Y <= c} Y**power] for ``power`` in {1, 2}."""
        if power not in (1, 2):
            raise ValueError(f"power must be 1 or 2, got {power}")
        if self.kind is Kind.PIECEWISE:
            return self.quadrature_moment(c, power)
        z = c - self.loc
        p0 = float(self.cdf(c))
        m1 = self._base_moment(z, 1)
        if power == 1:
            return m1 + self.loc * p0
        m2 = self._base_moment(z, 2)
        return m2 + 2 * self.loc * m1 + self.loc**2 * p0

    def _base_moment(self, z: float, power: int) -> float:
        # moments of the unshifted law
        if self.kind is Kind.KINKED:
            a = min(max(z, -1.0), 0.0)
            b = min(max(z, 0.0), 0.5)
            k = power + 1
            return ((a**k - (-1.0) ** k) / 5 + 8 * b**k / 5) / k
        if self.kind is Kind.CUBIC:
            t = min(max(z, 0.0), 2.0) - 1.0
            if power == 1:
                prim = lambda s: 1.5 * (s**3 / 3 + s**4 / 4)
            else:
                prim = lambda s: 1.5 * (s**3 / 3 + s**4 / 2 + s**5 / 5)
            return prim(t) - prim(-1.0)
        # standard normal
        if math.isinf(z):
            return (0.0 if power == 1 else 1.0) if z > 0 else 0.0
        pdf = math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
        if power == 1:
            return -pdf
        return float(special.ndtr(z)) - z * pdf

    def quadrature_moment(self, c: float, power: int, nodes: int = GL_NODES) -> float:
        """E[1{Y <= c} Y**power] as the integral of ppf(u)**power over (0, F(c)).

        Fixed-order Gauss-Legendre on each smooth piece of the quantile function,
        after the substitution u = a + (b - a) s(x) with the degree-7 smoothstep s.
        s' vanishes to third order at both ends, which tames the cube-root and
        logarithmic endpoint singularities of the built-in quantile functions.
        """
        top = float(self.cdf(c))
        if top <= 0:
            return 0.0
        edges = [0.0] + [b for b in self._ppf_breaks() if 0 < b < top] + [top]
        t, w = np.polynomial.legendre.leggauss(nodes)
        x = (t + 1) / 2
        s = x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)
        ds = 140 * x**3 * (1 - x) ** 3
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            u = a + (b - a) * s
            total += (b - a) / 2 * float(np.dot(w * ds, self._ppf(u) ** power))
        return total

    # -- risk functionals --------------------------------------------------

    def true_values(self, alpha: float) -> TrueRiskValues:
        q = float(self.ppf(alpha))
        es = self.truncated_moment(q, 1) / alpha
        return TrueRiskValues(alpha, q, es)

    def local_expansion(self, alpha: float) -> LocalExpansion:
        """Orders and leading constants of ``F - alpha`` on both sides of q_alpha."""
        if not 0 < alpha < 1:
            raise NoExpansionError(f"no expansion available at level {alpha}")
        z = float(self.ppf(alpha)) - self.loc
        if self.kind is Kind.KINKED:
            left = 0.2 if z <= _KNOT_TOL else 1.6
            right = 0.2 if z < -_KNOT_TOL else 1.6
            return LocalExpansion(0.0, 0.0, right, -left)
        if self.kind is Kind.CUBIC:
            if abs(z - 1.0) <= _KNOT_TOL:
                return LocalExpansion(2.0, 2.0, 0.5, -0.5)
            f = 1.5 * (z - 1.0) ** 2
            return LocalExpansion(0.0, 0.0, f, -f)
        if self.kind is Kind.NORMAL:
            f = math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
            return LocalExpansion(0.0, 0.0, f, -f)
        u, x = self._arrays()
        slopes = np.diff(u) / np.diff(x)
        k = int(np.argmin(np.abs(x - z)))
        if abs(x[k] - z) <= _KNOT_TOL * max(1.0, abs(z)):
            left, right = slopes[max(k - 1, 0)], slopes[min(k, slopes.size - 1)]
        else:
            j = int(np.searchsorted(x, z, side="right")) - 1
            left = right = slopes[min(max(j, 0), slopes.size - 1)]
        return LocalExpansion(0.0, 0.0, float(right), -float(left))


def kinked(loc: float = 0.0) -> DistributionModel:
    """Piecewise-uniform law on (-1, 1/2] with slopes 1/5 and 8/5 meeting at 0."""
    return DistributionModel(Kind.KINKED, loc)


def cubic(loc: float = 0.0) -> DistributionModel:
    """F(x) = ((x - 1)^3 + 1) / 2 on [0, 2]; density has a double root at 1."""
    return DistributionModel(Kind.CUBIC, loc)


def standard_normal(loc: float = 0.0) -> DistributionModel:
    return DistributionModel(Kind.NORMAL, loc)


def piecewise(u, x, loc: float = 0.0) -> DistributionModel:
    """Law whose quantile function linearly interpolates the table (u, x)."""
    table = (tuple(float(v) for v in u), tuple(float(v) for v in x))
    return DistributionModel(Kind.PIECEWISE, loc, table)


BUILTIN_MODELS = {
    "kinked": kinked,
    "cubic": cubic,
    "normal": standard_normal,
}


_ALIASES = {"kink": "kinked", "standardnormal": "normal", "gaussian": "normal"}


def get_model(name: str, loc: float = 0.0) -> DistributionModel:
    """Look up a built-in model, suggesting close names on a miss."""
    key = name.strip().lower()
    key = _ALIASES.get(key.removesuffix("cdf"), key.removesuffix("cdf"))
    if key in BUILTIN_MODELS:
        return BUILTIN_MODELS[key](loc)
    import difflib

    close = difflib.get_close_matches(key, BUILTIN_MODELS, n=3)
    hint = f" (did you mean {', '.join(close)}?)" if close else ""
    raise KeyError(f"unknown model {name!r}{hint}; built-ins: {', '.join(BUILTIN_MODELS)}")
