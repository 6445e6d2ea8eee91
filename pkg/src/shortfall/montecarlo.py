"""Seeded, worker-count-independent Monte Carlo replication of the limit theorems.

Seeding
-------
Replication ``r`` of the ``i``-th sample size draws its uniforms from a Philox
(counter-based) bit generator keyed by ``SeedSequence(master_seed,
spawn_key=(i, r))``. Any replication can therefore be regenerated in isolation,
and the draws do not depend on how replications are split across workers.
Aggregates are formed after all replications are collected, in replication
order, with correctly rounded sums (``math.fsum``), so they are bitwise stable.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import estimators as est
from .asymptotics import JointLaw, joint_law, limit_joint_cdf, limit_quantile_cdf
from .io import write_csv
from .models import DistributionModel

__all__ = [
    "replication_rng",
    "draw_sample",
    "replicate",
    "SimulationConfig",
    "SummaryRow",
    "SimulationSummary",
    "run_simulation",
    "ks_distance",
    "joint_grid_discrepancy",
    "Method",
    "BootstrapReport",
    "bootstrap_es",
    "subsample_quantile",
    "UNDEFINED",
]

UNDEFINED = "undefined"
LARGE_RUN_DRAWS = 10**10

QUANTILE = "quantile"
ES = "es"
SMOOTHED_QUANTILE = "smoothed_quantile"
SMOOTHED_ES = "smoothed_es"


def replication_rng(seed: int, n_index: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(n_index, rep))
    return np.random.Generator(np.random.Philox(ss))


def _open_uniforms(rng: np.random.Generator, size: int) -> np.ndarray:
    # midpoints of the 2**53 grid: never 0 or 1
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) * 2.0**-53


def draw_sample(model: DistributionModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n inverse-transform draws from ``model``."""
    return model.ppf(_open_uniforms(rng, n))


def _run_chunk(model, seed, n_index, n, start, stop, fn):
    rows = []
    for r in range(start, stop):
        x = draw_sample(model, n, replication_rng(seed, n_index, r))
        rows.append(fn(x))
    return np.asarray(rows, dtype=float).reshape(stop - start, -1)


def replicate(
    model: DistributionModel,
    n_list: Sequence[int],
    m: int,
    seed: int,
    fn: Callable[[np.ndarray], Sequence[float]],
    workers: int = 1,
    fn_per_n: Optional[Sequence[Callable]] = None,
) -> list[np.ndarray]:
    """Apply ``fn`` to ``m`` fresh samples of every size in ``n_list``.

    Returns one ``(m, k)`` array per sample size, rows in replication order.
    ``fn`` must be picklable when ``workers > 1``. ``fn_per_n`` overrides ``fn``
    per sample size.
    """
    if m < 1:
        raise ValueError("need at least one replication")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    fns = list(fn_per_n) if fn_per_n is not None else [fn] * len(n_list)
    chunk = max(1, math.ceil(m / (4 * workers)))
    tasks = [
        (i, int(n), s, min(s + chunk, m), fns[i])
        for i, n in enumerate(n_list)
        for s in range(0, m, chunk)
    ]
    if workers == 1:
        parts = [_run_chunk(model, seed, *t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, model, seed, *t) for t in tasks]
            parts = [f.result() for f in futures]
    out = []
    for i in range(len(n_list)):
        out.append(np.concatenate([p for p, t in zip(parts, tasks) if t[0] == i], axis=0))
    return out


# -- simulation study ---------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    model: DistributionModel
    alpha: float
    n_list: tuple[int, ...]
    m: int
    seed: int
    bandwidths: Optional[tuple[float, ...]] = None
    smoothed: bool = False
    out_dir: Optional[str] = None
    workers: int = 1
    allow_large: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.n_list:
            raise ValueError("n_list must be non-empty")
        if any(int(n) < 1 for n in self.n_list):
            raise ValueError("sample sizes must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.bandwidths is not None and len(self.bandwidths) != len(self.n_list):
            raise ValueError("bandwidth list must pair with the n list")
        if self.smoothed and self.bandwidths is None:
            raise ValueError("smoothed estimators need a bandwidth list")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.allow_large and self.m * max(self.n_list) > LARGE_RUN_DRAWS:
            raise ValueError("run exceeds 1e10 draws; set allow_large to proceed")


@dataclass(frozen=True)
class SummaryRow:
    n: int
    estimator: str
    mean: float
    sd: Optional[float]
    corr: Optional[float]


@dataclass
class SimulationSummary:
    config: SimulationConfig
    law: JointLaw
    rows: list[SummaryRow]
    rescaled: dict[int, dict[str, np.ndarray]] = field(repr=False)

    def row(self, n: int, estimator: str) -> SummaryRow:
        for r in self.rows:
            if r.n == n and r.estimator == estimator:
                return r
        raise KeyError((n, estimator))

    def cdf_values(self, n: int, estimator: str) -> np.ndarray:
        """Sorted rescaled values: the empirical CDF support points."""
        return np.sort(self.rescaled[n][estimator])

    def write(self, out_dir: str) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        summary_rows = [
            (r.n, r.estimator, _fmt(r.mean), _fmt(r.sd), _fmt(r.corr)) for r in self.rows
        ]
        path = os.path.join(out_dir, "summary.csv")
        write_csv(path, ("n", "estimator", "mean", "sd", "corr"), summary_rows)
        paths.append(path)
        for n, vals in self.rescaled.items():
            names = [k for k in (QUANTILE, ES, SMOOTHED_QUANTILE, SMOOTHED_ES) if k in vals]
            cols = [np.sort(vals[k]) for k in names]
            path = os.path.join(out_dir, f"cdf_{n}.csv")
            write_csv(path, names, [tuple(_fmt(c[i]) for c in cols) for i in range(len(cols[0]))])
            paths.append(path)
        return paths

    def table(self) -> str:
        """Plain-text table of means, standard deviations and correlations by sample size."""
        ns = list(self.config.n_list)
        ests = []
        for r in self.rows:
            if r.estimator not in ests:
                ests.append(r.estimator)
        labels = {
            QUANTILE: "a_n (q_hat - q)",
            SMOOTHED_QUANTILE: "a_n (q_tilde - q)",
            ES: "sqrt(n) (es_hat - es)",
            SMOOTHED_ES: "sqrt(n) (es_tilde - es)",
        }
        width = 11
        head = f"{'':<12}{'':<34}" + "".join(f"{n:>{width}}" for n in ns)
        lines = [head, "-" * len(head)]
        for title, attr in (("Mean", "mean"), ("Std. dev.", "sd")):
            for j, e in enumerate(ests):
                cells = "".join(f"{_short(getattr(self.row(n, e), attr)):>{width}}" for n in ns)
                lines.append(f"{title if j == 0 else '':<12}{labels[e]:<34}{cells}")
            lines.append("-" * len(head))
        pairs = [(QUANTILE, ES)] + ([(SMOOTHED_QUANTILE, SMOOTHED_ES)] if SMOOTHED_ES in ests else [])
        for j, (a, b) in enumerate(pairs):
            cells = "".join(f"{_short(self.row(n, a).corr):>{width}}" for n in ns)
            lines.append(f"{'Correlation' if j == 0 else '':<12}{a + ' / ' + b:<34}{cells}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return UNDEFINED
    return repr(float(v))


def _short(v) -> str:
    return UNDEFINED if v is None else f"{v:.2f}"


def _moments(v: np.ndarray):
    m = v.size
    mean = math.fsum(v) / m
    if m < 2:
        return mean, None
    dev = v - mean
    return mean, math.sqrt(math.fsum(dev * dev) / (m - 1))


def _corr(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if a.size < 2:
        return None
    da = a - math.fsum(a) / a.size
    db = b - math.fsum(b) / b.size
    saa, sbb = math.fsum(da * da), math.fsum(db * db)
    if saa == 0 or sbb == 0:
        return None
    c = math.fsum(da * db) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, c))


def _point_estimates(x, alpha, h=None):
    q = est.empirical_quantile(x, alpha)
    es = est.contrast_es(x, alpha)
    if h is None:
        return q, es
    qs = est.smoothed_quantile(x, alpha, h)
    return q, es, qs, est.smoothed_es(x, alpha, h, q_smooth=qs)


def run_simulation(cfg: SimulationConfig) -> SimulationSummary:
    """Simulate the rescaled, centred estimators for every sample size in ``cfg``."""
    law = joint_law(cfg.model, cfg.alpha)
    tv = cfg.model.true_values(cfg.alpha)
    hs = cfg.bandwidths if cfg.smoothed else [None] * len(cfg.n_list)
    fns = [partial(_point_estimates, alpha=cfg.alpha, h=h) for h in hs]
    raw = replicate(cfg.model, cfg.n_list, cfg.m, cfg.seed, None, cfg.workers, fn_per_n=fns)
    rows, rescaled = [], {}
    for n, vals in zip(cfg.n_list, raw):
        n = int(n)
        a_n = float(law.rate(n))
        r_n = math.sqrt(n)
        res = {QUANTILE: a_n * (vals[:, 0] - tv.q_alpha), ES: r_n * (vals[:, 1] - tv.es_alpha)}
        if cfg.smoothed:
            res[SMOOTHED_QUANTILE] = a_n * (vals[:, 2] - tv.q_alpha)
            res[SMOOTHED_ES] = r_n * (vals[:, 3] - tv.es_alpha)
        rescaled[n] = res
        pairs = [(QUANTILE, ES)] + ([(SMOOTHED_QUANTILE, SMOOTHED_ES)] if cfg.smoothed else [])
        for qk, ek in pairs:
            c = _corr(res[qk], res[ek])
            for key in (qk, ek):
                mean, sd = _moments(res[key])
                rows.append(SummaryRow(n, key, mean, sd, c))
    summary = SimulationSummary(cfg, law, rows, rescaled)
    if cfg.out_dir:
        summary.write(cfg.out_dir)
    return summary


# -- distances to limit laws --------------------------------------------------


def ks_distance(values, cdf: Callable) -> float:
    """sup_x |F_n(x) - F(x)| over the sample points, both one-sided gaps."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    if np.any(np.diff(v) < 0):
        raise ValueError("values must be sorted")
    f = np.asarray(cdf(v), dtype=float)
    n = v.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def joint_grid_discrepancy(q_values, es_values, law: JointLaw, t_grid, v_grid) -> float:
    """max over a (t, v) grid of |empirical joint CDF - limit joint CDF|."""
    q = np.asarray(q_values, dtype=float)
    e = np.asarray(es_values, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    tt, vv = np.meshgrid(t_grid, v_grid, indexing="ij")
    ref = limit_joint_cdf(law, tt, vv)
    order = np.argsort(e, kind="stable")
    e_sorted, q_by_e = e[order], q[order]
    emp = np.empty_like(ref)
    for j, v in enumerate(v_grid):
        qs = np.sort(q_by_e[: np.searchsorted(e_sorted, v, side="right")])
        emp[:, j] = np.searchsorted(qs, t_grid, side="right") / q.size
    return float(np.max(np.abs(emp - ref)))


# -- resampling probes --------------------------------------------------------


class Method(enum.Enum):
    N_OUT_OF_N = "n_out_of_n"
    SUBSAMPLE = "subsample"


@dataclass(frozen=True)
class BootstrapReport:
    method: Method
    B: int
    ks: float
    reference: str
    b: Optional[int] = None
    degenerate: bool = False
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0 <= self.ks <= 1:
            raise ValueError("KS distance must lie in [0, 1]")

    def csv_row(self):
        return (self.method.value, self.B, "" if self.b is None else self.b, _fmt(self.ks), self.reference, int(self.degenerate))

    CSV_HEADER = ("method", "B", "b", "ks", "reference", "degenerate")


def bootstrap_es(sample, alpha: float, B: int, seed: int, reference_variance: float) -> BootstrapReport:
    """n-out-of-n bootstrap law of sqrt(n)(es* - es_hat) against N(0, reference_variance)."""
    if B < 1:
        raise ValueError("B must be >= 1")
    x = np.asarray(sample, dtype=float)
    n = x.size
    es_hat = est.contrast_es(x, alpha)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    vals = np.empty(B)
    for b in range(B):
        xb = x[rng.integers(0, n, size=n)]
        vals[b] = math.sqrt(n) * (est.contrast_es(xb, alpha) - es_hat)
    vals.sort()
    sd = math.sqrt(reference_variance)
    ks = ks_distance(vals, lambda v: special.ndtr(v / sd))
    return BootstrapReport(
        Method.N_OUT_OF_N, B, ks, f"N(0, {reference_variance:.6g})", degenerate=B < 2, values=vals
    )


def subsample_quantile(sample, alpha: float, b: int, B: int, seed: int, law: JointLaw) -> BootstrapReport:
    """Subsampling law of a_b (q_b* - q_hat_n), size-b draws without replacement."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    if not 1 <= b <= n:
        raise ValueError(f"subsample size must satisfy 1 <= b <= n={n}, got {b}")
    if B < 1:
        raise ValueError("B must be >= 1")
    q_hat = est.empirical_quantile(x, alpha)
    a_b = float(law.rate(b))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    vals = np.empty(B)
    for j in range(B):
        xb = x[rng.choice(n, size=b, replace=False)]
        vals[j] = a_b * (est.empirical_quantile(xb, alpha) - q_hat)
    vals.sort()
    ks = ks_distance(vals, lambda z: limit_quantile_cdf(law, z))
    return BootstrapReport(
        Method.SUBSAMPLE, B, ks, f"limit quantile law (rate n^{law.rate_exponent:.4g})", b=b,
        degenerate=B < 2, values=vals,
    )
