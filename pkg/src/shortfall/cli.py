"""Command-line front end: ``shortfall {simulate,estimate,limits,bootstrap,identities}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import asymptotics as asy
from . import estimators as est
from . import montecarlo as mc
from .config import ConfigError, load_simulation_config, parse_list
from .io import ParseError, load_sample, write_csv, write_text
from .models import NoExpansionError, get_model
from .scoring import SPECS, score_increment_identity_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

OUT_ENV = "SHORTFALL_OUT"
DEFAULT_OUT = "shortfall-out"
IDENTITY_TOL = 1e-8
DENSITY_TOL = 5e-3


class UsageError(Exception):
    pass


class CheckFailure(Exception):
    pass


def _out_dir(args) -> str:
    return args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _model(name):
    try:
        return get_model(name)
    except KeyError as e:
        raise UsageError(e.args[0]) from None


def _levels(text):
    try:
        return [float(a) for a in parse_list(text)]
    except ValueError:
        raise UsageError(f"cannot parse level list {text!r}") from None


def _read_sample(path):
    try:
        return load_sample(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config FILE")
    cfg = load_simulation_config(args.config, seed=args.seed, workers=args.workers, out_dir=args.out)
    if cfg.out_dir is None:
        cfg = replace(cfg, out_dir=_out_dir(args))
    summary = mc.run_simulation(cfg)
    print(summary.table())
    print(f"\nwrote {os.path.join(cfg.out_dir, 'summary.csv')}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    levels = _levels(args.alpha)
    for a in levels:
        if not 0 < a < 1:
            raise UsageError(f"alpha must lie in (0, 1), got {a}")
    if args.weights is not None:
        weights = _levels(args.weights)
        try:
            mu = est.SpectralMeasure(levels, weights)
        except ValueError as e:
            raise UsageError(str(e)) from None
    else:
        try:
            mu = est.SpectralMeasure(levels, [1.0 / len(levels)] * len(levels))
        except ValueError as e:
            raise UsageError(str(e)) from None
    x = _read_sample(args.data)
    n = x.size
    model = _model(args.model) if args.model else None

    report = {"n": n, "levels": []}
    for a in mu.levels:
        q = est.empirical_quantile(x, a)
        below = x <= q
        entry = {
            "alpha": a,
            "q_hat": q,
            "es_hat": est.contrast_es(x, a),
            "empirical_es": est.empirical_es(x, a),
        }
        if n > 1:
            # influence-function variance of the ES estimate at the sample quantile
            infl = np.where(below, x - q, 0.0) / a + q
            entry["es_se_sample"] = float(np.std(infl, ddof=1) / math.sqrt(n))
        if model is not None:
            sigma = asy.sigma_joint(model, a)
            entry["es_se_model"] = math.sqrt(sigma[1, 1] / n)
        report["levels"].append(entry)
    spectral = {
        "levels": list(mu.levels),
        "weights": list(mu.weights),
        "nu_hat": est.spectral_estimate(x, mu),
    }
    if model is not None:
        spectral["se_model"] = math.sqrt(asy.spectral_limit_variance(model, mu) / n)
    report["spectral"] = spectral
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _grid(lo, hi, step):
    if not step > 0 or hi < lo:
        raise UsageError(f"bad grid [{lo}, {hi}] step {step}")
    k = int(round((hi - lo) / step))
    return lo + step * np.arange(k + 1)


def _density_axes(law, args, points=241):
    # unset bounds default to +-6 sd of W1 (mapped back through psi) and of W2
    s1, s2 = 6 * math.sqrt(law.sigma[0, 0]), 6 * math.sqrt(law.sigma[1, 1])
    tmin = args.tmin if args.tmin is not None else float(asy.psi_inverse(law.psi, -s1))
    tmax = args.tmax if args.tmax is not None else float(asy.psi_inverse(law.psi, s1))
    vmin = args.vmin if args.vmin is not None else -s2
    vmax = args.vmax if args.vmax is not None else s2
    vstep = args.vstep or (vmax - vmin) / (points - 1)
    v = _grid(vmin, vmax, vstep)
    if args.tstep or not tmin < 0 < tmax:
        return _grid(tmin, tmax, args.tstep or (tmax - tmin) / (points - 1)), v
    # put a node at 0, where the density may jump
    k = max(2, round(points * -tmin / (tmax - tmin)))
    return np.concatenate([np.linspace(tmin, 0.0, k), np.linspace(0.0, tmax, points - k + 1)[1:]]), v


def _grid_mass(law, t, v) -> float:
    """Trapezoid mass of the joint density, integrating each side of t = 0 separately."""
    pieces = [t[t <= 0], t[t >= 0]] if t[0] < 0 < t[-1] and 0.0 in t else [t]
    mass = 0.0
    for piece in pieces:
        if piece.size < 2:
            continue
        nodes = piece.copy()
        # one-sided limit at the shared endpoint
        nodes[nodes == 0] = -1e-300 if piece[0] < 0 else 1e-300
        tt, vv = np.meshgrid(nodes, v, indexing="ij")
        dens = np.asarray(asy.limit_joint_density(law, tt, vv))
        mass += float(np.trapezoid(np.trapezoid(dens, v, axis=1), piece))
    return mass


def cmd_limits(args) -> int:
    model = _model(args.model)
    law = asy.joint_law(model, args.alpha)
    out = _out_dir(args)
    z = _grid(args.zmin, args.zmax, args.zstep)
    cdf = np.asarray(asy.limit_quantile_cdf(law, z))
    write_csv(os.path.join(out, "limit_cdf.csv"), ("z", "cdf"), ((repr(float(a)), repr(float(b))) for a, b in zip(z, cdf)))
    print(f"rate a_n = n^{law.rate_exponent:.6g}, psi shape {law.psi.shape.value}")
    problems = []
    if np.any(np.diff(cdf) < 0):
        problems.append("limit CDF column is not monotone")
    if law.psi.shape is asy.Shape.TWO_SIDED_POWER:
        t, v = _density_axes(law, args)
        tt, vv = np.meshgrid(t, v, indexing="ij")
        dens = np.asarray(asy.limit_joint_density(law, tt, vv))
        rows = (
            (repr(float(a)), repr(float(b)), repr(float(c)))
            for a, b, c in zip(tt.ravel(), vv.ravel(), dens.ravel())
        )
        write_csv(os.path.join(out, "limit_density.csv"), ("t", "v", "density"), rows)
        mass = _grid_mass(law, t, v)
        print(f"density mass on grid: {mass:.6f}")
        if args.selfcheck and abs(mass - 1) > DENSITY_TOL:
            problems.append(f"density integrates to {mass:.6f}, outside 1 +- {DENSITY_TOL}")
    else:
        print("psi is not invertible: no joint density grid")
    print(f"wrote {out}")
    if args.selfcheck:
        if problems:
            raise CheckFailure("; ".join(problems))
        print("selfcheck passed")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    model = _model(args.model)
    law = asy.joint_law(model, args.alpha)
    seed = 0 if args.seed is None else args.seed
    if args.data:
        x = _read_sample(args.data)
    else:
        x = mc.draw_sample(model, args.n, mc.replication_rng(seed, 0, 0))
    reports = []
    if args.method in ("n_out_of_n", "both"):
        reports.append(mc.bootstrap_es(x, args.alpha, args.B, seed, float(law.sigma[1, 1])))
    if args.method in ("subsample", "both"):
        b = args.b if args.b is not None else int(math.floor(x.size**0.7))
        reports.append(mc.subsample_quantile(x, args.alpha, b, args.B, seed, law))
    out = _out_dir(args)
    path = os.path.join(out, "bootstrap.csv")
    write_csv(path, mc.BootstrapReport.CSV_HEADER, (r.csv_row() for r in reports))
    for r in reports:
        size = "" if r.b is None else f" b={r.b}"
        print(f"{r.method.value}{size} B={r.B}: KS {r.ks:.4f} vs {r.reference}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_identities(args) -> int:
    spec = SPECS[args.spec](args.alpha)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0 if args.seed is None else args.seed)))
    tuples = rng.uniform(-2.0, 2.0, size=(args.trials, 5))
    residual = float(score_increment_identity_check(spec, *tuples.T))
    bad = spec.violations()
    print(f"max increment-identity residual over {args.trials} tuples: {residual:.3e}")
    for msg in bad:
        print(f"scoring spec {spec.name!r}: {msg}")
    if not residual <= IDENTITY_TOL or bad:
        raise CheckFailure(f"identity check failed (tolerance {IDENTITY_TOL:g})")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--workers", type=_positive_int, help="worker processes for Monte Carlo work")
    common.add_argument("--out", help=f"output location (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--config", help="experiment configuration file")
    common.add_argument("--selfcheck", action="store_true", help="verify outputs; exit 4 on failure")

    p = argparse.ArgumentParser(prog="shortfall", description="Quantile / expected shortfall estimation and limit laws.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo study from a config file")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="point estimates from a data file (JSON report)")
    s.add_argument("data")
    s.add_argument("--alpha", required=True, help="level or comma-separated levels")
    s.add_argument("--weights", help="spectral weights, one per level, summing to 1")
    s.add_argument("--model", help="built-in model for plug-in standard errors")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("limits", parents=[common], help="write limit CDF and joint density grids")
    s.add_argument("--model", required=True, help="built-in model name")
    s.add_argument("--alpha", type=float, required=True, help="level in (0, 1)")
    for name, lo, hi, step in (("z", -3.0, 3.0, 0.01), ("t", None, None, None), ("v", None, None, None)):
        s.add_argument(f"--{name}min", type=float, default=lo, help=f"lower end of the {name} grid")
        s.add_argument(f"--{name}max", type=float, default=hi, help=f"upper end of the {name} grid")
        s.add_argument(f"--{name}step", type=float, default=step, help=f"{name} grid spacing")
    s.set_defaults(func=cmd_limits)

    s = sub.add_parser("bootstrap", parents=[common], help="resampling probes against the limit laws")
    s.add_argument("--model", required=True, help="built-in model name")
    s.add_argument("--alpha", type=float, required=True, help="level in (0, 1)")
    s.add_argument("--n", type=_positive_int, default=10_000, help="simulated sample size")
    s.add_argument("--data", help="use this sample instead of simulating one")
    s.add_argument("--B", type=_positive_int, default=2000, help="resamples")
    s.add_argument("--b", type=_positive_int, help="subsample size (default floor(n^0.7))")
    s.add_argument("--method", choices=("n_out_of_n", "subsample", "both"), default="both", help="which probe to run")
    s.set_defaults(func=cmd_bootstrap)

    s = sub.add_parser("identities", parents=[common], help="check the score-increment identity")
    s.add_argument("--trials", type=_positive_int, default=1000, help="random argument tuples to test")
    s.add_argument("--alpha", type=float, default=0.2, help="level in (0, 1)")
    s.add_argument("--spec", choices=sorted(SPECS), default="logistic", help="scoring spec (testing hook)")
    s.set_defaults(func=cmd_identities)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else str(e)
        print(f"shortfall: error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as e:
        print(f"shortfall: check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except (NoExpansionError, asy.UnsupportedShapeError, ValueError) as e:
        print(f"shortfall: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ArithmeticError) as e:
        print(f"shortfall: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
