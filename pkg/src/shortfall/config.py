"""Experiment configuration files (INI-style sections of ``key = value`` lines)."""

from __future__ import annotations

import configparser
import re
from typing import Optional

from .io import load_piecewise_model
from .models import BUILTIN_MODELS, DistributionModel, get_model
from .montecarlo import SimulationConfig

__all__ = ["ConfigError", "load_simulation_config", "parse_list"]


class ConfigError(ValueError):
    pass


def parse_list(text: str, kind=float) -> list:
    items = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    return [kind(float(t)) if kind is int else kind(t) for t in items]


class _Source:
    def __init__(self, path):
        self.path = path
        self.lines = {}
        section = None
        with open(path) as fh:
            for i, raw in enumerate(fh, start=1):
                s = raw.strip()
                m = re.match(r"\[(.+)\]$", s)
                if m:
                    section = m.group(1).strip().lower()
                elif "=" in s and section and not s.startswith(("#", ";")):
                    self.lines[(section, s.split("=", 1)[0].strip().lower())] = i

    def error(self, section, key, msg) -> ConfigError:
        line = self.lines.get((section, key))
        where = f"{self.path}:{line}" if line else self.path
        return ConfigError(f"{where}: [{section}] {key}: {msg}")


def load_simulation_config(
    path,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> SimulationConfig:
    """Build a :class:`SimulationConfig` from ``path``; CLI overrides win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    src = _Source(path)

    def need(section, key):
        if not cp.has_option(section, key):
            raise ConfigError(f"{path}: missing required key [{section}] {key}")
        return cp.get(section, key)

    def convert(section, key, fn, what):
        raw = need(section, key)
        try:
            return fn(raw)
        except ValueError:
            raise src.error(section, key, f"expected {what}, got {raw!r}") from None

    name = need("model", "name").strip().lower()
    loc = convert("model", "loc", float, "a number") if cp.has_option("model", "loc") else 0.0
    if name == "piecewise":
        table = need("model", "table")
        try:
            model: DistributionModel = load_piecewise_model(table, loc)
        except (OSError, ValueError) as e:
            raise src.error("model", "table", str(e)) from None
    else:
        try:
            model = get_model(name, loc)
        except KeyError as e:
            raise src.error("model", "name", e.args[0] + ", piecewise") from None

    alpha = convert("model", "alpha", float, "a level in (0, 1)")
    n_list = tuple(convert("simulation", "n", lambda s: parse_list(s, int), "a list of sample sizes"))
    if not n_list:
        raise src.error("simulation", "n", "the list of sample sizes is empty")
    m = convert("simulation", "m", int, "an integer replication count")
    cfg_seed = convert("simulation", "seed", int, "an integer seed") if cp.has_option("simulation", "seed") else 0
    cfg_workers = convert("simulation", "workers", int, "an integer") if cp.has_option("simulation", "workers") else 1
    bandwidths = None
    if cp.has_option("simulation", "bandwidths"):
        bandwidths = tuple(convert("simulation", "bandwidths", parse_list, "a list of bandwidths"))
    smoothed = False
    if cp.has_option("simulation", "smoothed"):
        try:
            smoothed = cp.getboolean("simulation", "smoothed")
        except ValueError:
            raise src.error("simulation", "smoothed", "expected yes/no") from None
    allow_large = cp.has_option("simulation", "allow_large") and cp.getboolean("simulation", "allow_large")
    cfg_out = cp.get("output", "dir", fallback=None)

    try:
        return SimulationConfig(
            model=model,
            alpha=alpha,
            n_list=n_list,
            m=m,
            seed=cfg_seed if seed is None else seed,
            bandwidths=bandwidths,
            smoothed=smoothed,
            out_dir=out_dir if out_dir is not None else cfg_out,
            workers=cfg_workers if workers is None else workers,
            allow_large=allow_large,
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


KNOWN_MODELS = tuple(BUILTIN_MODELS) + ("piecewise",)
