"""Experiment configuration: flat ``key = value`` documents.

One entry per line, ``#`` starts a comment, blank lines are ignored and
there is no nesting.  Unknown keys, repeated keys, malformed values and
invariant violations raise :class:`~udep.errors.ConfigError` carrying the
line number.  Counts accept ``2^k`` as well as plain integers; lists are
comma separated.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

from .errors import ConfigError, UdepError
from .kernels import builtin_kernel
from .processes import ProcessModel, ar1, doubling, iid, ma

__all__ = [
    "DEFAULT_KERNEL",
    "DEFAULT_N_MIN",
    "EXPERIMENTS",
    "KEYS",
    "MODELS",
    "ExperimentConfig",
    "config_from_entries",
    "config_to_text",
    "parse_config",
]

EXPERIMENTS = ("rate_theorem1", "lil_theorem2", "hl_bahadur", "spectrum", "moment_scan",
               "covariance_decay", "variance_ratio", "dyadic_max")
MODELS = ("iid_uniform", "iid_normal", "ar1", "ma", "doubling")
KERNELS = ("gini", "cvm", "hl")

# experiments whose statistic needs a linear part, or is the HL indicator
DEFAULT_KERNEL = {"lil_theorem2": "gini", "variance_ratio": "gini", "hl_bahadur": "hl"}
DEFAULT_N_MIN = {"rate_theorem1": 16, "lil_theorem2": 2**10, "hl_bahadur": 2**4,
                 "moment_scan": 2**6, "dyadic_max": 2**7}
MIN_REPLICATES = {"moment_scan": 30, "covariance_decay": 100, "variance_ratio": 1000}
LOGLOG_EXPERIMENTS = ("rate_theorem1", "lil_theorem2", "hl_bahadur", "dyadic_max")

# key -> (parser name, default, help text); defaults are shown by ``udep --help``
KEYS: Dict[str, Tuple[str, object, str]] = {
    "experiment": ("experiment", None, "one of " + ", ".join(EXPERIMENTS) + " (required)"),
    "kernel": ("kernel", None, "gini | cvm | hl; default gini for lil_theorem2 and "
               "variance_ratio, hl for hl_bahadur, cvm otherwise"),
    "hl_t": ("float", 0.5, "threshold t of the hl kernel 1{(x+y)/2 <= t}"),
    "model": ("model", "iid_uniform", " | ".join(MODELS)),
    "phi": ("float", 0.5, "ar1 coefficient, |phi| < 1"),
    "noise_sd": ("float", 1.0, "ar1 innovation standard deviation"),
    "ma_weights": ("floats", (1.0, 1.0, 1.0, 1.0), "ma weights w_0..w_m (m-dependent, m = len - 1)"),
    "depth": ("count", 40, "doubling-map bit depth, 1..52"),
    "marginal": ("marginal", None, "uniform01 | normal; default normal for iid_normal, "
                 "uniform01 otherwise (ar1/ma via a Gaussian copula)"),
    "n_max": ("count", 2**14, "longest path length; also n for variance_ratio"),
    "n_min": ("count", None, "first checkpoint / block of the window; default 16 for "
              "rate_theorem1, 2^10 for lil_theorem2, 2^4 for hl_bahadur, 2^6 for "
              "moment_scan, 2^7 for dyadic_max"),
    "replicates": ("count", 100, "Monte-Carlo replicates, >= 1"),
    "base_seed": ("seed", 0, "64-bit base seed; replicate seeds derive from it"),
    "bandwidth": ("count0", None, "Bartlett bandwidth override (default floor(n^(1/3)))"),
    "sigma2": ("float", None, "long-run variance for lil_theorem2 (default: Bartlett "
               "estimate from each path's h1 values)"),
    "grid": ("count", 512, "Nystrom grid size for spectrum"),
    "m_grid": ("counts", (1, 2, 4, 8, 16), "lags for covariance_decay"),
    "gap": ("count", None, "covariance_decay gap between the two pairs (default m)"),
    "out": ("str", "udep_out", "output directory"),
    "threads": ("count", None, "worker threads (default: available cores; the "
                "UDEP_THREADS environment variable overrides)"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    kernel: str
    hl_t: float
    model: str
    phi: float
    noise_sd: float
    ma_weights: tuple
    depth: int
    marginal: str
    n_max: int
    n_min: Optional[int]
    replicates: int
    base_seed: int
    bandwidth: Optional[int]
    sigma2: Optional[float]
    grid: int
    m_grid: tuple
    gap: Optional[int]
    out: str
    threads: Optional[int]

    def process_model(self) -> ProcessModel:
        if self.model == "iid_uniform":
            return iid("uniform01")
        if self.model == "iid_normal":
            return iid("normal")
        if self.model == "ar1":
            return ar1(self.phi, self.noise_sd, marginal=self.marginal)
        if self.model == "ma":
            return ma(self.ma_weights, marginal=self.marginal)
        return doubling(self.depth)

    def kernel_object(self):
        return builtin_kernel(self.kernel, t=self.hl_t)


_COUNT = re.compile(r"^(\d+)\s*\^\s*(\d+)$")


def _count(text: str) -> int:
    m = _COUNT.match(text)
    if m:
        return int(m.group(1)) ** int(m.group(2))
    return int(text, 10)


def _convert(kind: str, text: str):
    if kind in ("experiment", "kernel", "model", "marginal"):
        choices = {"experiment": EXPERIMENTS, "kernel": KERNELS, "model": MODELS,
                   "marginal": ("uniform01", "normal")}[kind]
        if text not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return text
    if kind == "str":
        if not text:
            raise ValueError("expected a nonempty string")
        return text
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("expected a finite number")
        return v
    if kind == "floats":
        return tuple(_convert("float", t.strip()) for t in text.split(","))
    if kind == "counts":
        return tuple(_convert("count", t.strip()) for t in text.split(","))
    if kind == "seed":
        v = int(text, 0)
        if not 0 <= v < 2**64:
            raise ValueError("expected an integer in [0, 2^64)")
        return v
    v = _count(text)
    if kind == "count" and v < 1:
        raise ValueError("expected a positive integer")
    if v < 0:
        raise ValueError("expected a nonnegative integer")
    return v


def config_from_entries(entries: Mapping[str, Tuple[str, Optional[int]]]) -> ExperimentConfig:
    """Build a validated config from ``key -> (raw value, line number or None)``."""
    values = {}
    for key, (raw, line) in entries.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", line)
        kind = KEYS[key][0]
        try:
            values[key] = _convert(kind, raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value {raw.strip()!r} for {key!r}: {exc}", line) from None

    def line_of(key):
        return entries[key][1] if key in entries else None

    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    exp = values["experiment"]
    resolved = {k: spec[1] for k, spec in KEYS.items()}
    resolved.update(values)
    if resolved["kernel"] is None:
        resolved["kernel"] = DEFAULT_KERNEL.get(exp, "cvm")
    if resolved["marginal"] is None:
        resolved["marginal"] = "normal" if resolved["model"] == "iid_normal" else "uniform01"
    if resolved["n_min"] is None and exp in DEFAULT_N_MIN:
        resolved["n_min"] = min(DEFAULT_N_MIN[exp], resolved["n_max"])
    cfg = ExperimentConfig(**resolved)

    if cfg.model in ("iid_uniform", "iid_normal") and "marginal" in values:
        expected = "uniform01" if cfg.model == "iid_uniform" else "normal"
        if cfg.marginal != expected:
            raise ConfigError(f"model {cfg.model} has marginal {expected}", line_of("marginal"))
    try:
        cfg.process_model()
        cfg.kernel_object()
    except (UdepError, ValueError) as exc:
        key = next((k for k in ("phi", "noise_sd", "ma_weights", "depth", "marginal", "hl_t")
                    if k in values), "model")
        raise ConfigError(str(exc), line_of(key)) from None

    if exp != "spectrum" and cfg.marginal != "uniform01":
        # analytic Hoeffding parts of the built-in kernels exist for uniform01 only
        raise ConfigError(f"{exp} needs a uniform01 marginal",
                          line_of("marginal") or line_of("model"))
    need = MIN_REPLICATES.get(exp, 1)
    if cfg.replicates < need:
        raise ConfigError(f"{exp} needs replicates >= {need}", line_of("replicates"))
    if exp in LOGLOG_EXPERIMENTS and cfg.n_max < 16:
        raise ConfigError(f"{exp} needs n_max >= 16", line_of("n_max"))
    if cfg.n_min is not None and cfg.n_min > cfg.n_max:
        raise ConfigError("n_min must not exceed n_max", line_of("n_min"))
    if exp in LOGLOG_EXPERIMENTS and cfg.n_min is not None and cfg.n_min < 16:
        raise ConfigError(f"{exp} needs n_min >= 16", line_of("n_min"))
    if exp == "variance_ratio" and cfg.n_max < 2:
        raise ConfigError("variance_ratio needs n_max >= 2", line_of("n_max"))
    if exp == "spectrum" and cfg.grid < 2:
        raise ConfigError("grid must be at least 2", line_of("grid"))
    if cfg.sigma2 is not None and not cfg.sigma2 > 0:
        raise ConfigError("sigma2 must be positive", line_of("sigma2"))
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse a ``key = value`` document into a validated :class:`ExperimentConfig`."""
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"key {key!r} repeated (first on line {entries[key][1]})", lineno)
        entries[key] = (value, lineno)
    return config_from_entries(entries)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical document with every key resolved; parses back to ``cfg``."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is not None:
            lines.append(f"{f.name} = {_format(v)}")
    return "\n".join(lines) + "\n"
