"""Run one configured experiment and write its result files.

Output directory layout:

``trajectories.csv``
    header ``replicate,seed,n,value``, rows sorted by ``(replicate, n)``.
``summary.csv``
    header ``n,count,mean,median,q25,q75,min,max``, one row per ``n``.
``<series>.csv`` / ``<series>_summary.csv``
    secondary series of some experiments, same layouts.
``config.txt``
    the resolved configuration (every key), re-runnable with ``udep run``.
``manifest.json``
    config, library version, generator and accumulation scheme, how far the
    model's dependence conditions are certified, scalar
    results, diagnostic flags and the SHA-256 of every file above.

Floats are written in Python's shortest round-trip form (``repr``), so two
runs can be compared byte for byte.  What ``n`` means per experiment:
prefix length for the trajectory experiments, eigenvalue index ``k`` for
``spectrum``, lag ``m`` for ``covariance_decay`` and the block's left end
``2^(l-1)`` for ``dyadic_max``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from ._engine import ACCUMULATION_SCHEME
from ._parallel import THREADS_ENV, map_replicates
from .config import ExperimentConfig, config_to_text
from .errors import UdepError
from .kernels import analytic_parts, kernel_spectrum, triangular_cdf
from .lil import (covariance_decay, dyadic_max_diagnostic, limsup_estimate, lil_normalize,
                  long_run_variance, rate_replicates, second_moment_scaling, variance_ratio)
from .processes import generate_path
from .rng import GENERATOR_NAME, replicate_seed
from .ustat import (PairwiseMeanQuery, Trajectory, bahadur_remainder, dyadic_checkpoints,
                    local_fluctuation, prefix_trajectory)

__all__ = ["CSV_FORMAT", "RunFailure", "RunResult", "resolve_threads", "run_experiment",
           "write_outputs"]

CSV_FORMAT = "comma separated, LF line ends, floats as Python repr (shortest round trip)"

Row = Tuple[int, int, int, float]


class RunFailure(UdepError, RuntimeError):
    """An experiment could not be completed or its output not written."""


@dataclass
class RunResult:
    series: Dict[str, List[Row]]
    results: dict = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)


def resolve_threads(cfg: ExperimentConfig) -> int:
    """``UDEP_THREADS`` beats the config key, which beats the core count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise RunFailure(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if cfg.threads is not None:
        return cfg.threads
    return os.cpu_count() or 1


def _dyadic_from(n_min: int, n_max: int) -> np.ndarray:
    cps = dyadic_checkpoints(n_max, start=n_min)
    return cps[cps >= n_min]


# how far each model's mixing metadata is certified
CONDITIONS = {
    "iid_uniform": "exact",
    "iid_normal": "exact",
    "ma": "exact (m-dependent)",
    "ar1": "geometric beta envelope",
    "doubling": "envelope unverified (functional of iid bits; the required "
                "mixing and approximation rates are not certified)",
}


def _seed(cfg, r):
    return replicate_seed(cfg.base_seed, r)


# -- experiments -------------------------------------------------------------


def _rate(cfg, threads):
    parts = analytic_parts(cfg.kernel_object())
    trajs = rate_replicates(parts, cfg.process_model(), cfg.n_max, cfg.replicates,
                            cfg.base_seed, threads=threads)
    rows = []
    for r, tr in enumerate(trajs):
        for n, v in zip(tr.checkpoints, tr.values):
            if n >= cfg.n_min:
                rows.append((r, tr.seed, int(n), float(v)))
    med = _median_abs_by_n(rows)
    return RunResult({"trajectories": rows}, {"median_abs_rate": med})


def _lil(cfg, threads):
    kernel = cfg.kernel_object()
    parts = analytic_parts(kernel)
    model = cfg.process_model()
    cps = dyadic_checkpoints(cfg.n_max, start=2)
    pairs = cps * (cps - 1) // 2

    def one(r):
        path = generate_path(model, cfg.n_max, _seed(cfg, r))
        s = prefix_trajectory(kernel, path, cps)
        t = s.values - parts.theta * pairs
        if cfg.sigma2 is None:
            sigma2 = long_run_variance(parts.h1(path.values), cfg.bandwidth).estimate
        else:
            sigma2 = cfg.sigma2
        if not sigma2 > 0:
            raise RunFailure(f"replicate {r}: long-run variance estimate is {sigma2!r}; "
                             "the kernel needs a nondegenerate linear part")
        return lil_normalize(Trajectory(cps, t, "T", path.seed), sigma2=sigma2), sigma2

    out = map_replicates(one, cfg.replicates, threads)
    normed = [o[0] for o in out]
    rows = [(r, nt.seed, int(n), float(v))
            for r, nt in enumerate(normed) for n, v in zip(nt.checkpoints, nt.values)]
    summary = limsup_estimate(normed, cfg.n_min)
    results = {
        "sigma2": [float(o[1]) for o in out],
        "sigma2_source": "config" if cfg.sigma2 is not None else "bartlett_h1",
        "n0": cfg.n_min,
        "median_sup": summary.median_sup,
        "quartiles_sup": list(summary.quartiles_sup),
        "median_inf": summary.median_inf,
        "quartiles_inf": list(summary.quartiles_inf),
    }
    flags = []
    dropped = sum(nt.dropped for nt in normed)
    if dropped:
        flags.append(f"dropped {dropped} checkpoints with V_n <= e")
    return RunResult({"trajectories": rows}, results, flags)


def _hl(cfg, threads):
    model = cfg.process_model()
    cps = _dyadic_from(cfg.n_min, cfg.n_max)
    t0, u_t0, u_prime = 0.5, 0.5, 2.0

    def one(r):
        path = generate_path(model, cfg.n_max, _seed(cfg, r))
        rem, flu = [], []
        for n in cps:
            q = PairwiseMeanQuery(path.values[:n])
            scale = math.sqrt(n / math.log(math.log(n)))
            rem.append(scale * abs(bahadur_remainder(q, t0, u_t0, u_prime)))
            radius = 2.0 / scale
            flu.append(scale * local_fluctuation(q, t0, triangular_cdf, radius))
        return path.seed, rem, flu

    out = map_replicates(one, cfg.replicates, threads)
    rem_rows, flu_rows = [], []
    for r, (seed, rem, flu) in enumerate(out):
        for n, a, b in zip(cps, rem, flu):
            rem_rows.append((r, seed, int(n), float(a)))
            flu_rows.append((r, seed, int(n), float(b)))
    results = {"t0": t0, "U_prime_t0": u_prime, "fluctuation_radius": "2*sqrt(loglog n / n)",
               "median_scaled_remainder": _median_by_n(rem_rows),
               "median_scaled_fluctuation": _median_by_n(flu_rows)}
    return RunResult({"trajectories": rem_rows, "fluctuation": flu_rows}, results)


def _spectrum(cfg, threads):
    lam = kernel_spectrum(analytic_parts(cfg.kernel_object()), grid=cfg.grid)
    rows = [(0, cfg.base_seed, k + 1, float(v)) for k, v in enumerate(lam)]
    results = {"grid": cfg.grid, "lambda1": float(lam[0]),
               "leading": [float(v) for v in lam[:10]]}
    if lam.size > 1:
        results["lambda2"] = float(lam[1])
    return RunResult({"trajectories": rows}, results)


def _moments(cfg, threads):
    grid = _dyadic_from(cfg.n_min, cfg.n_max)
    ms = second_moment_scaling(analytic_parts(cfg.kernel_object()), cfg.process_model(),
                               grid, cfg.replicates, cfg.base_seed, threads)
    rows = [(r, _seed(cfg, r), int(n), float(v))
            for r in range(cfg.replicates) for n, v in zip(ms.n_grid, ms.samples[r])]
    results = {"n_grid": list(ms.n_grid), "second_moments": list(ms.moments),
               "slope": None if ms.flagged else ms.slope}
    flags = ["zero second moment: slope not fitted"] if ms.flagged else []
    return RunResult({"trajectories": rows}, results, flags)


def _covariance(cfg, threads):
    est, err = covariance_decay(analytic_parts(cfg.kernel_object()), cfg.process_model(),
                                cfg.m_grid, cfg.gap, cfg.replicates, cfg.base_seed,
                                with_errors=True)
    rows = [(0, cfg.base_seed, int(m), float(v)) for m, v in zip(cfg.m_grid, est)]
    results = {"m_grid": list(cfg.m_grid), "gap": cfg.gap if cfg.gap is not None else "m",
               "estimates": [float(v) for v in est], "std_errors": [float(v) for v in err]}
    return RunResult({"trajectories": rows}, results)


def _ratio(cfg, threads):
    n = cfg.n_max
    vr = variance_ratio(cfg.kernel_object(), cfg.process_model(), n, cfg.replicates,
                        cfg.base_seed, threads)
    tot = [(r, _seed(cfg, r), n, float(v)) for r, v in enumerate(vr.totals)]
    lin = [(r, _seed(cfg, r), n, float(v)) for r, v in enumerate(vr.linears)]
    results = {"n": n, "ratio": vr.ratio, "var_total": vr.var_total,
               "var_linear": vr.var_linear}
    flags = ["zero denominator: linear part vanishes (degenerate kernel)"] if vr.flagged else []
    return RunResult({"trajectories": tot, "linear": lin}, results, flags)


def _dyadic(cfg, threads):
    parts = analytic_parts(cfg.kernel_object())
    model = cfg.process_model()
    tau = model.profile.tau
    cps = np.arange(cfg.n_min, cfg.n_max + 1, dtype=np.int64)

    def one(r):
        path = generate_path(model, cfg.n_max, _seed(cfg, r))
        return path.seed, dyadic_max_diagnostic(prefix_trajectory(parts, path, cps), tau)

    out = map_replicates(one, cfg.replicates, threads)
    rows = []
    skipped = set()
    for r, (seed, (maxima, skip)) in enumerate(out):
        skipped.update(skip)
        for l in sorted(maxima):
            rows.append((r, seed, 2 ** (l - 1), maxima[l]))
    flags = [f"block l={l} skipped (fewer than two checkpoints or no left end)"
             for l in sorted(skipped)]
    return RunResult({"trajectories": rows},
                     {"tau": tau, "median_block_max": _median_by_n(rows)}, flags)


_EXPERIMENTS = {
    "rate_theorem1": _rate,
    "lil_theorem2": _lil,
    "hl_bahadur": _hl,
    "spectrum": _spectrum,
    "moment_scan": _moments,
    "covariance_decay": _covariance,
    "variance_ratio": _ratio,
    "dyadic_max": _dyadic,
}


# -- output ------------------------------------------------------------------


def _by_n(rows):
    groups: Dict[int, List[float]] = {}
    for _, _, n, v in rows:
        groups.setdefault(n, []).append(v)
    return {n: np.asarray(groups[n]) for n in sorted(groups)}


def _median_by_n(rows):
    return {str(n): float(np.median(v)) for n, v in _by_n(rows).items()}


def _median_abs_by_n(rows):
    return {str(n): float(np.median(np.abs(v))) for n, v in _by_n(rows).items()}


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise RunFailure(f"non-finite value {v!r} in output")
    return repr(v)


def _trajectory_csv(rows: List[Row]) -> str:
    lines = ["replicate,seed,n,value"]
    for r, seed, n, v in sorted(rows, key=lambda t: (t[0], t[2])):
        lines.append(f"{r},{seed},{n},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def _summary_csv(rows: List[Row]) -> str:
    lines = ["n,count,mean,median,q25,q75,min,max"]
    for n, v in _by_n(rows).items():
        q25, med, q75 = np.percentile(v, [25, 50, 75])
        stats = [math.fsum(v) / v.size, med, q25, q75, v.min(), v.max()]
        lines.append(",".join([str(n), str(v.size)] + [_fmt(s) for s in stats]))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_outputs(cfg: ExperimentConfig, result: RunResult, out_dir: Path) -> dict:
    files: Dict[str, str] = {"config.txt": config_to_text(cfg)}
    for name, rows in result.series.items():
        files[f"{name}.csv"] = _trajectory_csv(rows)
        summary = "summary.csv" if name == "trajectories" else f"{name}_summary.csv"
        files[summary] = _summary_csv(rows)
    manifest = {
        "udep_version": __version__,
        "experiment": cfg.experiment,
        "config": _jsonable(asdict(cfg)),
        "model_id": cfg.process_model().id,
        "dependence_conditions": CONDITIONS[cfg.model],
        "generator": GENERATOR_NAME,
        "replicate_seed": "base_seed XOR (r * 0x9E3779B97F4A7C15 mod 2^64)",
        "accumulation_scheme": ACCUMULATION_SCHEME,
        "csv_format": CSV_FORMAT,
        "results": _jsonable(result.results),
        "flags": list(result.flags),
        "files": {name: hashlib.sha256(text.encode()).hexdigest()
                  for name, text in sorted(files.items())},
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out_dir / name).write_text(text, encoding="utf-8", newline="\n")
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise RunFailure(f"cannot write output to {str(out_dir)!r}: {exc}") from None
    return manifest


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[os.PathLike] = None) -> dict:
    """Run ``cfg`` and write its files to ``out_dir`` (default ``cfg.out``).

    Returns the manifest.  Raises :class:`RunFailure` (or another
    :class:`~udep.errors.UdepError`) on failure.
    """
    threads = resolve_threads(cfg)
    result = _EXPERIMENTS[cfg.experiment](cfg, threads)
    return write_outputs(cfg, result, Path(cfg.out if out_dir is None else out_dir))
