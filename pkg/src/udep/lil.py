"""LIL normalisation, rate diagnostics and long-run variance estimation.

Everything here is a finite-n surrogate of an almost-sure statement: the
functions compute normalised trajectories, block maxima or moment scalings
whose behaviour over growing ``n`` can be compared with the asymptotics.
Monte-Carlo drivers take a ``base_seed`` and derive replicate ``r``'s seed
with :func:`udep.rng.replicate_seed`; aggregation is by replicate index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_replicates
from .errors import DomainError, ModeError, SizeError
from .kernels import HoeffdingParts, Kernel, degeneracy_defect
from .processes import ProcessModel, generate_path
from .rng import replicate_seed
from .ustat import Trajectory, dyadic_checkpoints, prefix_trajectory

__all__ = [
    "DdpSummary",
    "LimsupSummary",
    "LongRunVariance",
    "MomentScaling",
    "NormalizedTrajectory",
    "ReplicateSummary",
    "VarianceRatio",
    "covariance_decay",
    "ddp_limsup_diagnostic",
    "dyadic_max_diagnostic",
    "lil_normalize",
    "limsup_estimate",
    "linear_trajectory",
    "long_run_variance",
    "mixing_power",
    "rate_normalizer",
    "rate_replicates",
    "require_degenerate",
    "second_moment_scaling",
    "theorem1_rate",
    "variance_ratio",
]


# -- long-run variance ------------------------------------------------------


@dataclass(frozen=True)
class LongRunVariance:
    estimate: float
    bandwidth: int
    n: int
    scheme: str = "bartlett"


def long_run_variance(values, bandwidth: Optional[int] = None) -> LongRunVariance:
    """Bartlett estimate ``g_0 + 2 sum_{k<=b} (1 - k/(b+1)) g_k``.

    ``g_k`` are mean-centred sample autocovariances with denominator ``n``;
    the default bandwidth is ``floor(n ** (1/3))``.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = x.shape[0]
    if n < 2:
        raise SizeError("long-run variance needs at least two values")
    b = int(n ** (1.0 / 3.0)) if bandwidth is None else int(bandwidth)
    if b < 0:
        raise DomainError("bandwidth must be nonnegative")
    b = min(b, n - 1)
    d = x - x.mean()
    est = float(np.dot(d, d)) / n
    for k in range(1, b + 1):
        est += 2.0 * (1.0 - k / (b + 1.0)) * float(np.dot(d[k:], d[:-k])) / n
    # Bartlett weights give a nonnegative quadratic form; clip rounding only
    return LongRunVariance(max(est, 0.0), b, n)


# -- LIL normalisation ------------------------------------------------------


@dataclass(frozen=True)
class NormalizedTrajectory:
    """``T_n / sqrt(2 V_n loglog V_n)`` at the checkpoints with ``V_n > e``."""

    checkpoints: np.ndarray
    values: np.ndarray
    variance_mode: str
    dropped: int = 0
    seed: Optional[int] = None


def _lil_scale(v):
    return np.sqrt(2.0 * v * np.log(np.log(v)))


def lil_normalize(traj: Trajectory, sigma2: Optional[float] = None,
                  variances: Optional[Sequence[float]] = None) -> NormalizedTrajectory:
    """Normalise ``T_n`` by ``sqrt(2 V_n loglog V_n)``.

    Plug-in mode (``sigma2``) uses ``V_n = (n - 1)^2 n sigma2``; otherwise
    ``variances`` supplies ``V_n`` for each checkpoint.  Checkpoints with
    ``V_n <= e`` have no defined normaliser and are dropped.
    """
    n = traj.checkpoints.astype(float)
    if variances is None:
        if sigma2 is None or not sigma2 > 0:
            raise DomainError("plug-in normalisation needs sigma2 > 0")
        v = (n - 1.0) ** 2 * n * float(sigma2)
        mode = "plugin_sigma"
    else:
        v = np.asarray(variances, dtype=float)
        if v.shape != n.shape:
            raise SizeError("one variance per checkpoint is required")
        mode = "external"
    keep = v > math.e
    out = traj.values[keep] / _lil_scale(v[keep])
    return NormalizedTrajectory(traj.checkpoints[keep], out, mode,
                                int(np.count_nonzero(~keep)), traj.seed)


def linear_trajectory(values, checkpoints=None, seed=None) -> Trajectory:
    """Partial sums ``sum_{i<=n} X_i`` at the checkpoints (linear-statistic mode)."""
    x = np.asarray(values, dtype=float).ravel()
    cps = np.arange(1, x.shape[0] + 1) if checkpoints is None else np.asarray(checkpoints)
    sums = np.cumsum(x)[cps - 1]
    return Trajectory(cps.astype(np.int64), sums, "partial_sum", seed)


@dataclass(frozen=True)
class ReplicateSummary:
    seed: Optional[int]
    sup: float
    inf: float
    final: float
    n_range: tuple


@dataclass(frozen=True)
class LimsupSummary:
    replicates: tuple = field(repr=False)
    median_sup: float = 0.0
    quartiles_sup: tuple = (0.0, 0.0)
    median_inf: float = 0.0
    quartiles_inf: tuple = (0.0, 0.0)


def limsup_estimate(normalized: Sequence[NormalizedTrajectory], n0: int) -> LimsupSummary:
    """Per-replicate sup and inf over checkpoints ``n >= n0`` with medians and quartiles."""
    reps = []
    for tr in normalized:
        window = tr.checkpoints >= n0
        if not np.any(window):
            raise SizeError(f"no checkpoint at or beyond n0={n0}")
        vals = tr.values[window]
        cps = tr.checkpoints[window]
        reps.append(ReplicateSummary(tr.seed, float(vals.max()), float(vals.min()),
                                     float(tr.values[-1]), (int(cps[0]), int(cps[-1]))))
    if not reps:
        raise SizeError("no trajectories given")
    sups = np.array([r.sup for r in reps])
    infs = np.array([r.inf for r in reps])
    return LimsupSummary(tuple(reps), float(np.median(sups)),
                         tuple(float(v) for v in np.percentile(sups, [25, 75])),
                         float(np.median(infs)),
                         tuple(float(v) for v in np.percentile(infs, [25, 75])))


# -- Theorem-1 style rate diagnostics ----------------------------------------


def require_degenerate(parts: HoeffdingParts, tol: float = 1e-6) -> None:
    """Reject empirical parts and parts whose ``h2`` is visibly not degenerate."""
    if parts.mode != "analytic" or parts.h2_kernel is None:
        raise ModeError("rate diagnostics need analytic Hoeffding parts")
    if parts.marginal == "uniform01":
        defect = degeneracy_defect(parts, np.linspace(0.0, 1.0, 33))
        if defect > tol:
            raise DomainError(f"h2 is not degenerate (defect {defect:.3g} > {tol:g})")


# Two printed forms of the strong-mixing exponent: the one attached to the
# rate theorem and the one in the moment lemma's own statement.  They differ
# in the leading gamma*delta coefficient; the rate-theorem form is used.
MIXING_POWER_FORMS = {"rate": 3.0, "moment": 1.0}


def mixing_power(gamma: float, delta: float, form: str = "rate") -> float:
    """Exponent ``p`` in ``sum_k k alpha(k)^p = O(n^tau)`` for strongly mixing input.

    ``p = 2 gamma delta / (c gamma delta + delta + 5 gamma + 2)`` with
    ``c = 3`` for ``form="rate"`` (the default, used throughout) and
    ``c = 1`` for ``form="moment"``.  Both are exposed because the two
    printed conditions disagree; the inconsistency is not resolved here.
    """
    if form not in MIXING_POWER_FORMS:
        raise DomainError(f"form must be one of {', '.join(MIXING_POWER_FORMS)}")
    if not (gamma > 0 and delta > 0):
        raise DomainError("gamma and delta must be positive")
    c = MIXING_POWER_FORMS[form]
    return 2.0 * gamma * delta / (c * gamma * delta + delta + 5.0 * gamma + 2.0)


def rate_normalizer(n, tau: float = 0.0):
    """``n^(1 - tau/2) / (log^(3/2) n loglog n)``, the factor applied to ``U_n(h2)``."""
    n = np.asarray(n, dtype=float)
    return n ** (1.0 - tau / 2.0) / (np.log(n) ** 1.5 * np.log(np.log(n)))


def theorem1_rate(parts: HoeffdingParts, model: ProcessModel, n_max: int, seed: int,
                  tau: Optional[float] = None, check: bool = True) -> Trajectory:
    """``r_n = n^(1-tau/2) U_n(h2) / (log^(3/2) n loglog n)`` at dyadic ``n >= 16``.

    ``tau`` defaults to the model profile's exponent.
    """
    if check:
        require_degenerate(parts)
    elif parts.mode != "analytic" or parts.h2_kernel is None:
        raise ModeError("rate diagnostics need analytic Hoeffding parts")
    if n_max < 16:
        raise SizeError("n_max must be at least 16")
    tau = model.profile.tau if tau is None else float(tau)
    path = generate_path(model, n_max, seed)
    cps = dyadic_checkpoints(n_max, start=16)
    q = prefix_trajectory(parts, path, cps)
    u = q.values / (cps * (cps - 1) // 2)
    return Trajectory(cps, u * rate_normalizer(cps, tau), "rate_theorem1", seed)


def rate_replicates(parts, model, n_max, reps, base_seed=0, tau=None, threads=None):
    require_degenerate(parts)
    return map_replicates(
        lambda r: theorem1_rate(parts, model, n_max, replicate_seed(base_seed, r), tau, check=False),
        reps, threads)


@dataclass(frozen=True)
class DdpSummary:
    """Per-replicate sups on the requested grid, plus the dyadic-grid sups
    taken from the same trajectories."""

    sups: tuple = field(repr=False)
    median: float
    checkpoints: tuple
    grid: str = "dyadic"
    dyadic_sups: tuple = field(default=(), repr=False)
    dyadic_median: float = float("nan")


def ddp_limsup_diagnostic(parts: HoeffdingParts, model: ProcessModel,
                          n_range=(2**10, 2**15), reps: int = 50, base_seed: int = 0,
                          threads=None, grid: str = "dyadic") -> DdpSummary:
    """Per replicate, ``sup Q_n / (n loglog n)`` over ``n`` in ``n_range``.

    ``grid="dyadic"`` takes the sup over the dyadic points of the range
    (plus its upper end), ``grid="all"`` over every integer ``n`` in it.  Both
    come out of the same ``O(n_max^2)`` pass, so the dyadic sups are always
    reported as well.  The median across replicates is the finite-n stand-in
    for the limsup constant, the top eigenvalue of the ``h2`` integral
    operator.
    """
    if grid not in ("dyadic", "all"):
        raise DomainError("grid must be 'dyadic' or 'all'")
    require_degenerate(parts)
    lo, hi = int(n_range[0]), int(n_range[1])
    if lo < 16 or hi < lo:
        raise SizeError("n_range must satisfy 16 <= lo <= hi")
    dy = dyadic_checkpoints(hi, start=lo)
    dy = dy[dy >= lo]
    cps = dy if grid == "dyadic" else np.arange(lo, hi + 1, dtype=np.int64)
    is_dyadic = np.isin(cps, dy)
    scale = cps * np.log(np.log(cps.astype(float)))

    def one(r):
        path = generate_path(model, hi, replicate_seed(base_seed, r))
        v = prefix_trajectory(parts, path, cps).values / scale
        return float(np.max(v)), float(np.max(v[is_dyadic]))

    out = map_replicates(one, reps, threads)
    sups = [a for a, _ in out]
    dsups = [b for _, b in out]
    return DdpSummary(tuple(sups), float(np.median(sups)), tuple(int(c) for c in cps),
                      grid, tuple(dsups), float(np.median(dsups)))


@dataclass(frozen=True)
class MomentScaling:
    n_grid: tuple
    moments: tuple
    slope: float
    flagged: bool
    samples: np.ndarray = field(default=None, repr=False)


def second_moment_scaling(parts: HoeffdingParts, model: ProcessModel,
                          n_grid: Sequence[int], reps: int = 200, base_seed: int = 0,
                          threads=None) -> MomentScaling:
    """Monte-Carlo ``E[Q_n^2]`` on ``n_grid`` and its log-log slope.

    All grid points of one replicate come from prefixes of a single path.
    A grid with any zero moment cannot be fitted and is flagged (slope NaN).
    """
    if reps < 30:
        raise SizeError("second_moment_scaling needs at least 30 replicates")
    if parts.mode != "analytic" or parts.h2_kernel is None:
        raise ModeError("moment scaling needs analytic Hoeffding parts")
    grid = np.asarray(sorted(int(n) for n in n_grid), dtype=np.int64)
    n_max = int(grid[-1])

    def one(r):
        path = generate_path(model, n_max, replicate_seed(base_seed, r))
        return prefix_trajectory(parts, path, grid).values

    q = np.array(map_replicates(one, reps, threads))
    moments = (q**2).mean(axis=0)
    ns = tuple(int(n) for n in grid)
    if np.any(moments <= 0):
        return MomentScaling(ns, tuple(float(v) for v in moments), math.nan, True, q)
    slope = float(np.polyfit(np.log(grid), np.log(moments), 1)[0])
    return MomentScaling(ns, tuple(float(v) for v in moments), slope, False, q)


def covariance_decay(parts: HoeffdingParts, model: ProcessModel, m_grid: Sequence[int],
                     gap: Optional[int] = None, reps: int = 10_000, base_seed: int = 0,
                     with_errors: bool = False):
    """``|E[h2(X_1, X_{1+m}) h2(X_{1+m+g}, X_{1+m+g+1})]|`` for each ``m``.

    The index configuration is fixed to ``(1, 1+m, 1+m+g, 1+m+g+1)`` with
    ``g = m`` unless ``gap`` is given, so the largest within-pair distance
    is ``m``.  With ``with_errors`` the Monte-Carlo standard errors are
    returned as a second array.
    """
    if reps < 100:
        raise SizeError("covariance_decay needs at least 100 replicates")
    if parts.mode != "analytic":
        raise ModeError("covariance decay needs analytic Hoeffding parts")
    m_grid = [int(m) for m in m_grid]
    if min(m_grid) < 1:
        raise SizeError("lags must be at least 1")
    gaps = [m if gap is None else int(gap) for m in m_grid]
    length = max(m + g + 2 for m, g in zip(m_grid, gaps))
    paths = np.empty((reps, length))
    for r in range(reps):
        paths[r] = generate_path(model, length, replicate_seed(base_seed, r)).values
    est, err = [], []
    for m, g in zip(m_grid, gaps):
        prod = parts.h2(paths[:, 0], paths[:, m]) * parts.h2(paths[:, m + g], paths[:, m + g + 1])
        est.append(abs(float(prod.mean())))
        err.append(float(prod.std(ddof=1)) / math.sqrt(reps))
    est = np.array(est)
    return (est, np.array(err)) if with_errors else est


@dataclass(frozen=True)
class VarianceRatio:
    ratio: Optional[float]
    var_total: float
    var_linear: float
    flagged: bool
    totals: np.ndarray = field(repr=False)
    linears: np.ndarray = field(repr=False)


def variance_ratio(k: Kernel, model: ProcessModel, n: int, reps: int = 1000,
                   base_seed: int = 0, threads=None) -> VarianceRatio:
    """``Var[sum_{i<j} (h - theta)] / Var[(n - 1) sum_i h1(X_i)]`` by Monte Carlo.

    A vanishing linear part (fully degenerate kernel) is flagged and leaves
    ``ratio`` as ``None``.
    """
    if reps < 1000:
        raise SizeError("variance_ratio needs at least 1000 replicates")
    if k.analytic_parts is None:
        raise ModeError("variance_ratio needs a kernel with analytic parts")
    parts = k.analytic_parts
    pairs = n * (n - 1) // 2
    cps = np.array([n], dtype=np.int64)

    def one(r):
        path = generate_path(model, n, replicate_seed(base_seed, r))
        total = prefix_trajectory(k, path, cps).values[0] - parts.theta * pairs
        linear = (n - 1) * float(np.sum(parts.h1(path.values)))
        return total, linear

    res = np.array(map_replicates(one, reps, threads))
    var_t = float(np.var(res[:, 0], ddof=1))
    var_l = float(np.var(res[:, 1], ddof=1))
    if var_l == 0.0:
        return VarianceRatio(None, var_t, var_l, True, res[:, 0], res[:, 1])
    return VarianceRatio(var_t / var_l, var_t, var_l, False, res[:, 0], res[:, 1])


def dyadic_max_diagnostic(q: Trajectory, tau: float = 0.0):
    """Block maxima ``max_{2^(l-1) <= n < 2^l} |a_n Q_n - a_{2^(l-1)} Q_{2^(l-1)}|``.

    ``a_n = 1 / (n^(1+tau/2) log^(3/2) n loglog n)``.  Returns ``(maxima,
    skipped)``: a dict from ``l`` to the block maximum, and the list of
    blocks skipped because they hold fewer than two checkpoints or lack
    their left end point.  Blocks need ``2^(l-1) >= 3`` so ``loglog`` is
    positive.
    """
    cps = np.asarray(q.checkpoints)
    a = np.zeros(cps.shape[0])
    ok = cps >= 3
    nf = cps[ok].astype(float)
    a[ok] = 1.0 / (nf ** (1.0 + tau / 2.0) * np.log(nf) ** 1.5 * np.log(np.log(nf)))
    aq = a * q.values
    maxima, skipped = {}, []
    if cps.size == 0:
        return maxima, skipped
    top = int(math.floor(math.log2(cps[-1]))) + 1
    for l in range(2, top + 1):
        lo, hi = 2 ** (l - 1), 2 ** l
        in_block = (cps >= lo) & (cps < hi)
        if lo < 3 or np.count_nonzero(in_block) < 2 or cps[in_block][0] != lo:
            if np.any(in_block):
                skipped.append(l)
            continue
        base = aq[in_block][0]
        maxima[l] = float(np.max(np.abs(aq[in_block] - base)))
    return maxima, skipped
