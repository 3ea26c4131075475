"""U-statistic engines, prefix trajectories and Hodges-Lehmann machinery.

Pair sums run through one compiled engine (see ``udep._engine`` for the
fixed accumulation scheme), so :func:`u_statistic` and the last point of
:func:`prefix_trajectory` on the same path agree bitwise.

Median convention: for an even number of pairwise means the Hodges-Lehmann
estimate is the mean of the two central order statistics.  The generalised
inverse :func:`empirical_u_quantile` at ``p = 1/2`` (smallest ``t`` with
``U_n(t) >= 1/2``) is the lower of the two and can therefore differ from
:func:`hodges_lehmann` by one order statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _engine
from .errors import DomainError, ModeError, SizeError
from .kernels import HoeffdingParts, Kernel

__all__ = [
    "PairwiseMeanQuery",
    "Trajectory",
    "bahadur_remainder",
    "dyadic_checkpoints",
    "empirical_u_df",
    "empirical_u_quantile",
    "hodges_lehmann",
    "local_fluctuation",
    "prefix_trajectory",
    "u_statistic",
]


def _values(sample) -> np.ndarray:
    values = getattr(sample, "values", sample)
    return np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel())


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


@dataclass(frozen=True)
class Trajectory:
    """Values of a statistic at increasing prefix lengths of one path."""

    checkpoints: np.ndarray
    values: np.ndarray
    statistic: str = "S"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.checkpoints.shape != self.values.shape:
            raise SizeError("checkpoints and values differ in length")
        if np.any(np.diff(self.checkpoints) <= 0):
            raise DomainError("checkpoints must be strictly increasing")

    def __len__(self):
        return self.checkpoints.shape[0]


def dyadic_checkpoints(n_max: int, start: int = 2) -> np.ndarray:
    """Powers of two in ``[start, n_max]``, plus ``n_max`` itself."""
    pts = []
    p = 1
    while p <= n_max:
        if p >= start:
            pts.append(p)
        p *= 2
    if not pts or pts[-1] != n_max:
        pts.append(n_max)
    return np.asarray(pts, dtype=np.int64)


def u_statistic(k: Kernel, sample) -> float:
    """``U_n(h) = S_n / binom(n, 2)`` with ``S_n`` from the pair-sum engine."""
    xs = _values(sample)
    n = xs.shape[0]
    if n < 2:
        raise SizeError("a U-statistic needs at least two observations")
    if k.support is not None:
        k.check_support(xs)
    s = _engine.prefix_pair_sums(k.scalar, xs, np.array([n], dtype=np.int64))[0]
    return float(s / _pairs(n))


def _resolve_kernel(k: Union[Kernel, HoeffdingParts]) -> Kernel:
    if isinstance(k, HoeffdingParts):
        if k.mode != "analytic" or k.h2_kernel is None:
            raise ModeError("h2 trajectories need analytic Hoeffding parts; "
                            "empirical h2 sums to zero on its own sample")
        return k.h2_kernel
    return k


def prefix_trajectory(k: Union[Kernel, HoeffdingParts], sample,
                      checkpoints: Optional[Sequence[int]] = None,
                      statistic: str = "S") -> Trajectory:
    """Pair sums ``S_n = sum_{i<j<=n} h(X_i, X_j)`` at each checkpoint.

    One pass of ``S_n = S_{n-1} + sum_{i<n} h(X_i, X_n)``, ``O(n_max^2)``
    work.  Passing Hoeffding parts runs their ``h2`` component (analytic
    parts only).  Divide by ``binom(n, 2)`` for ``U_n``.
    """
    kernel = _resolve_kernel(k)
    xs = _values(sample)
    if checkpoints is None:
        checkpoints = dyadic_checkpoints(xs.shape[0])
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size and (cps[-1] > xs.shape[0] or cps[0] < 1):
        raise SizeError("checkpoints must lie in [1, len(sample)]")
    if np.any(np.diff(cps) <= 0):
        raise DomainError("checkpoints must be strictly increasing")
    if kernel.support is not None and cps.size:
        kernel.check_support(xs[: cps[-1]])
    sums = _engine.prefix_pair_sums(kernel.scalar, xs, cps)
    return Trajectory(cps, sums, statistic, getattr(sample, "seed", None))


# -- Hodges-Lehmann ---------------------------------------------------------


def _select_mean(xs_sorted, rank) -> float:
    return 0.5 * _engine.select_pair_sum(xs_sorted, rank)


def hodges_lehmann(sample, method: str = "fast") -> float:
    """Median of the pairwise means ``(X_i + X_j)/2``, ``i < j``.

    ``"naive"`` materialises and sorts all means.  ``"fast"`` sorts the
    sample once and selects the central rank(s) exactly by counting; both
    return the same double.
    """
    xs = _values(sample)
    n = xs.shape[0]
    if n < 2:
        raise SizeError("the Hodges-Lehmann estimator needs at least two observations")
    total = _pairs(n)
    if method == "naive":
        i, j = np.triu_indices(n, k=1)
        means = np.sort(0.5 * (xs[i] + xs[j]))
        if total % 2:
            return float(means[total // 2])
        return float((means[total // 2 - 1] + means[total // 2]) / 2)
    if method != "fast":
        raise DomainError(f"unknown method {method!r}")
    srt = np.sort(xs)
    if total % 2:
        return float(_select_mean(srt, total // 2 + 1))
    return float((_select_mean(srt, total // 2) + _select_mean(srt, total // 2 + 1)) / 2)


class PairwiseMeanQuery:
    """Counting view of the pairwise means of a sample.

    Holds a sorted copy; ``count(t)`` is ``#{i < j : (X_i + X_j)/2 <= t}``
    in ``O(n)`` by two pointers.
    """

    def __init__(self, sample):
        xs = np.sort(_values(sample))
        if xs.shape[0] < 2:
            raise SizeError("pairwise means need at least two observations")
        xs.setflags(write=False)
        self._xs = xs
        self.n = xs.shape[0]
        self.pairs = _pairs(self.n)

    @property
    def sorted_sample(self) -> np.ndarray:
        return self._xs

    def count(self, t: float) -> int:
        # (a + b)/2 <= t  iff  a + b <= 2t, exactly, for finite doubles
        return int(_engine.count_pair_sums_le(self._xs, 2.0 * float(t)))

    def select(self, rank: int) -> float:
        """The ``rank``-th smallest pairwise mean, 1-based."""
        if not 1 <= rank <= self.pairs:
            raise DomainError(f"rank must lie in [1, {self.pairs}]")
        return float(_select_mean(self._xs, int(rank)))


def empirical_u_df(q: PairwiseMeanQuery, t: float) -> float:
    """Fraction of pairwise means at or below ``t``."""
    return q.count(t) / q.pairs


def _quantile_rank(p: float, pairs: int) -> int:
    # smallest k with k / pairs >= p, judged with the same float division as U_n
    k = max(1, math.ceil(Fraction(p) * pairs))
    while k > 1 and (k - 1) / pairs >= p:
        k -= 1
    while k < pairs and k / pairs < p:
        k += 1
    return k


def empirical_u_quantile(q: PairwiseMeanQuery, p: float) -> float:
    """``inf{t : U_n(t) >= p}``, which is always one of the pairwise means."""
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0, 1]")
    return q.select(_quantile_rank(p, q.pairs))


def bahadur_remainder(sample, t0: float, U_t0: float, U_prime_t0: float) -> float:
    """``R_n = H_n - t0 + (U_n(t0) - U(t0)) / U'(t0)``.

    ``H_n`` is taken as ``empirical_u_quantile(1/2)`` so that it matches the
    ``<=`` convention of ``U_n``.
    """
    if not U_prime_t0 > 0:
        raise DomainError("U'(t0) must be positive")
    q = sample if isinstance(sample, PairwiseMeanQuery) else PairwiseMeanQuery(sample)
    h_n = empirical_u_quantile(q, 0.5)
    return h_n - t0 + (empirical_u_df(q, t0) - U_t0) / U_prime_t0


def local_fluctuation(q: PairwiseMeanQuery, t0: float, U: Callable[[float], float],
                      radius: float, grid: int = 101) -> float:
    """``max |U_n(t0 + s) - U_n(t0) - U(t0 + s) + U(t0)|`` over ``grid`` points
    ``s`` evenly spaced in ``[-radius, radius]``."""
    if not radius > 0:
        raise DomainError("radius must be positive")
    if grid < 2:
        raise SizeError("grid must have at least two points")
    base_n = empirical_u_df(q, t0)
    base = float(U(t0))
    worst = 0.0
    for s in np.linspace(-radius, radius, grid):
        t = t0 + float(s)
        worst = max(worst, abs(empirical_u_df(q, t) - base_n - float(U(t)) + base))
    return worst
