"""Seeded generators of stationary sequences with known dependence structure.

Four families are built in:

``iid``
    independent draws from ``uniform01`` or ``normal``.
``ar1``
    Gaussian AR(1), ``X_t = phi X_{t-1} + noise``, started from its stationary
    law.  With ``marginal="uniform01"`` the path is pushed through the
    standard normal CDF of its stationary scale (a Gaussian copula), which
    keeps the dependence and makes the marginal exactly uniform.
``ma``
    ``X_t = sum_j w_j Z_{t+j}`` with iid standard normal ``Z``; ``m``-dependent
    for ``m = len(weights) - 1``.  Same copula option as ``ar1`` (default
    ``uniform01``, so kernels with uniform analytic parts stay degenerate).
``doubling``
    ``X_n = sum_{k<depth} 2^{-(k+1)} Z_{n+k}`` with fair coin bits ``Z``.  The
    orbit of the doubling map ``x -> 2x mod 1``, truncated to ``depth`` bits
    (``1 <= depth <= 52`` so that every value is an exact double).

Each :class:`ProcessModel` carries a :class:`MixingProfile` of documented
bounds; only these built-in profiles have known coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba as nb
import numpy as np
from scipy.special import ndtr

from .errors import DomainError, SizeError
from .rng import make_generator, replicate_seed

__all__ = [
    "MixingProfile",
    "ProcessModel",
    "SamplePath",
    "approximation_defect",
    "ar1",
    "doubling",
    "generate_path",
    "iid",
    "ma",
    "mixing_profile",
    "tau_exponent",
]

_MARGINALS = ("uniform01", "normal")
_MAX_DEPTH = 52


@dataclass(frozen=True)
class MixingProfile:
    """Dependence bounds of a process.

    ``beta`` and ``alpha`` are absolute-regularity and strong-mixing bounds
    by lag.  For functionals of an underlying sequence (``doubling``) they
    refer to that sequence, ``approx_constants`` holds the 1-approximation
    constants ``a_l`` and ``coupling_rates`` the derived ``alpha_L`` values.
    ``gamma=None`` means every absolute moment of ``X_1`` is finite.
    """

    beta: Callable[[int], float]
    alpha: Callable[[int], float]
    approx_constants: Callable[[int], float]
    delta: float = 1.0
    gamma: Optional[float] = None
    tau: float = 0.0
    coupling_rates: Optional[Callable[[int], float]] = None
    note: str = ""


@dataclass(frozen=True)
class ProcessModel:
    kind: str
    marginal: str = "uniform01"
    phi: float = 0.0
    noise_sd: float = 1.0
    weights: tuple = ()
    depth: int = 40

    def __post_init__(self):
        if self.kind not in ("iid", "ar1", "ma", "doubling"):
            raise DomainError(f"unknown process kind {self.kind!r}")
        if self.marginal not in _MARGINALS:
            raise DomainError(f"unknown marginal {self.marginal!r}")
        if self.kind == "ar1":
            if not abs(self.phi) < 1:
                raise DomainError("AR(1) requires |phi| < 1")
            if not self.noise_sd > 0:
                raise DomainError("AR(1) requires a positive noise_sd")
        if self.kind == "ma":
            w = np.asarray(self.weights, dtype=float)
            if w.size == 0 or not np.all(np.isfinite(w)):
                raise DomainError("MA weights must be a nonempty list of finite numbers")
            if not np.any(w != 0):
                raise DomainError("MA weights must not all be zero")
        if self.kind == "doubling":
            if not 1 <= self.depth <= _MAX_DEPTH:
                raise DomainError(f"doubling depth must lie in [1, {_MAX_DEPTH}]")
            if self.marginal != "uniform01":
                raise DomainError("the doubling model has a uniform01 marginal")

    @property
    def id(self) -> str:
        if self.kind == "iid":
            return f"iid({self.marginal})"
        if self.kind == "ar1":
            return f"ar1(phi={self.phi!r},noise_sd={self.noise_sd!r},marginal={self.marginal})"
        if self.kind == "ma":
            w = ",".join(repr(float(v)) for v in self.weights)
            return f"ma(m={self.m},weights=[{w}],marginal={self.marginal})"
        return f"doubling(depth={self.depth})"

    @property
    def m(self) -> int:
        return len(self.weights) - 1

    @property
    def profile(self) -> MixingProfile:
        return mixing_profile(self)


def iid(marginal: str = "uniform01") -> ProcessModel:
    return ProcessModel("iid", marginal=marginal)


def ar1(phi: float, noise_sd: float = 1.0, marginal: str = "normal") -> ProcessModel:
    return ProcessModel("ar1", marginal=marginal, phi=float(phi), noise_sd=float(noise_sd))


def ma(m_or_weights, marginal: str = "uniform01") -> ProcessModel:
    """MA model from explicit weights, or from ``m`` with ``m + 1`` unit weights."""
    if np.isscalar(m_or_weights):
        m = int(m_or_weights)
        if m < 0:
            raise DomainError("MA order must be nonnegative")
        weights = (1.0,) * (m + 1)
    else:
        weights = tuple(float(v) for v in m_or_weights)
    return ProcessModel("ma", marginal=marginal, weights=weights)


def doubling(depth: int = 40) -> ProcessModel:
    return ProcessModel("doubling", depth=int(depth))


@dataclass(frozen=True)
class SamplePath:
    model: ProcessModel
    seed: int
    values: np.ndarray = field(repr=False)

    def __len__(self):
        return self.values.shape[0]


@nb.njit(nogil=True, cache=True)
def _ar1_recursion(x0, phi, shocks):
    out = np.empty(shocks.shape[0])
    x = x0
    out[0] = x0
    for t in range(1, shocks.shape[0]):
        x = phi * x + shocks[t]
        out[t] = x
    return out


@nb.njit(nogil=True, cache=True)
def _bit_windows(bits, depth, n):
    # integer window w_t holds Z_t..Z_{t+depth-1}, most significant first
    mask = (np.int64(1) << depth) - 1
    w = np.int64(0)
    for k in range(depth):
        w = (w << 1) | bits[k]
    out = np.empty(n, dtype=np.int64)
    out[0] = w
    for t in range(1, n):
        w = ((w << 1) & mask) | bits[t + depth - 1]
        out[t] = w
    return out


def generate_path(model: ProcessModel, n: int, seed: int) -> SamplePath:
    """Draw ``n`` consecutive values of the stationary sequence ``model``.

    The same ``(model, n, seed)`` always yields bitwise identical values.
    """
    n = int(n)
    if n < 1:
        raise SizeError("path length must be at least 1")
    g = make_generator(seed)
    if model.kind == "iid":
        values = g.random(n) if model.marginal == "uniform01" else g.standard_normal(n)
    elif model.kind == "ar1":
        scale = model.noise_sd / math.sqrt(1.0 - model.phi**2)
        z = g.standard_normal(n)
        shocks = model.noise_sd * z
        values = _ar1_recursion(scale * z[0], model.phi, shocks)
        if model.marginal == "uniform01":
            values = ndtr(values / scale)
    elif model.kind == "ma":
        w = np.asarray(model.weights, dtype=float)
        z = g.standard_normal(n + w.size - 1)
        values = np.convolve(z, w[::-1], mode="valid")
        if model.marginal == "uniform01":
            values = ndtr(values / math.sqrt(float(np.dot(w, w))))
    else:
        bits = g.integers(0, 2, size=n + model.depth - 1, dtype=np.int64)
        values = _bit_windows(bits, model.depth, n) * 2.0 ** (-model.depth)
    values = np.ascontiguousarray(values, dtype=np.float64)
    values.setflags(write=False)
    return SamplePath(model, int(seed), values)


def _lag0_only(value_at_zero):
    return lambda k: value_at_zero if k == 0 else 0.0


def _zero(k):
    return 0.0


def mixing_profile(model: ProcessModel) -> MixingProfile:
    """Documented dependence bounds for a built-in model.

    ``ar1`` uses the envelope ``beta(k) = min(1, |phi|^k / sqrt(1 - phi^2))``;
    it is an upper bound with a geometric decay class, not the exact
    coefficient.  Every built-in profile has a summable ``k beta(k)^c`` series,
    hence ``tau = 0``.
    """
    if model.kind == "iid":
        return MixingProfile(_lag0_only(1.0), _lag0_only(0.25), _zero,
                             note="independent; the sequence is its own functional")
    if model.kind == "ma":
        m = model.m
        return MixingProfile(
            lambda k: 1.0 if k <= m else 0.0,
            lambda k: 0.25 if k <= m else 0.0,
            _zero,
            note=f"{m}-dependent; beta(k) <= 1 is used as the envelope for k <= {m}",
        )
    if model.kind == "ar1":
        phi = abs(model.phi)
        c = 1.0 / math.sqrt(1.0 - phi**2)

        def beta(k):
            return min(1.0, c * phi**k)

        return MixingProfile(beta, lambda k: min(beta(k), 0.25), _zero,
                             note="geometric envelope, not exact coefficients")
    return MixingProfile(
        _lag0_only(1.0),
        _lag0_only(0.25),
        lambda l: 2.0 ** (-l),
        coupling_rates=lambda L: 2.0 ** (1.0 - L / 2.0),
        note="1-approximating functional of iid bits; beta/alpha refer to the bits",
    )


def approximation_defect(model: ProcessModel, l: int, n: int = 1, reps: int = 10_000,
                         seed: int = 0) -> float:
    """Monte-Carlo estimate of ``E|X_1 - E(X_1 | Z_0, ..., Z_l)|``.

    ``X_1`` only involves ``Z_1, Z_2, ...``, so the conditional expectation
    keeps the leading ``l`` bits and replaces the remaining ones by 1/2.
    Positions ``1..n`` of each path are pooled (stationarity).  Compare the
    result with ``approx_constants(l) = 2**-l``.
    """
    if model.kind != "doubling":
        raise DomainError("approximation_defect is defined for the doubling model")
    l = int(l)
    if not 0 <= l < model.depth:
        raise DomainError(f"need 0 <= l < depth={model.depth}, got {l}")
    if reps < 1 or n < 1:
        raise SizeError("reps and n must be positive")
    scale = 2.0**l
    tail_mean = 0.5 * (2.0 ** (-l) - 2.0 ** (-model.depth))
    total = 0.0
    for r in range(reps):
        x = generate_path(model, n, replicate_seed(seed, r)).values
        cond = np.floor(x * scale) / scale + tail_mean
        total += float(np.abs(x - cond).sum())
    return total / (reps * n)


def tau_exponent(profile: MixingProfile, delta: float, n_max: int,
                 include_coupling: bool = False) -> float:
    """Growth exponent of ``S(n) = sum_{k<=n} k beta(k)^(delta/(2+delta))``.

    The slope of ``log S`` against ``log n`` is fitted by least squares over
    the upper half of the dyadic grid ``2, 4, ..., n_max`` (the exponent is a
    tail property; early terms of a convergent series would bias the fit)
    and clamped to ``[0, 2]``.  With
    ``include_coupling`` the ``coupling_rates`` term of a functional model is
    added to each summand.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if n_max < 4:
        raise SizeError("n_max must be at least 4 for a slope fit")
    power = delta / (2.0 + delta)
    ks = np.arange(n_max + 1)
    terms = np.array([profile.beta(int(k)) ** power for k in ks])
    if include_coupling and profile.coupling_rates is not None:
        terms = terms + np.array([profile.coupling_rates(int(k)) ** power for k in ks])
    s = np.cumsum(ks * terms)
    top = int(math.log2(n_max))
    grid = 2 ** np.arange(max(1, (top + 1) // 2), top + 1)
    sg = s[grid]
    keep = sg > 0
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(np.log(grid[keep]), np.log(sg[keep]), 1)[0]
    return float(min(2.0, max(0.0, slope)))
