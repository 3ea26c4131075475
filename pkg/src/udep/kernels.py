"""Bivariate kernels, their Hoeffding decompositions and condition probes.

A :class:`Kernel` wraps a numba-compiled scalar function ``h(x, y)``.  The
compiled form is what the pair-sum engines call; ``Kernel.__call__`` is the
vectorised NumPy-facing view of the same function.

Built-in kernels:

* ``gini``: ``|x - y|``
* ``cvm``: ``int_0^1 (1{x<=t} - t)(1{y<=t} - t) dt``, evaluated in closed form
  ``(x^2 + y^2)/2 - max(x, y) + 1/3`` on ``[0, 1]^2``.  Arguments outside the
  unit square are clamped into it; every clamp is counted (see
  :func:`clamp_count`) and reported with a :class:`ClampWarning`.
* ``hl_indicator(t)``: ``1{(x + y)/2 <= t}``

Analytic Hoeffding parts exist for these three under the ``uniform01``
marginal only.
"""

from __future__ import annotations

import functools
import math
import threading
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numba as nb
import numpy as np

from . import _engine
from .errors import DomainError, SizeError, SymmetryError, UnsupportedCombinationError
from .rng import make_generator, replicate_seed

__all__ = [
    "ClampWarning",
    "HoeffdingParts",
    "Kernel",
    "ModulusEstimate",
    "MomentProbe",
    "analytic_parts",
    "builtin_kernel",
    "clamp_count",
    "constant_kernel",
    "continuity_modulus",
    "degeneracy_defect",
    "empirical_parts",
    "eval_kernel",
    "kernel_spectrum",
    "make_kernel",
    "scale_kernel",
    "scale_parts",
    "triangular_cdf",
    "triangular_density",
    "uniform_moment_probe",
]

THIRD = 1.0 / 3.0


class ClampWarning(UserWarning):
    """Kernel arguments were clamped into the kernel's support."""


_clamp_lock = threading.Lock()
_clamp_total = 0


def clamp_count() -> int:
    """Total number of arguments clamped into a kernel support in this process."""
    return _clamp_total


def _record_clamps(name, count):
    global _clamp_total
    if count:
        with _clamp_lock:
            _clamp_total += count
        warnings.warn(f"{count} argument(s) of kernel {name!r} clamped into its support",
                      ClampWarning, stacklevel=3)


@dataclass(frozen=True)
class HoeffdingParts:
    """``theta``, ``h1`` and ``h2`` with ``h = theta + h1(x) + h1(y) + h2(x, y)``.

    ``h1`` and ``h2`` accept NumPy arrays.  Analytic parts also carry
    ``h2_kernel``, a compiled :class:`Kernel` for ``h2`` that the pair-sum
    engines can run; empirical parts do not, by design.
    """

    theta: float
    h1: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    h2: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    mode: str = "analytic"
    marginal: str = "uniform01"
    sample: Optional[np.ndarray] = field(default=None, repr=False)
    h2_kernel: Optional["Kernel"] = field(default=None, repr=False)
    breakpoints: Optional[Callable[[float], Sequence[float]]] = field(default=None, repr=False)

    def reconstruct(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.theta + self.h1(x) + self.h1(y) + self.h2(x, y)


@dataclass(frozen=True)
class Kernel:
    name: str
    scalar: Callable = field(repr=False)
    is_symmetric: bool = True
    bound: Optional[float] = None
    analytic_parts: Optional[HoeffdingParts] = field(default=None, repr=False)
    support: Optional[tuple] = None
    breakpoints: Optional[Callable[[float], Sequence[float]]] = field(default=None, repr=False)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        shape = x.shape
        xf = np.ascontiguousarray(x.ravel())
        yf = np.ascontiguousarray(y.ravel())
        if self.support is not None:
            self.check_support(np.concatenate([xf, yf]))
        return _engine.apply_pairwise(self.scalar, xf, yf).reshape(shape)

    def check_support(self, values):
        lo, hi = self.support
        values = np.asarray(values)
        _record_clamps(self.name, int(np.count_nonzero((values < lo) | (values > hi))))


def make_kernel(name: str, func: Callable, *, is_symmetric: bool = True,
                bound: Optional[float] = None, breakpoints=None) -> Kernel:
    """Wrap a scalar Python function (or an existing numba dispatcher) as a kernel."""
    scalar = func if isinstance(func, nb.core.dispatcher.Dispatcher) else nb.njit(nogil=True)(func)
    return Kernel(name, scalar, is_symmetric=is_symmetric, bound=bound, breakpoints=breakpoints)


def constant_kernel(c: float = 0.0) -> Kernel:
    """``h = c``; its analytic parts are ``theta = c`` and vanishing ``h1``, ``h2``."""
    c = float(c)

    @nb.njit(nogil=True)
    def const(x, y):
        return c

    zero = _zero_kernel()
    parts = HoeffdingParts(c, lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                           zero.__call__, h2_kernel=zero)
    return Kernel(f"const({c!r})", const, bound=abs(c), analytic_parts=parts)


@functools.lru_cache(maxsize=None)
def _zero_kernel() -> Kernel:
    @nb.njit(nogil=True)
    def zero(x, y):
        return 0.0

    return Kernel("zero", zero, bound=0.0)


def eval_kernel(k: Kernel, x: float, y: float) -> float:
    """``h(x, y)`` for one pair of finite reals."""
    x = float(x)
    y = float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"kernel arguments must be finite, got ({x}, {y})")
    if k.support is not None:
        k.check_support([x, y])
    return float(k.scalar(x, y))


# -- built-in kernels -------------------------------------------------------


@nb.njit(nogil=True)
def _gini(x, y):
    return abs(x - y)


@nb.njit(nogil=True)
def _cvm(x, y):
    x = min(max(x, 0.0), 1.0)
    y = min(max(y, 0.0), 1.0)
    return 0.5 * (x * x + y * y) - max(x, y) + THIRD


@nb.njit(nogil=True)
def _gini_h1(x):
    # E|x - Y| - 1/3 for Y ~ U(0, 1)
    if 0.0 <= x <= 1.0:
        return x * x - x + 0.5 - THIRD
    return abs(x - 0.5) - THIRD


@nb.njit(nogil=True)
def _gini_h2(x, y):
    return abs(x - y) - THIRD - _gini_h1(x) - _gini_h1(y)


def triangular_cdf(t):
    """CDF of ``(X + Y)/2`` for independent uniform ``X, Y``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0.5, 2.0 * t * t, 1.0 - 2.0 * (1.0 - t) ** 2)
    out = np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, out))
    return out if out.ndim else float(out)


def triangular_density(t):
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0.5, 4.0 * t, 4.0 * (1.0 - t))
    out = np.where((t < 0.0) | (t > 1.0), 0.0, out)
    return out if out.ndim else float(out)


def _scalar_triangular_cdf(t):
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    if t <= 0.5:
        return 2.0 * t * t
    return 1.0 - 2.0 * (1.0 - t) ** 2


@functools.lru_cache(maxsize=None)
def _hl_kernel(t: float) -> Kernel:
    theta = _scalar_triangular_cdf(t)
    two_t = 2.0 * t

    @nb.njit(nogil=True)
    def hl(x, y):
        return 1.0 if 0.5 * (x + y) <= t else 0.0

    @nb.njit(nogil=True)
    def hl_h1(x):
        return min(max(two_t - x, 0.0), 1.0) - theta

    @nb.njit(nogil=True)
    def hl_h2(x, y):
        return hl(x, y) - theta - hl_h1(x) - hl_h1(y)

    name = f"hl_indicator({t!r})"
    h2_breaks = lambda x: (two_t - x, two_t, two_t - 1.0)
    h2_kernel = Kernel(f"{name}.h2", hl_h2, bound=3.0, breakpoints=h2_breaks)
    parts = HoeffdingParts(
        theta,
        functools.partial(_apply_unary, hl_h1),
        h2_kernel.__call__,
        h2_kernel=h2_kernel,
        breakpoints=h2_breaks,
    )
    return Kernel(name, hl, bound=1.0, analytic_parts=parts,
                  breakpoints=lambda x: (two_t - x,))


def _apply_unary(g, x):
    x = np.asarray(x, dtype=float)
    return _engine.apply_unary(g, np.ascontiguousarray(x.ravel())).reshape(x.shape)


@functools.lru_cache(maxsize=None)
def _gini_kernel() -> Kernel:
    diag = lambda x: (x,)
    h2_kernel = Kernel("gini.h2", _gini_h2, breakpoints=diag)
    parts = HoeffdingParts(THIRD, functools.partial(_apply_unary, _gini_h1),
                           h2_kernel.__call__, h2_kernel=h2_kernel, breakpoints=diag)
    return Kernel("gini", _gini, analytic_parts=parts, breakpoints=diag)


@functools.lru_cache(maxsize=None)
def _cvm_kernel() -> Kernel:
    diag = lambda x: (x,)
    base = Kernel("cvm", _cvm, bound=THIRD, support=(0.0, 1.0), breakpoints=diag)
    # fully degenerate under uniform01: h1 = 0 and h2 = h
    parts = HoeffdingParts(0.0, lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                           base.__call__, h2_kernel=replace(base, name="cvm.h2"),
                           breakpoints=diag)
    return replace(base, analytic_parts=parts)


def builtin_kernel(id: str, t: float = 0.5) -> Kernel:
    """``"gini"``, ``"cvm"`` or ``"hl_indicator"`` (with threshold ``t``)."""
    if id == "gini":
        return _gini_kernel()
    if id == "cvm":
        return _cvm_kernel()
    if id in ("hl", "hl_indicator"):
        return _hl_kernel(float(t))
    raise DomainError(f"unknown kernel id {id!r}")


def analytic_parts(k, marginal: str = "uniform01") -> HoeffdingParts:
    """Exact Hoeffding parts of a built-in kernel (or kernel id) under ``marginal``."""
    if isinstance(k, str):
        k = builtin_kernel(k)
    if marginal != "uniform01" or k.analytic_parts is None:
        raise UnsupportedCombinationError(
            f"no analytic Hoeffding parts for kernel {k.name!r} under marginal {marginal!r}")
    return k.analytic_parts


def scale_kernel(k: Kernel, c: float) -> Kernel:
    """The kernel ``c * h`` with correspondingly scaled analytic parts."""
    c = float(c)
    f = k.scalar

    @nb.njit(nogil=True)
    def scaled(x, y):
        return c * f(x, y)

    parts = None if k.analytic_parts is None else scale_parts(k.analytic_parts, c)
    bound = None if k.bound is None else abs(c) * k.bound
    return Kernel(f"{c!r}*{k.name}", scaled, is_symmetric=k.is_symmetric, bound=bound,
                  analytic_parts=parts, support=k.support, breakpoints=k.breakpoints)


def scale_parts(parts: HoeffdingParts, c: float) -> HoeffdingParts:
    c = float(c)
    h1, h2 = parts.h1, parts.h2
    h2_kernel = None if parts.h2_kernel is None else scale_kernel(parts.h2_kernel, c)
    return replace(parts, theta=c * parts.theta,
                   h1=lambda x: c * h1(x),
                   h2=h2_kernel.__call__ if h2_kernel is not None else (lambda x, y: c * h2(x, y)),
                   h2_kernel=h2_kernel)


def _sample_values(sample) -> np.ndarray:
    values = getattr(sample, "values", sample)
    return np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel())


def empirical_parts(k: Kernel, sample) -> HoeffdingParts:
    """Plug-in Hoeffding parts centred exactly on ``sample``.

    ``theta`` is the U-statistic of the sample.  At a sample value ``h1``
    averages over the other ``n - 1`` points (one copy of the value is left
    out); elsewhere it averages over all ``n`` points.  Consequently
    ``sum_i h1(X_i) = 0`` and ``sum_{i<j} h2(X_i, X_j) = 0`` up to rounding,
    and ``h2`` has no compiled kernel: these parts cannot drive rate
    experiments.
    """
    xs = _sample_values(sample)
    n = xs.shape[0]
    if n < 2:
        raise SizeError("empirical parts need at least two sample points")
    if k.support is not None:
        k.check_support(xs)
    pair_total = _engine.prefix_pair_sums(k.scalar, xs, np.array([n], dtype=np.int64))[0]
    theta = float(pair_total / (n * (n - 1) // 2))
    xs_frozen = xs.copy()
    xs_frozen.setflags(write=False)

    def h1(x):
        x = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(x.ravel())
        grid_x = np.repeat(flat, n)
        grid_y = np.tile(xs_frozen, flat.size)
        rows = _engine.apply_pairwise(k.scalar, grid_x, grid_y).reshape(flat.size, n).sum(axis=1)
        self_terms = _engine.apply_pairwise(k.scalar, flat, flat)
        on_sample = np.isin(flat, xs_frozen)
        out = np.where(on_sample, (rows - self_terms) / (n - 1), rows / n) - theta
        return out.reshape(x.shape)

    def h2(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return k(x, y) - theta - h1(x) - h1(y)

    return HoeffdingParts(theta, h1, h2, mode="empirical", marginal="empirical",
                          sample=xs_frozen, breakpoints=k.breakpoints)


# -- probes -----------------------------------------------------------------


def _midpoint_rule(a, b, resolution, breaks=()):
    """Composite midpoint nodes and weights on ``[a, b]``, split at ``breaks``."""
    cuts = sorted({a, b} | {float(c) for c in breaks if a < c < b})
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(round(resolution * (hi - lo) / (b - a))))
        h = (hi - lo) / m
        nodes.append(lo + h * (np.arange(m) + 0.5))
        weights.append(np.full(m, h))
    return np.concatenate(nodes), np.concatenate(weights)


def degeneracy_defect(parts: HoeffdingParts, probe_xs, marginal="uniform01",
                      resolution: int = 10_000, seed: int = 0) -> float:
    """``max_x |int h2(x, y) dF(y)|`` over the probe points.

    For ``marginal="uniform01"`` the integral is a composite midpoint rule
    with ``resolution`` nodes, split at the kernel's known kinks and jumps.
    Otherwise ``marginal`` is a sampler ``(rng, size) -> draws`` and the
    integral is a Monte-Carlo mean over ``resolution`` draws.
    """
    probe_xs = np.asarray(probe_xs, dtype=float).ravel()
    if probe_xs.size == 0:
        raise SizeError("empty probe set")
    if resolution < 2:
        raise SizeError("resolution must be at least 2")
    worst = 0.0
    if marginal == "uniform01":
        for x in probe_xs:
            breaks = parts.breakpoints(x) if parts.breakpoints is not None else ()
            ys, ws = _midpoint_rule(0.0, 1.0, resolution, breaks)
            worst = max(worst, abs(float(np.dot(ws, parts.h2(np.full_like(ys, x), ys)))))
    elif callable(marginal):
        ys = np.asarray(marginal(make_generator(seed), resolution), dtype=float)
        for x in probe_xs:
            worst = max(worst, abs(float(np.mean(parts.h2(np.full_like(ys, x), ys)))))
    else:
        raise UnsupportedCombinationError(f"unsupported marginal {marginal!r}")
    return worst


def kernel_spectrum(parts: HoeffdingParts, grid: int = 512) -> np.ndarray:
    """Eigenvalues (descending) of the Nystrom discretisation of ``h2``.

    Midpoint grid on ``[0, 1]`` with weights ``1/grid``; the matrix is
    checked for symmetry before the symmetric eigensolver runs.
    """
    if grid < 8:
        raise SizeError("grid must be at least 8")
    u = (np.arange(grid) + 0.5) / grid
    if parts.h2_kernel is not None:
        mat = _engine.kernel_matrix(parts.h2_kernel.scalar, u)
    else:
        mat = parts.h2(u[:, None], u[None, :])
    mat = mat / grid
    defect = float(np.max(np.abs(mat - mat.T)))
    if defect > 1e-9:
        raise SymmetryError(f"discretised h2 is not symmetric (defect {defect:.3g})")
    return np.linalg.eigvalsh(mat)[::-1].copy()


@dataclass(frozen=True)
class ModulusEstimate:
    kind: str
    epsilon: float
    estimate: float
    trials: int
    is_lower_bound: bool = True


def _ball_offsets(eps):
    d = eps / math.sqrt(2.0)
    return np.array([(0.0, 0.0), (eps, 0.0), (-eps, 0.0), (0.0, eps), (0.0, -eps),
                     (d, d), (d, -d), (-d, d), (-d, -d)])


def continuity_modulus(k: Kernel, kind: str, sampler, epsilon: float, trials: int = 10_000,
                       directions: int = 16, seed: int = 0) -> ModulusEstimate:
    """Monte-Carlo lower bound for the constant ``L`` of a continuity condition.

    ``sampler(rng, size)`` returns arrays ``(X, Y)``.

    ``kind="variation"`` estimates ``E sup |h(x, y) - h(x', y')| / epsilon``
    over pairs of points in the epsilon-ball around ``(X, Y)``; the sup is
    taken over the centre, the four axis and four diagonal boundary points
    and ``directions`` random points of the ball.  ``kind="p_lipschitz"``
    replaces only the first argument, ``X' = X + d`` with ``d = +-epsilon``
    and ``directions`` random shifts in ``[-epsilon, epsilon]``, and
    estimates ``E sup |h(X, Y) - h(X', Y)| 1{|X - X'| <= epsilon} / epsilon``.
    Sampled sups can only undershoot, so the estimate is a lower bound.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if trials < 1:
        raise SizeError("trials must be at least 1")
    rng = make_generator(seed)
    X, Y = (np.asarray(a, dtype=float) for a in sampler(rng, trials))
    if kind == "variation":
        fixed = _ball_offsets(epsilon)
        radius = epsilon * np.sqrt(rng.random((trials, directions)))
        angle = 2.0 * np.pi * rng.random((trials, directions))
        dx = np.concatenate([np.broadcast_to(fixed[:, 0], (trials, 9)), radius * np.cos(angle)], axis=1)
        dy = np.concatenate([np.broadcast_to(fixed[:, 1], (trials, 9)), radius * np.sin(angle)], axis=1)
        vals = k(X[:, None] + dx, Y[:, None] + dy)
        sups = vals.max(axis=1) - vals.min(axis=1)
    elif kind == "p_lipschitz":
        shifts = np.concatenate(
            [np.broadcast_to([-epsilon, epsilon], (trials, 2)),
             epsilon * (2.0 * rng.random((trials, directions)) - 1.0)], axis=1)
        base = k(X, Y)[:, None]
        moved = k(X[:, None] + shifts, np.broadcast_to(Y[:, None], shifts.shape))
        inside = np.abs(shifts) <= epsilon
        sups = np.max(np.abs(moved - base) * inside, axis=1)
    else:
        raise DomainError(f"unknown modulus kind {kind!r}")
    return ModulusEstimate(kind, float(epsilon), float(np.mean(sups)) / epsilon, int(trials))


@dataclass(frozen=True)
class MomentProbe:
    m: float
    k_max: int
    independent_moment: float
    lagged_moments: tuple
    bound_estimate: float


def uniform_moment_probe(k: Kernel, model, m: float, k_max: int, reps: int,
                         seed: int = 0) -> MomentProbe:
    """Estimate ``E|h(X, Y)|^m`` (independent copies) and ``E|h(X_1, X_{1+j})|^m``.

    Replicate ``r`` draws a path of length ``k_max + 1`` with seed
    ``replicate_seed(seed, r)``; its independent partner is the first value
    of the path with seed ``replicate_seed(seed, reps + r)``.
    """
    from .processes import generate_path

    if m < 1:
        raise DomainError("moment exponent m must be at least 1")
    if reps < 1:
        raise SizeError("reps must be at least 1")
    paths = np.empty((reps, k_max + 1))
    partners = np.empty(reps)
    for r in range(reps):
        paths[r] = generate_path(model, k_max + 1, replicate_seed(seed, r)).values
        partners[r] = generate_path(model, 1, replicate_seed(seed, reps + r)).values[0]
    lagged = np.mean(np.abs(k(paths[:, :1], paths)) ** m, axis=0)
    independent = float(np.mean(np.abs(k(paths[:, 0], partners)) ** m))
    lagged = tuple(float(v) for v in lagged)
    return MomentProbe(float(m), int(k_max), independent, lagged,
                       max(independent, max(lagged)))
