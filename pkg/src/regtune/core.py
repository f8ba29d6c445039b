# Core data carriers, probability metrics and the family interface shared by
# every estimator module: empirical samples, tuning grids, rate envelopes,
# discrete laws / function-on-grid parameter values, the bounded-Lipschitz and
# 1-D Wasserstein distances, and deterministic counter-based seeding.

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from sortedcontainers import SortedList


class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


# =========================
# Seeding
# =========================

def hash64(*parts) -> int:
    """Map a tuple of parts to a 64-bit seed via SHA-256 (fixed, published).

    The canonical encoding is the parts joined by '|' after str(); the seed is
    the first 8 bytes of the digest, big-endian.
    """
    s = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(s.encode("utf-8")).digest()[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by a 64-bit seed; no global RNG."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & (2**64 - 1))))


# =========================
# Data carriers
# =========================

@dataclass(frozen=True)
class EmpiricalSample:
    """An observed batch of n real vectors; carrier of the empirical measure.

    Each observation gets mass 1/n (duplicates allowed).
    """

    observations: np.ndarray  # shape (n, d)

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2 or obs.shape[0] < 1:
            raise DomainError("sample needs at least one observation of fixed dimension")
        object.__setattr__(self, "observations", obs)
        self.observations.setflags(write=False)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def d(self) -> int:
        return self.observations.shape[1]

    def column(self, j: int = 0) -> np.ndarray:
        return self.observations[:, j]


@dataclass(frozen=True)
class TuningGrid:
    """Finite, strictly increasing set of positive tuning parameters."""

    values: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ConfigError("grid must be a non-empty 1-D array")
        if np.any(v <= 0):
            raise ConfigError("grid values must be positive")
        if np.any(np.diff(v) <= 0):
            raise ConfigError("grid values must be strictly increasing")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    def __len__(self) -> int:
        return self.values.size

    @property
    def max(self) -> float:
        return float(self.values[-1])

    @property
    def min(self) -> float:
        return float(self.values[0])


@dataclass(frozen=True)
class RateEnvelope:
    """Monotone majorants for the sampling and approximation errors.

    sampling(k, n) is non-decreasing in k for fixed n; bias(k) is
    non-increasing in k and vanishes along grid extensions.  The optional
    drift(k, n) component is used by the undersmoothing selector.
    rate_inverse(n) is the (slowed) rate at which the empirical measure
    approaches the truth; kept as metadata for diagnostics.
    """

    sampling: Callable[[float, int], float]
    bias: Callable[[float], float]
    drift: Optional[Callable[[float, int], float]] = None
    rate_inverse: Callable[[int], float] = field(
        default=lambda n: slow_factor(n) / np.sqrt(n))

    def check_monotone(self, grid: TuningGrid, n: int, atol: float = 1e-12) -> None:
        samp = np.array([self.sampling(k, n) for k in grid.values])
        bias = np.array([self.bias(k) for k in grid.values])
        if np.any(np.diff(samp) < -atol):
            raise ConfigError("sampling envelope must be non-decreasing in k")
        if np.any(np.diff(bias) > atol):
            raise ConfigError("bias envelope must be non-increasing in k")


def slow_factor(n: int) -> float:
    """Default slowly diverging factor l_n = log(log(n + e))."""
    return float(np.log(np.log(n + np.e)))


# =========================
# Parameter values
# =========================

@dataclass(frozen=True)
class ScalarValue:
    value: float


@dataclass(frozen=True)
class FunctionOnGrid:
    """A function-valued parameter stored as values on a fixed evaluation grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise DomainError("grid and values must be 1-D arrays of equal length")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        g.setflags(write=False)
        v.setflags(write=False)


@dataclass(frozen=True)
class DiscreteLaw:
    """Finitely supported probability law on the real line."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise DomainError("empty support")
        if x.shape != p.shape:
            raise DomainError("support/probs length mismatch")
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be nonnegative and sum to 1")
        order = np.argsort(x, kind="stable")
        x, p = x[order], p[order]
        # merge duplicate support points
        if x.size > 1 and np.any(np.diff(x) == 0):
            ux, inv = np.unique(x, return_inverse=True)
            up = np.zeros_like(ux)
            np.add.at(up, inv, p)
            x, p = ux, up
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "probs", p)
        x.setflags(write=False)
        p.setflags(write=False)

    @classmethod
    def point_mass(cls, x: float) -> "DiscreteLaw":
        return cls(np.array([x]), np.array([1.0]))


ParameterValue = ScalarValue | FunctionOnGrid | DiscreteLaw


def parameter_distance(a: ParameterValue, b: ParameterValue) -> float:
    """Default pseudometric between parameter values.

    Scalars: absolute difference.  Functions-on-grid: max-abs over the shared
    grid.  Discrete laws: bounded-Lipschitz distance.
    """
    if isinstance(a, ScalarValue) and isinstance(b, ScalarValue):
        return abs(a.value - b.value)
    if isinstance(a, FunctionOnGrid) and isinstance(b, FunctionOnGrid):
        if a.grid.shape != b.grid.shape or np.any(a.grid != b.grid):
            raise DomainError("function values live on different grids")
        return float(np.max(np.abs(a.values - b.values)))
    if isinstance(a, DiscreteLaw) and isinstance(b, DiscreteLaw):
        return bl_distance(a, b)
    raise DomainError(f"incomparable parameter values: {type(a)} vs {type(b)}")


@dataclass(frozen=True)
class InfluenceEvaluation:
    """Per-observation influence values (centered) and their empirical L2 norm."""

    values: np.ndarray
    norm: float

    @classmethod
    def from_values(cls, centered: np.ndarray) -> "InfluenceEvaluation":
        centered = np.asarray(centered, dtype=float)
        return cls(values=centered, norm=float(np.sqrt(np.mean(centered**2))))


@runtime_checkable
class Regularization(Protocol):
    """Tuning-indexed family of estimator maps.

    evaluate is deterministic given (k, sample, seed); stochastic families
    must route all randomness through the explicit seed.
    """

    def evaluate(self, k: float, sample: EmpiricalSample,
                 seed: Optional[int] = None) -> ParameterValue: ...

    def distance(self, a: ParameterValue, b: ParameterValue) -> float: ...


# =========================
# Metrics
# =========================

def empirical_measure(sample: EmpiricalSample) -> DiscreteLaw:
    """Empirical law of a 1-D sample: distinct values with multiplicity/n mass."""
    if sample.d != 1:
        raise DomainError("law conversion needs a 1-D sample")
    z = sample.column(0)
    return DiscreteLaw(z, np.full(z.size, 1.0 / z.size))


def _merged_signed_mass(p: DiscreteLaw, q: DiscreteLaw):
    x = np.concatenate([p.support, q.support])
    c = np.concatenate([p.probs, -q.probs])
    order = np.argsort(x, kind="stable")
    x, c = x[order], c[order]
    ux, inv = np.unique(x, return_inverse=True)
    uc = np.zeros_like(ux)
    np.add.at(uc, inv, c)
    return ux, uc


def w1_distance(p: DiscreteLaw, q: DiscreteLaw) -> float:
    """1-D Wasserstein-1 via exact integration of |F_p - F_q|."""
    x, c = _merged_signed_mass(p, q)
    if x.size == 1:
        return 0.0
    cdf_diff = np.cumsum(c)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(x)))


def bl_distance(p: DiscreteLaw, q: DiscreteLaw, method: str = "auto") -> float:
    """Bounded-Lipschitz (Fortet-Mourier) distance between finite-support laws.

    sup over f with sup-norm <= 1 and Lipschitz constant <= 1 of
    |integral f d(p - q)|.  In 1-D the Lipschitz constraints between adjacent
    sorted support points imply all others, so the value solves a chain LP.
    method: 'lp' (HiGHS on the chain LP), 'dp' (exact slope-trick dynamic
    program on the transport dual), or 'auto' (lp on small supports, dp on
    large ones; both exact).
    """
    x, c = _merged_signed_mass(p, q)
    if x.size == 1:
        return 0.0
    if method == "auto":
        method = "lp" if x.size <= 2000 else "dp"
    if method == "lp":
        return _bl_lp(x, c)
    if method == "dp":
        return _bl_dp(x, c)
    raise ConfigError(f"unknown bl_distance method {method!r}")


def _bl_lp(x: np.ndarray, c: np.ndarray) -> float:
    m = x.size
    dx = np.diff(x)
    i = np.arange(m - 1)
    rows = np.concatenate([np.repeat(i, 2), np.repeat(i + (m - 1), 2)])
    cols = np.tile(np.column_stack([i, i + 1]).ravel(), 2)
    vals = np.concatenate([np.tile([-1.0, 1.0], m - 1), np.tile([1.0, -1.0], m - 1)])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * (m - 1), m))
    b = np.concatenate([dx, dx])
    # default feasibility tolerances (~1e-7) can overshoot near-tie instances
    res = linprog(-c, A_ub=A, b_ub=b, bounds=(-1.0, 1.0), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:  # pragma: no cover - HiGHS is reliable on this class
        raise RuntimeError(f"BL chain LP failed: {res.message}")
    return float(-res.fun)


def _bl_dp(x: np.ndarray, c: np.ndarray) -> float:
    """Exact BL distance via the transport dual.

    The LP dual is a min-cost transportation problem on the sorted support
    with per-unit movement cost |x_i - x_j| and unit cost for creating or
    destroying mass (from the sup-norm bound on f).  With C = cumsum(p - q)
    and G the cumulative destroyed mass, the value is

        min_G  sum_i d_i |C_i - G_i| + sum_i |G_i - G_{i-1}|,   G_0 = G_m = 0.

    Solved by dynamic programming over convex piecewise-linear value
    functions: the total-variation step clamps slopes to [-1, 1] and each
    data term adds a weighted absolute deviation (weighted slope trick).
    """
    dx = np.diff(x)
    C = np.cumsum(c)[:-1]

    # Convex PL value function: minval + sum_L w*max(p - g, 0) + sum_R w*max(g - p, 0)
    # with L strictly left of the argmin interval and R strictly right.
    L: SortedList = SortedList()  # entries [pos, weight]
    R: SortedList = SortedList()
    L.add([0.0, 1.0])
    R.add([0.0, 1.0])
    minval = 0.0
    sumL = 1.0
    sumR = 1.0

    for a, w in zip(C, dx):
        if w > 0.0:
            # add w*|g - a|
            L.add([a, w])
            R.add([a, w])
            sumL += w
            sumR += w
            # restore the L <= argmin <= R partition
            while L and R and L[-1][0] > R[0][0]:
                pl, wl = L[-1]
                pr, wr = R[0]
                t = min(wl, wr)
                minval += (pl - pr) * t
                if wl == t:
                    L.pop(-1)
                else:
                    L[-1][1] = wl - t
                if wr == t:
                    R.pop(0)
                else:
                    R[0][1] = wr - t
                L.add([pr, t])
                R.add([pl, t])

        # clamp slopes to [-1, 1] (inf-convolution with |.|); min unchanged
        excess = sumL - 1.0
        while excess > 0.0 and L:
            pos, wt = L[0]
            t = min(wt, excess)
            if wt == t:
                L.pop(0)
            else:
                L[0][1] = wt - t
            sumL -= t
            excess -= t
        excess = sumR - 1.0
        while excess > 0.0 and R:
            pos, wt = R[-1]
            t = min(wt, excess)
            if wt == t:
                R.pop(-1)
            else:
                R[-1][1] = wt - t
            sumR -= t
            excess -= t

    # evaluate at G = 0 (final boundary condition)
    val = minval
    for pos, wt in L:
        if pos > 0.0:
            val += wt * pos
    for pos, wt in R:
        if pos < 0.0:
            val -= wt * pos
    return float(val)


def bl_distance_bruteforce(p: DiscreteLaw, q: DiscreteLaw) -> float:
    """Oracle BL distance: dense LP with all pairwise Lipschitz constraints.

    Exact but O(m^2) constraints; intended for tests on small supports.
    """
    x, c = _merged_signed_mass(p, q)
    m = x.size
    if m == 1:
        return 0.0
    rows, cols, vals, b = [], [], [], []
    r = 0
    for i in range(m):
        for j in range(i + 1, m):
            d = x[j] - x[i]
            rows += [r, r, r + 1, r + 1]
            cols += [i, j, i, j]
            vals += [1.0, -1.0, -1.0, 1.0]
            b += [d, d]
            r += 2
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, m))
    res = linprog(-c, A_ub=A, b_ub=np.array(b), bounds=(-1.0, 1.0), method="highs")
    if res.status != 0:  # pragma: no cover
        raise RuntimeError(f"BL brute-force LP failed: {res.message}")
    return float(-res.fun)
