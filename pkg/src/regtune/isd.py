# Integrated squared density and pointwise density estimation: kernel
# constructions (plain, convolution, twicing, leave-one-out), closed-form
# double-sum estimators, bias bound, influence values, inverse-bandwidth grid
# construction, and the rate envelopes feeding undersmoothing selection.

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .core import (ConfigError, DomainError, EmpiricalSample,
                   InfluenceEvaluation, RateEnvelope, ScalarValue, TuningGrid,
                   slow_factor)

__all__ = [
    "KernelSpec",
    "BandwidthGrid",
    "isd_estimate",
    "isd_bias_bound",
    "isd_influence",
    "isd_envelopes",
    "gine_nickl_grid",
    "pointwise_density",
    "isd_population_value",
    "IsdFamily",
]

_QUAD_LIMIT = 200
_QUAD_TOL = 1e-10


# =========================
# Base densities
# =========================

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_INV_SQRT_4PI = 1.0 / np.sqrt(4.0 * np.pi)


def _gauss_pdf(t):
    t = np.asarray(t, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * t * t)


def _gauss_conv(t):
    # convolution of two standard gaussians: N(0, 2)
    t = np.asarray(t, dtype=float)
    return _INV_SQRT_4PI * np.exp(-0.25 * t * t)


def _biweight_pdf(t):
    # (15/16)(1 - t^2)^2 on [-1, 1]; a smooth compactly supported density
    t = np.asarray(t, dtype=float)
    out = np.where(np.abs(t) <= 1.0, (15.0 / 16.0) * (1.0 - t**2) ** 2, 0.0)
    return out


def _biweight_conv(t):
    # self-convolution of the biweight, computed by exact quadrature on the
    # overlap interval; vectorized over t, supported on [-2, 2]
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    shape = arr.shape
    flat = arr.ravel()
    out = np.zeros_like(flat)
    # 16-point Gauss-Legendre is exact for the degree-8 polynomial integrand
    nodes, weights = np.polynomial.legendre.leggauss(16)
    for i, ti in enumerate(flat):
        lo, hi = max(-1.0, ti - 1.0), min(1.0, ti + 1.0)
        if lo >= hi:
            continue
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        u = mid + half * nodes
        out[i] = half * np.sum(weights * _biweight_pdf(u) * _biweight_pdf(ti - u))
    out = out.reshape(shape)
    return out if out.size > 1 else float(out.ravel()[0])


_BASES = {
    "gaussian": (_gauss_pdf, _gauss_conv, np.inf),
    "biweight": (_biweight_pdf, _biweight_conv, 1.0),
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kappa = rho + lam*(rho - rho*rho) built from a symmetric base pdf.

    lam = 0 gives the plain kernel, lam = -1 the convolution kernel and
    lam = +1 the twicing kernel. leave_one_out drops diagonal pair terms,
    equivalent to forcing kappa(0) = 0 in the double sums.
    """

    base: str = "gaussian"
    lam: int = 0
    leave_one_out: bool = False

    def __post_init__(self):
        if self.base not in _BASES:
            raise ConfigError(f"unknown base density {self.base!r}")
        if self.lam not in (-1, 0, 1):
            raise ConfigError("lam must be -1, 0 or +1")

    @property
    def support_radius(self) -> float:
        return _BASES[self.base][2]

    def rho(self, t):
        return _BASES[self.base][0](t)

    def rho_conv(self, t):
        return _BASES[self.base][1](t)

    def kappa(self, t):
        rho = self.rho(t)
        if self.lam == 0:
            return rho
        return rho + self.lam * (rho - self.rho_conv(t))

    def kappa0(self) -> float:
        """kappa(0), the diagonal pair value; 0 under leave-one-out."""
        return 0.0 if self.leave_one_out else float(self.kappa(0.0))

    def kappa_scaled(self, k: float, t):
        """kappa_k(t) = k * kappa(k t)."""
        return k * self.kappa(k * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class BandwidthGrid:
    """Inverse-bandwidth tuning grid (k = 1/h)."""

    grid: TuningGrid

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def bandwidths(self) -> np.ndarray:
        return 1.0 / self.grid.values

    def __len__(self) -> int:
        return len(self.grid)


# =========================
# Estimators
# =========================

def _pair_sum(kernel: KernelSpec, k: float, z: np.ndarray) -> float:
    """n^{-2} sum_{i,j} kappa_k(Z_i - Z_j), diagonal dropped if leave-one-out."""
    n = z.size
    diff = z[:, None] - z[None, :]
    vals = kernel.kappa_scaled(k, diff.ravel()).reshape(n, n)
    if kernel.leave_one_out:
        np.fill_diagonal(vals, 0.0)
        return float(vals.sum() / (n * n))
    return float(vals.sum() / (n * n))


def isd_estimate(kernel: KernelSpec, k: float, sample: EmpiricalSample) -> float:
    """Integrated squared density estimate: the closed-form double sum."""
    if k <= 0:
        raise DomainError("inverse bandwidth must be positive")
    if sample.d != 1:
        raise DomainError("univariate samples only")
    if kernel.leave_one_out and sample.n < 2:
        raise DomainError("leave-one-out needs n >= 2")
    return _pair_sum(kernel, k, sample.column(0))


def isd_estimate_weighted(kernel: KernelSpec, k: float, z: np.ndarray,
                          w: np.ndarray) -> float:
    """Weighted pair-sum sum_{i,j} w_i w_j kappa_k(z_i - z_j) for mixtures."""
    diff = z[:, None] - z[None, :]
    vals = kernel.kappa_scaled(k, diff.ravel()).reshape(z.size, z.size)
    if kernel.leave_one_out:
        np.fill_diagonal(vals, 0.0)
    return float(w @ vals @ w)


def isd_bias_bound(k: float, holder_exponent: float, holder_scale: float,
                   kernel: KernelSpec) -> float:
    """Approximation-error bound C * k^{-2 rho} * int |kappa(u)| |u|^{2 rho} du."""
    if not (0.0 < holder_exponent < 0.5):
        raise DomainError("holder exponent must lie in (0, 0.5)")
    if k <= 0:
        raise DomainError("inverse bandwidth must be positive")
    moment = kernel_abs_moment(kernel, 2.0 * holder_exponent)
    return holder_scale * k ** (-2.0 * holder_exponent) * moment


def kernel_abs_moment(kernel: KernelSpec, power: float) -> float:
    """int |kappa(u)| |u|^power du by adaptive quadrature."""
    r = kernel.support_radius
    hi = 2.0 * r if np.isfinite(r) else 40.0
    val, _ = integrate.quad(lambda u: abs(float(kernel.kappa(u))) * abs(u) ** power,
                            -hi, hi, epsabs=_QUAD_TOL, limit=_QUAD_LIMIT)
    return float(val)


def kde_at(kernel: KernelSpec, k: float, sample: EmpiricalSample, z) -> np.ndarray:
    """(kappa_k * P_n)(z) for scalar or array z."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    x = sample.column(0)
    return kernel.kappa_scaled(k, zz[:, None] - x[None, :]).mean(axis=1)


def isd_influence(kernel: KernelSpec, k: float,
                  sample: EmpiricalSample) -> InfluenceEvaluation:
    """Plug-in influence 2{(kappa_k * P_n)(Z_i) - mean_j (kappa_k * P_n)(Z_j)}."""
    if sample.n < 2:
        raise DomainError("influence needs n >= 2")
    vals = kde_at(kernel, k, sample, sample.column(0))
    centered = 2.0 * (vals - vals.mean())
    return InfluenceEvaluation.from_values(centered)


def pointwise_density(kernel: KernelSpec, k: float, sample: EmpiricalSample,
                      z: float) -> float:
    """KDE value n^{-1} sum kappa_k(z - Z_i)."""
    if k <= 0:
        raise DomainError("inverse bandwidth must be positive")
    return float(kde_at(kernel, k, sample, z)[0])


def pointwise_density_influence(kernel: KernelSpec, k: float,
                                sample: EmpiricalSample, z: float
                                ) -> InfluenceEvaluation:
    """Centered kernel values kappa_k(z - Z_i) - mean."""
    vals = kernel.kappa_scaled(k, z - sample.column(0))
    return InfluenceEvaluation.from_values(vals - vals.mean())


# =========================
# Grid and envelopes
# =========================

def gine_nickl_grid(n: int, a: float = 2.0, delta: float = 0.5) -> BandwidthGrid:
    """Geometric bandwidth grid between n^{delta-1} and (log n)^4 / n^2.

    h_0 = n^{delta-1}, h_1 = log(n)/n, h_2 = 1/(l_n n), h_{j+1} = h_j / a,
    keeping only bandwidths inside [(log n)^4 / n^2, n^{delta-1}].
    """
    if n < 8:
        raise ConfigError("grid construction needs n >= 8")
    if not (a > 1.0):
        raise ConfigError("grid ratio a must exceed 1")
    if not (0.0 < delta < 1.0):
        raise ConfigError("delta must lie in (0, 1)")
    lo = (np.log(n)) ** 4 / n**2
    hi = n ** (delta - 1.0)
    if lo > hi:
        raise ConfigError("empty bandwidth interval at this n")
    hs = [hi, np.log(n) / n, 1.0 / (slow_factor(n) * n)]
    while hs[-1] / a >= lo:
        hs.append(hs[-1] / a)
    hs = [h for h in hs if lo <= h <= hi]
    hs = sorted(set(hs), reverse=True)
    if not hs:
        raise ConfigError("empty bandwidth grid")
    ks = np.array([1.0 / h for h in hs])
    return BandwidthGrid(TuningGrid(ks, provenance="gine-nickl"))


def isd_envelopes(n: int, grid: BandwidthGrid, holder_exponent: float,
                  holder_scale: float, kernel: KernelSpec,
                  m: float = 0.0, log_power: float = 3.0) -> RateEnvelope:
    """Envelopes for undersmoothing selection of the squared-density estimate.

    sampling = (log n)^p (k*kappa(0) + sqrt(k)) / sqrt(n)
    drift    = (log n)^p k^{-(m + rho)}
    bias     = isd_bias_bound
    """
    kap0 = kernel.kappa0()

    def sampling(k, nn):
        return float(np.log(nn)) ** log_power * (k * kap0 + np.sqrt(k)) / np.sqrt(nn)

    def drift(k, nn):
        return float(np.log(nn)) ** log_power * k ** (-(m + holder_exponent))

    def bias(k):
        return isd_bias_bound(k, holder_exponent, holder_scale, kernel)

    return RateEnvelope(sampling=sampling, bias=bias, drift=drift)


# =========================
# Population oracles
# =========================

def isd_population_value(kernel: KernelSpec, k: float,
                         density: Callable[[np.ndarray], np.ndarray],
                         radius: float = 40.0) -> float:
    """psi_k(P) = int (kappa_k * P)(x) p(x) dx by nested adaptive quadrature."""
    def smoothed(x):
        f = lambda u: float(kernel.kappa_scaled(k, x - u)) * float(density(u))
        r = kernel.support_radius
        if np.isfinite(r):
            lo, hi = x - r / k, x + r / k
        else:
            lo, hi = -radius, radius
        val, _ = integrate.quad(f, lo, hi, epsabs=_QUAD_TOL, limit=_QUAD_LIMIT)
        return val

    val, _ = integrate.quad(lambda x: smoothed(x) * float(density(x)),
                            -radius, radius, epsabs=1e-9, limit=_QUAD_LIMIT)
    return float(val)


def isd_population_influence_sd(kernel: KernelSpec, k: float,
                                density: Callable, radius: float = 40.0) -> float:
    """L2(P) norm of the population influence 2{(kappa_k*P)(z) - E[...]}."""
    def smoothed(x):
        f = lambda u: float(kernel.kappa_scaled(k, x - u)) * float(density(u))
        r = kernel.support_radius
        if np.isfinite(r):
            lo, hi = x - r / k, x + r / k
        else:
            lo, hi = -radius, radius
        val, _ = integrate.quad(f, lo, hi, epsabs=_QUAD_TOL, limit=_QUAD_LIMIT)
        return val

    mean, _ = integrate.quad(lambda x: smoothed(x) * float(density(x)),
                             -radius, radius, epsabs=1e-9, limit=_QUAD_LIMIT)
    second, _ = integrate.quad(
        lambda x: (2.0 * (smoothed(x) - mean)) ** 2 * float(density(x)),
        -radius, radius, epsabs=1e-9, limit=_QUAD_LIMIT)
    return float(np.sqrt(second))


# =========================
# Family adapter
# =========================

class IsdFamily:
    """Tuning-indexed squared-density family for the selection interface."""

    def __init__(self, kernel: KernelSpec):
        self.kernel = kernel

    def evaluate(self, k: float, sample: EmpiricalSample,
                 seed: Optional[int] = None) -> ScalarValue:
        return ScalarValue(isd_estimate(self.kernel, k, sample))

    def distance(self, a: ScalarValue, b: ScalarValue) -> float:
        return abs(a.value - b.value)

    def influence(self, k: float, sample: EmpiricalSample) -> InfluenceEvaluation:
        return isd_influence(self.kernel, k, sample)
