# Instrumental-variable estimation of linear functionals of a nonparametric
# regression: series two-stage least squares and Tikhonov (kernel-smoothed
# penalized) regularizations with their exact influence formulas.

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre

from .core import (ConfigError, DomainError, EmpiricalSample,
                   InfluenceEvaluation)
from .isd import KernelSpec

__all__ = [
    "SieveBasis",
    "NpivFit",
    "npiv_sieve_fit",
    "npiv_sieve_influence",
    "npiv_tikhonov_fit",
    "npiv_tikhonov_influence",
    "npiv_functional",
]


class IllPosedError(RuntimeError):
    """Design matrix numerically singular at this tuning value."""


# =========================
# Bases on [0, 1]
# =========================

@dataclass(frozen=True)
class SieveBasis:
    """Orthonormal basis pair on [0,1]: J instrument and L endogenous functions."""

    family: str = "cosine"
    J: int = 2
    L: int = 1

    def __post_init__(self):
        if self.family not in ("cosine", "shifted-legendre"):
            raise ConfigError(f"unknown basis family {self.family!r}")
        if not (1 <= self.L <= self.J):
            raise ConfigError("need 1 <= L <= J")

    def _eval(self, x: np.ndarray, size: int) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((x.size, size))
        if self.family == "cosine":
            out[:, 0] = 1.0
            for j in range(1, size):
                out[:, j] = np.sqrt(2.0) * np.cos(j * np.pi * x)
        else:
            # shifted Legendre, orthonormal on [0,1]: sqrt(2j+1) P_j(2x-1)
            t = 2.0 * x - 1.0
            for j in range(size):
                cj = np.zeros(j + 1)
                cj[j] = 1.0
                out[:, j] = np.sqrt(2.0 * j + 1.0) * legendre.legval(t, cj)
        return out

    def instruments(self, x) -> np.ndarray:
        return self._eval(x, self.J)

    def endogenous(self, w) -> np.ndarray:
        return self._eval(w, self.L)


# =========================
# Fits
# =========================

@dataclass(frozen=True)
class NpivFit:
    """Fitted regularized regression: either series coefficients or grid values."""

    method: str                      # 'sieve' | 'tikhonov'
    k: float
    coefficients: np.ndarray         # length L (sieve) or grid values (tikhonov)
    basis: Optional[SieveBasis] = None
    q_uv: Optional[np.ndarray] = None
    moment_uy: Optional[np.ndarray] = None
    # tikhonov discretization
    grid: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    kernel: Optional[KernelSpec] = None
    lam: float = 0.0

    def predict(self, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.method == "sieve":
            return self.basis.endogenous(w) @ self.coefficients
        return np.interp(w, self.grid, self.coefficients)


def _check_unit_interval(x: np.ndarray, name: str) -> None:
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError(f"{name} values must lie in [0, 1]")


def npiv_sieve_fit(sample: EmpiricalSample, basis: SieveBasis) -> NpivFit:
    """Series 2SLS: c solves (Quv' Quv) c = Quv' E_n[u Y] (Lebesgue Gram = I)."""
    if sample.d != 3:
        raise DomainError("sample must have columns (Y, W, X)")
    y, w, x = sample.column(0), sample.column(1), sample.column(2)
    _check_unit_interval(w, "W")
    _check_unit_interval(x, "X")
    if sample.n <= basis.J:
        raise DomainError("need n > J")
    u = basis.instruments(x)
    v = basis.endogenous(w)
    q_uv = u.T @ v / sample.n
    m_uy = u.T @ y / sample.n
    gram = q_uv.T @ q_uv
    eigmin = float(np.linalg.eigvalsh(gram)[0])
    if eigmin <= 1e-10:
        raise IllPosedError(f"design singular at this k (min eigenvalue {eigmin:.2e})")
    coef = np.linalg.solve(gram, q_uv.T @ m_uy)
    return NpivFit(method="sieve", k=float(basis.L), coefficients=coef,
                   basis=basis, q_uv=q_uv, moment_uy=m_uy)


def npiv_sieve_influence(fit: NpivFit, sample: EmpiricalSample,
                         pi_coeffs: np.ndarray, mode: str = "residual",
                         true_h: Optional[Callable] = None,
                         proxy_fit: Optional[NpivFit] = None
                         ) -> InfluenceEvaluation:
    """Per-observation influence of the linear functional pi'c.

    term1 is the sampling-error part (y - fitted)*instrument weighting; term2
    carries the first-stage moment residual. mode selects that residual:
    'residual' uses E_n[u (Y - fitted(W))] and is the exact derivative of the
    estimator map; 'analytic' substitutes a known true regression function;
    'max-k' substitutes a finer fit as proxy for the truth.
    """
    if fit.method != "sieve":
        raise ConfigError("sieve influence requires a sieve fit")
    y, w, x = sample.column(0), sample.column(1), sample.column(2)
    basis = fit.basis
    u = basis.instruments(x)
    v = basis.endogenous(w)
    pi = np.asarray(pi_coeffs, dtype=float)
    if pi.shape != (basis.L,):
        raise ConfigError("pi_coeffs must have length L")
    gram = fit.q_uv.T @ fit.q_uv
    a = np.linalg.solve(gram, pi)            # (Quv'Quv)^{-1} pi
    fitted = v @ fit.coefficients

    if mode == "residual":
        resid_fn = y - fitted
    elif mode == "analytic":
        if true_h is None:
            raise ConfigError("analytic mode needs true_h")
        resid_fn = true_h(w) - fitted
    elif mode == "max-k":
        if proxy_fit is None:
            raise ConfigError("max-k mode needs proxy_fit")
        resid_fn = proxy_fit.predict(w) - fitted
    else:
        raise ConfigError(f"unknown influence mode {mode!r}")
    r = u.T @ resid_fn / sample.n            # E_n[u * residual]

    term1 = (y - fitted) * (u @ (fit.q_uv @ a))
    term2 = (u @ r) * (v @ a)
    vals = term1 + term2
    return InfluenceEvaluation.from_values(vals - vals.mean())


# =========================
# Tikhonov (ridge-inverted convolution operator)
# =========================

def _trap_weights(m: int) -> np.ndarray:
    w = np.full(m, 1.0 / (m - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def npiv_tikhonov_fit(sample: EmpiricalSample, k: float, lam: float,
                      kernel: Optional[KernelSpec] = None,
                      m: int = 201) -> NpivFit:
    """Ridge-inverted kernel-smoothed operator fit on a uniform [0,1] grid.

    T[g](t) = E_n[kappa_k(X - t) g(W)] with g interpolated from the grid;
    psi solves (T* T + lam I) psi = T* r with r(t) = E_n[kappa_k(X - t) Y];
    the adjoint is taken in the trapezoid-weighted inner product.
    """
    if lam <= 0:
        raise ConfigError("penalty must be positive")
    if k <= 0:
        raise DomainError("inverse bandwidth must be positive")
    if sample.d != 3:
        raise DomainError("sample must have columns (Y, W, X)")
    if kernel is None:
        kernel = KernelSpec(base="gaussian", lam=0)
    y, w, x = sample.column(0), sample.column(1), sample.column(2)
    _check_unit_interval(w, "W")
    _check_unit_interval(x, "X")
    grid = np.linspace(0.0, 1.0, m)
    wts = _trap_weights(m)

    C = kernel.kappa_scaled(k, x[None, :] - grid[:, None])   # (m, n)
    S = _interp_matrix(w, grid)                              # (n, m)
    T = (C @ S) / sample.n                                   # (m, m)
    r = (C @ y) / sample.n                                   # (m,)
    Tstar = (T.T * wts[None, :]) / wts[:, None]
    A = Tstar @ T
    psi = np.linalg.solve(A + lam * np.eye(m), Tstar @ r)
    return NpivFit(method="tikhonov", k=float(k), coefficients=psi,
                   grid=grid, weights=wts, kernel=kernel, lam=lam)


def _interp_matrix(w: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Sparse-in-spirit linear interpolation matrix: (S g)_i = g(w_i)."""
    m = grid.size
    idx = np.clip(np.searchsorted(grid, w) - 1, 0, m - 2)
    frac = (w - grid[idx]) / (grid[idx + 1] - grid[idx])
    S = np.zeros((w.size, m))
    rows = np.arange(w.size)
    S[rows, idx] = 1.0 - frac
    S[rows, idx + 1] = frac
    return S


def npiv_tikhonov_influence(fit: NpivFit, sample: EmpiricalSample,
                            pi_on_grid: np.ndarray) -> InfluenceEvaluation:
    """Exact derivative of the grid-quadrature functional <pi, psi>.

    With q = (T*T + lam)^{-1} pi and g = T psi - r, the per-observation value
    is K[Tq](x_i)(y_i - psi(w_i)) - q(w_i) K[g](x_i), where K smooths a grid
    function against kappa_k at the observation point.
    """
    if fit.method != "tikhonov":
        raise ConfigError("tikhonov influence requires a tikhonov fit")
    y, w, x = sample.column(0), sample.column(1), sample.column(2)
    grid, wts, kernel, lam = fit.grid, fit.weights, fit.kernel, fit.lam
    m = grid.size
    pi = np.asarray(pi_on_grid, dtype=float)
    if pi.shape != (m,):
        raise ConfigError("pi_on_grid must match the discretization grid")

    C = kernel.kappa_scaled(fit.k, x[None, :] - grid[:, None])
    S = _interp_matrix(w, grid)
    T = (C @ S) / sample.n
    r = (C @ y) / sample.n
    Tstar = (T.T * wts[None, :]) / wts[:, None]
    A = Tstar @ T
    q = np.linalg.solve(A + lam * np.eye(m), pi)
    g = T @ fit.coefficients - r

    def smooth_at(gridfun, pts):
        # K[f](p) = sum_a wts_a kappa_k(p - t_a) f_a
        kp = kernel.kappa_scaled(fit.k, pts[:, None] - grid[None, :])
        return kp @ (wts * gridfun)

    term1 = smooth_at(T @ q, x) * (y - fit.predict(w))
    term2 = np.interp(w, grid, q) * smooth_at(g, x)
    vals = term1 - term2
    return InfluenceEvaluation.from_values(vals - vals.mean())


def npiv_functional(fit: NpivFit, pi, sample: Optional[EmpiricalSample] = None,
                    influence_mode: str = "residual"):
    """Linear functional of the fit and its influence-based standard error.

    For sieve fits pi is a length-L coefficient vector; for tikhonov fits pi
    is a grid function integrated by trapezoid quadrature. Returns
    (estimate, standard_error); the standard error needs the sample.
    """
    pi = np.asarray(pi, dtype=float)
    if fit.method == "sieve":
        gamma = float(pi @ fit.coefficients)
        if sample is None:
            return gamma, None
        infl = npiv_sieve_influence(fit, sample, pi, mode=influence_mode)
    else:
        gamma = float(np.sum(fit.weights * pi * fit.coefficients))
        if sample is None:
            return gamma, None
        infl = npiv_tikhonov_influence(fit, sample, pi)
    return gamma, infl.norm / np.sqrt(sample.n)
