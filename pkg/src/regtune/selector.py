# Data-driven tuning-parameter selection: the acceptance-set correspondence,
# the minimal-element choice with rate-envelope thresholds, the undersmoothing
# variant with a drift component, and the infeasible oracle comparator.

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .core import (ConfigError, EmpiricalSample, RateEnvelope, Regularization,
                   TuningGrid)

__all__ = [
    "SelectionResult",
    "pairwise_distances",
    "acceptance_set",
    "lepski_select",
    "lepski_select_gal",
    "oracle_select",
    "straddle_diagnostic",
]


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a data-driven tuning choice."""

    chosen_k: float
    acceptance_set: Tuple[float, ...]
    test_sequence: Dict[float, float]
    diagnostics: Dict[Tuple[float, float], float]

    def __post_init__(self):
        if self.chosen_k not in self.acceptance_set:
            raise RuntimeError("chosen k must lie in the acceptance set")
        if self.chosen_k != min(self.acceptance_set):
            raise RuntimeError("chosen k must be the minimal accepted value")


def pairwise_distances(family: Regularization, sample: EmpiricalSample,
                       grid: TuningGrid,
                       seed: Optional[int] = None,
                       values: Optional[list] = None,
                       ) -> Dict[Tuple[float, float], float]:
    """Upper-triangular table of distances between per-k estimates."""
    ks = grid.values
    if values is None:
        values = [family.evaluate(k, sample, seed=seed) for k in ks]
    table: Dict[Tuple[float, float], float] = {}
    for i in range(len(ks)):
        for j in range(i + 1, len(ks)):
            table[(float(ks[i]), float(ks[j]))] = family.distance(values[i], values[j])
    return table


def acceptance_set(family: Regularization, sample: EmpiricalSample,
                   grid: TuningGrid, thresholds: Dict[float, float],
                   seed: Optional[int] = None,
                   distances: Optional[Dict[Tuple[float, float], float]] = None,
                   ) -> Tuple[float, ...]:
    """All k whose estimate is within a_{k'} of every larger-k' estimate.

    The maximal grid element is always accepted (vacuous condition).
    """
    ks = [float(k) for k in grid.values]
    for k in ks:
        if k not in thresholds:
            raise ConfigError(f"missing threshold for k={k}")
    if distances is None:
        distances = pairwise_distances(family, sample, grid, seed=seed)
    accepted = []
    for i, k in enumerate(ks):
        ok = all(distances[(k, kp)] <= thresholds[kp] for kp in ks[i + 1:])
        if ok:
            accepted.append(k)
    return tuple(accepted)


def _select(family, sample, grid, thresholds, seed=None, values=None) -> SelectionResult:
    distances = pairwise_distances(family, sample, grid, seed=seed, values=values)
    accepted = acceptance_set(family, sample, grid, thresholds,
                              seed=seed, distances=distances)
    return SelectionResult(chosen_k=min(accepted), acceptance_set=accepted,
                           test_sequence=thresholds, diagnostics=distances)


def lepski_select(family: Regularization, sample: EmpiricalSample,
                  grid: TuningGrid, envelope: RateEnvelope, n: int,
                  seed: Optional[int] = None,
                  values: Optional[list] = None) -> SelectionResult:
    """Minimal accepted k with thresholds 4 * sampling envelope at rate r_n^{-1}."""
    # sampling(k, n) is the full modulus-at-rate value delta_k(r_n^{-1});
    # the envelope owns the (slowed) rate.
    samp = np.array([envelope.sampling(k, n) for k in grid.values])
    if np.any(np.diff(samp) < -1e-12):
        raise ConfigError("sampling envelope must be non-decreasing on the grid")
    thresholds = {float(k): 4.0 * envelope.sampling(k, n) for k in grid.values}
    return _select(family, sample, grid, thresholds, seed=seed, values=values)


def lepski_select_gal(family: Regularization, sample: EmpiricalSample,
                      grid: TuningGrid, envelope: RateEnvelope, n: int,
                      seed: Optional[int] = None,
                      values: Optional[list] = None) -> SelectionResult:
    """Undersmoothing variant: thresholds 4*(delta1_k + delta2_k)/sqrt(n).

    Requires the envelope's drift component; the sampling part must be
    non-decreasing on the grid.
    """
    if envelope.drift is None:
        raise ConfigError("undersmoothing selection needs a drift envelope component")
    samp = np.array([envelope.sampling(k, n) for k in grid.values])
    if np.any(np.diff(samp) < -1e-12):
        raise ConfigError("sampling envelope must be non-decreasing on the grid")
    thresholds = {
        float(k): 4.0 * (envelope.sampling(k, n) + envelope.drift(k, n)) / np.sqrt(n)
        for k in grid.values
    }
    return _select(family, sample, grid, thresholds, seed=seed, values=values)


def oracle_select(grid: TuningGrid, envelope: RateEnvelope, n: int) -> float:
    """Infeasible balance of sampling and bias envelopes; ties toward smaller k."""
    obj = np.array([envelope.sampling(k, n) + envelope.bias(k) for k in grid.values])
    return float(grid.values[int(np.argmin(obj))])


def straddle_diagnostic(grid: TuningGrid, envelope: RateEnvelope, n: int) -> dict:
    """Check the grid straddles the sampling/bias balance point.

    Reports whether both {k: bias dominates} and {k: sampling dominates} are
    non-empty; advisory only, never enforced.
    """
    samp = np.array([envelope.sampling(k, n) for k in grid.values])
    bias = np.array([envelope.bias(k) for k in grid.values])
    lower = grid.values[bias >= samp]
    upper = grid.values[samp >= bias]
    return {
        "lower_nonempty": lower.size > 0,
        "upper_nonempty": upper.size > 0,
        "straddles": lower.size > 0 and upper.size > 0,
    }
