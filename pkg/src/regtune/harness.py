# Experiment orchestration: simulation designs, Monte Carlo replication loops
# with splittable seeding, deterministic parallel execution, and CSV/JSON
# result emission.

from __future__ import annotations

import csv
import functools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import norm

from .bootkn import boot_envelopes, boot_law, boot_select, true_boundary_law
from .core import (ConfigError, DiscreteLaw, EmpiricalSample, ScalarValue,
                   TuningGrid, bl_distance, hash64, make_rng)
from .isd import (IsdFamily, KernelSpec, gine_nickl_grid, isd_envelopes,
                  isd_estimate, isd_influence)
from .mest import LossSpec, mest_fit, mest_influence, mest_uniform_band
from .npiv import (SieveBasis, npiv_functional, npiv_sieve_fit,
                   npiv_tikhonov_fit)
from .selector import lepski_select_gal, oracle_select

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "DESIGNS",
    "default_params",
    "run_experiment",
    "emit_plotdata",
    "run_cell",
]

RECORD_FIELDS = ["design", "n", "rep", "chosen_k", "estimate", "true_value",
                 "loss", "influence_norm", "oracle_k", "oracle_loss",
                 "covered", "elapsed"]


@dataclass(frozen=True)
class ExperimentConfig:
    design: str
    n_list: tuple
    replications: int
    seed: int
    out: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        ns = tuple(int(n) for n in self.n_list)
        if len(ns) == 0 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n-list must be non-empty strictly increasing")
        object.__setattr__(self, "n_list", ns)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[dict]
    summary: dict


# =========================
# Designs
# =========================

def default_params(design: str) -> dict:
    common = {"timing": False}
    table = {
        "isd-normal": {
            "kernel_base": "gaussian", "kernel_lambda": 0,
            "leave_one_out": True, "gn_a": 2.0, "gn_delta": 0.5,
            "holder_exponent": 0.45, "holder_scale": 1.0,
        },
        "isd-holder": {
            "kernel_base": "gaussian", "kernel_lambda": 0,
            "leave_one_out": True, "gn_a": 2.0, "gn_delta": 0.5,
            "holder_exponent": 0.45, "holder_scale": 1.0,
        },
        "boot-boundary": {
            "boot_B": 800, "truelaw_sims": 20000, "third_moment": 2.0 * np.sqrt(2.0 / np.pi),
        },
        "npiv-sieve": {"npiv_L": 2, "npiv_J": 4, "noise_sd": 0.5, "copula_rho": 0.8},
        "npiv-tikhonov": {"tik_k": 12.0, "tik_lambda": 0.05, "tik_m": 101,
                          "noise_sd": 0.5, "copula_rho": 0.8},
        "mest-regression": {"mest_k": 5, "mest_alpha": 0.05, "mest_nsims": 4000,
                            "noise_sd": 0.5, "band_grid": 101},
    }
    if design not in table:
        raise ConfigError(f"unknown design {design!r}")
    out = dict(common)
    out.update(table[design])
    return out


def _blank_record(design: str, n: int, rep: int) -> dict:
    rec = {f: "" for f in RECORD_FIELDS}
    rec.update(design=design, n=n, rep=rep)
    return rec


def _isd_cell(design: str, n: int, rep: int, seed: int, params: dict) -> dict:
    rng = make_rng(seed)
    if design == "isd-normal":
        z = rng.standard_normal(n)
        true_value = 1.0 / (2.0 * np.sqrt(np.pi))
    else:
        z = rng.laplace(0.0, 1.0, size=n)
        true_value = 0.25
    sample = EmpiricalSample(z)
    kernel = KernelSpec(base=params["kernel_base"], lam=int(params["kernel_lambda"]),
                        leave_one_out=bool(params["leave_one_out"]))
    bgrid = gine_nickl_grid(n, a=float(params["gn_a"]), delta=float(params["gn_delta"]))
    envelope = isd_envelopes(n, bgrid, float(params["holder_exponent"]),
                             float(params["holder_scale"]), kernel)
    family = IsdFamily(kernel)
    ests = {float(k): isd_estimate(kernel, k, sample) for k in bgrid.values}
    sel = lepski_select_gal(family, sample, bgrid.grid, envelope, n,
                            values=[ScalarValue(ests[float(k)]) for k in bgrid.values])
    est = ests[float(sel.chosen_k)]
    ok = oracle_select(bgrid.grid, envelope, n)
    oest = ests[float(ok)]
    rec = _blank_record(design, n, rep)
    rec.update(chosen_k=sel.chosen_k, estimate=est, true_value=true_value,
               loss=abs(est - true_value),
               influence_norm=isd_influence(kernel, sel.chosen_k, sample).norm,
               oracle_k=ok, oracle_loss=abs(oest - true_value))
    return rec


@functools.lru_cache(maxsize=8)
def _true_law_cached(n: int, sims: int, seed: int) -> DiscreteLaw:
    return true_boundary_law(n, sims, seed)


def _boot_cell(design: str, n: int, rep: int, seed: int, params: dict) -> dict:
    rng = make_rng(seed)
    z = rng.standard_normal(n)
    sample = EmpiricalSample(z)
    ks = [2**j for j in range(2, int(np.log2(n)) + 1)]
    if ks[-1] != n:
        ks.append(n)
    grid = TuningGrid(np.array(ks, dtype=float), provenance="dyadic")
    B = int(params["boot_B"])
    sel = boot_select(sample, grid, B, seed,
                      third_moment_bound=float(params["third_moment"]))
    # true law of the boundary statistic is shared across replications
    true = _true_law_cached(n, int(params["truelaw_sims"]),
                            hash64("true-law", design, n))
    chosen_law = boot_law(sample, int(sel.chosen_k), B,
                          hash64("boot-law", seed, int(sel.chosen_k))).law()
    full_law = boot_law(sample, n, B, hash64("boot-law", seed, n)).law()
    ok = oracle_select(grid, boot_envelopes(n, grid, float(params["third_moment"])), n)
    oracle_law = boot_law(sample, int(ok), B, hash64("boot-law", seed, int(ok))).law()
    rec = _blank_record(design, n, rep)
    rec.update(chosen_k=sel.chosen_k,
               estimate=bl_distance(full_law, true),
               true_value=0.0,
               loss=bl_distance(chosen_law, true),
               oracle_k=ok,
               oracle_loss=bl_distance(oracle_law, true))
    return rec


def _copula_pair(rng, n: int, rho: float):
    a = rng.standard_normal(n)
    b = rho * a + np.sqrt(1.0 - rho**2) * rng.standard_normal(n)
    return norm.cdf(a), norm.cdf(b)


def _npiv_truth(w: np.ndarray) -> np.ndarray:
    return 1.0 + 0.5 * np.sqrt(2.0) * np.cos(np.pi * w)


def _npiv_cell(design: str, n: int, rep: int, seed: int, params: dict) -> dict:
    rng = make_rng(seed)
    w, x = _copula_pair(rng, n, float(params["copula_rho"]))
    y = _npiv_truth(w) + float(params["noise_sd"]) * rng.standard_normal(n)
    sample = EmpiricalSample(np.column_stack([y, w, x]))
    rec = _blank_record(design, n, rep)
    true_gamma = 1.0  # integral of the truth; the cosine term integrates to 0
    if design == "npiv-sieve":
        basis = SieveBasis(family="cosine", J=int(params["npiv_J"]),
                           L=int(params["npiv_L"]))
        fit = npiv_sieve_fit(sample, basis)
        pi = np.zeros(basis.L)
        pi[0] = 1.0
        gamma, se = npiv_functional(fit, pi, sample)
        rec.update(chosen_k=basis.L)
    else:
        m = int(params["tik_m"])
        fit = npiv_tikhonov_fit(sample, float(params["tik_k"]),
                                float(params["tik_lambda"]), m=m)
        pi = np.ones(m)
        gamma, se = npiv_functional(fit, pi, sample)
        rec.update(chosen_k=float(params["tik_k"]))
    rec.update(estimate=gamma, true_value=true_gamma,
               loss=abs(gamma - true_gamma),
               influence_norm=se * np.sqrt(n))
    return rec


_MEST_COEFS = np.array([1.0, 0.5, -0.3, 0.2, 0.1])


def _mest_cell(design: str, n: int, rep: int, seed: int, params: dict) -> dict:
    rng = make_rng(seed)
    k = int(params["mest_k"])
    basis = SieveBasis(family="cosine", J=k, L=k)
    x = rng.uniform(0.0, 1.0, size=n)
    theta = basis.endogenous(x) @ _MEST_COEFS[:k]
    y = theta + float(params["noise_sd"]) * rng.standard_normal(n)
    sample = EmpiricalSample(np.column_stack([y, x]))
    fit = mest_fit(sample, basis, LossSpec(loss="squared", lam=0.0))
    grid = np.linspace(0.0, 1.0, int(params["band_grid"]))
    band = mest_uniform_band(fit, grid, float(params["mest_alpha"]),
                             int(params["mest_nsims"]),
                             hash64("band-sims", seed), n=n)
    truth = basis.endogenous(grid) @ _MEST_COEFS[:k]
    covered = bool(np.all(np.abs(band.center - truth) <= band.halfwidth + 1e-12))
    rec = _blank_record(design, n, rep)
    rec.update(chosen_k=k, estimate=float(fit.coefficients[0]),
               true_value=float(_MEST_COEFS[0]),
               loss=float(np.max(np.abs(band.center - truth))),
               influence_norm=mest_influence(fit).norm,
               covered=int(covered))
    return rec


DESIGNS = {
    "isd-normal": _isd_cell,
    "isd-holder": _isd_cell,
    "boot-boundary": _boot_cell,
    "npiv-sieve": _npiv_cell,
    "npiv-tikhonov": _npiv_cell,
    "mest-regression": _mest_cell,
}


# =========================
# Replication loop
# =========================

def run_cell(args) -> dict:
    """One (design, n, replication) cell; module-level for process pools."""
    design, n, rep, master_seed, params = args
    seed = hash64(master_seed, design, n, rep)
    t0 = time.perf_counter()
    rec = DESIGNS[design](design, n, rep, seed, params)
    elapsed = time.perf_counter() - t0
    rec["elapsed"] = round(elapsed, 6) if params.get("timing") else 0.0
    return rec


def run_experiment(config: ExperimentConfig, threads: int = 0) -> ExperimentResult:
    """Execute the replication loop and write CSV records plus a JSON summary.

    threads = 0 runs serially; parallel runs are byte-identical because each
    cell derives its own seed from (master seed, design, n, replication).
    """
    params = default_params(config.design)
    params.update(config.params)
    cells = [(config.design, n, rep, config.seed, params)
             for n in config.n_list for rep in range(config.replications)]
    if threads and threads > 0:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_cell, cells, chunksize=4))
    else:
        records = [run_cell(c) for c in cells]
    records.sort(key=lambda r: (r["n"], r["rep"]))
    summary = summarize(config, records)
    outdir = Path(config.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "records.csv", records)
        with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IOError(f"cannot write results under {outdir}: {exc}") from exc
    result = ExperimentResult(config=config, records=records, summary=summary)
    emit_plotdata(result, outdir / "plotdata.csv")
    return result


def summarize(config: ExperimentConfig, records: List[dict]) -> dict:
    per_n = {}
    med_losses = []
    for n in config.n_list:
        losses = np.array([float(r["loss"]) for r in records if r["n"] == n])
        ks = np.array([float(r["chosen_k"]) for r in records if r["n"] == n])
        entry = {
            "loss_q10": float(np.quantile(losses, 0.10)),
            "loss_q50": float(np.quantile(losses, 0.50)),
            "loss_q90": float(np.quantile(losses, 0.90)),
            "chosen_k_median": float(np.median(ks)),
        }
        orc = [float(r["oracle_loss"]) for r in records
               if r["n"] == n and r["oracle_loss"] != ""]
        if orc:
            entry["oracle_loss_q50"] = float(np.median(orc))
        cov = [int(r["covered"]) for r in records if r["n"] == n and r["covered"] != ""]
        if cov:
            entry["coverage"] = float(np.mean(cov))
        per_n[str(n)] = entry
        med_losses.append(entry["loss_q50"])
    summary = {
        "design": config.design,
        "seed": config.seed,
        "replications": config.replications,
        "n_list": list(config.n_list),
        "per_n": per_n,
    }
    if len(config.n_list) >= 2 and all(m > 0 for m in med_losses):
        slope, stderr = _loglog_slope(np.array(config.n_list, dtype=float),
                                      np.array(med_losses))
        summary["rate_slope"] = slope
        summary["rate_slope_stderr"] = stderr
    return summary


def _loglog_slope(ns: np.ndarray, med: np.ndarray):
    lx, ly = np.log(ns), np.log(med)
    X = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ coef
    dof = max(len(lx) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(np.sqrt(cov[1, 1]))


def _write_csv(path: Path, records: List[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS,
                                quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec.get(k, "") for k in RECORD_FIELDS})


def emit_plotdata(result: ExperimentResult, path) -> None:
    """Tidy long-format quantile table: n,design,metric,q10,q50,q90."""
    rows = []
    for n in result.config.n_list:
        for metric in ("loss", "chosen_k"):
            vals = np.array([float(r[metric]) for r in result.records
                             if r["n"] == n and r[metric] != ""])
            if vals.size == 0:
                continue
            rows.append([n, result.config.design, metric,
                         float(np.quantile(vals, 0.10)),
                         float(np.quantile(vals, 0.50)),
                         float(np.quantile(vals, 0.90))])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(["n", "design", "metric", "q10", "q50", "q90"])
        for row in rows:
            writer.writerow(row)
