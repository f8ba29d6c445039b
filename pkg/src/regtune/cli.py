# Command-line entry point: run experiments from flat key=value config files,
# list designs, run the quick self-test suite, and render report figures.

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, DiscreteLaw, DomainError, EmpiricalSample, \
    bl_distance, w1_distance
from .harness import (DESIGNS, ExperimentConfig, default_params,
                      run_experiment)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def parse_config(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; no nesting."""
    cfg = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key] = val
    return cfg


def _coerce(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    return val


def _config_from_file(path: str, out_override=None, seed_override=None
                      ) -> ExperimentConfig:
    raw = parse_config(path)
    try:
        design = raw.pop("design")
        n_list = tuple(int(s) for s in raw.pop("n_list").split(","))
        replications = int(raw.pop("replications"))
        seed = int(raw.pop("seed"))
    except KeyError as exc:
        raise ConfigError(f"missing required config key {exc}")
    out = raw.pop("out", "results")
    if out_override:
        out = out_override
    if seed_override is not None:
        seed = seed_override
    params = {k: _coerce(v) for k, v in raw.items()}
    known = default_params(design)
    for key in params:
        if key not in known:
            raise ConfigError(f"unknown parameter {key!r} for design {design!r}")
    return ExperimentConfig(design=design, n_list=n_list,
                            replications=replications, seed=seed, out=out,
                            params=params)


def _selftest() -> int:
    """Exercise the closed-form examples each module guarantees."""
    checks = []
    d0 = DiscreteLaw.point_mass(0.0)
    d1 = DiscreteLaw.point_mass(1.0)
    d5 = DiscreteLaw.point_mass(5.0)
    checks.append(("bl(d0,d0)=0", abs(bl_distance(d0, d0)) < 1e-9))
    checks.append(("bl(d0,d1)=1", abs(bl_distance(d0, d1) - 1.0) < 1e-9))
    checks.append(("bl(d0,d5)=2", abs(bl_distance(d0, d5) - 2.0) < 1e-9))
    checks.append(("w1(d0,d1)=1", abs(w1_distance(d0, d1) - 1.0) < 1e-9))
    u02 = DiscreteLaw(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
    checks.append(("w1(u{0,2},d1)=1", abs(w1_distance(u02, d1) - 1.0) < 1e-9))

    from .isd import KernelSpec, isd_estimate
    s = EmpiricalSample(np.array([0.0, 0.0]))
    val = isd_estimate(KernelSpec(base="gaussian", lam=0), 1.0, s)
    checks.append(("isd double-sum at 0", abs(val - 1.0 / np.sqrt(2 * np.pi)) < 1e-9))

    from .bootkn import boot_statistic
    checks.append(("boot stat identical means", boot_statistic(2.0, 2.0, 9) == 0.0))
    checks.append(("boot stat clipped", boot_statistic(-1.0, -2.0, 4) == 0.0))
    checks.append(("boot stat arithmetic", abs(boot_statistic(1.0, 0.5, 4) - 1.0) < 1e-12))

    from .mest import LossSpec, mest_fit
    from .npiv import SieveBasis
    rng = np.random.default_rng(7)
    y = rng.standard_normal(50)
    x = rng.uniform(0, 1, 50)
    fit = mest_fit(EmpiricalSample(np.column_stack([y, x])),
                   SieveBasis(family="cosine", J=1, L=1), LossSpec("squared"))
    checks.append(("constant-basis fit = mean", abs(fit.coefficients[0] - y.mean()) < 1e-9))

    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"[{'ok' if ok else 'FAIL'}] {name}")
    if failed:
        print(f"{len(failed)} selftest check(s) failed", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"all {len(checks)} selftest checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="regtune",
        description="Tuning-indexed regularized estimators: data-driven "
                    "selection, influence-based standardization and Monte "
                    "Carlo experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config_pos", nargs="?", help="config file path")
    p_run.add_argument("--config", dest="config_flag", help="config file path")
    p_run.add_argument("--out", help="output directory override")
    p_run.add_argument("--threads", type=int, default=0,
                       help="worker processes (0 = serial)")
    p_run.add_argument("--seed", type=int, help="seed override")

    sub.add_parser("list-designs", help="list available simulation designs")
    sub.add_parser("selftest", help="run the quick closed-form example suite")

    p_rep = sub.add_parser("report", help="render figures from a results directory")
    p_rep.add_argument("--out", required=True, help="results directory")

    args = parser.parse_args(argv)

    try:
        if args.verb == "list-designs":
            for name in sorted(DESIGNS):
                print(name)
            return EXIT_OK
        if args.verb == "selftest":
            return _selftest()
        if args.verb == "run":
            path = args.config_flag or args.config_pos
            if not path:
                raise ConfigError("run needs a config file (positional or --config)")
            cfg = _config_from_file(path, out_override=args.out,
                                    seed_override=args.seed)
            result = run_experiment(cfg, threads=args.threads)
            slope = result.summary.get("rate_slope")
            print(f"wrote {cfg.out}/records.csv ({len(result.records)} records)")
            if slope is not None:
                print(f"log-log rate slope: {slope:.4f}")
            return EXIT_OK
        if args.verb == "report":
            from .plots import render_report
            try:
                paths = render_report(args.out)
            except OSError as exc:
                print(f"report I/O failure: {exc}", file=sys.stderr)
                return EXIT_IO
            for p in paths:
                print(f"wrote {p}")
            return EXIT_OK
        raise ConfigError(f"unknown verb {args.verb!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
