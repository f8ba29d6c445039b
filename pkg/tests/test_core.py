import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regtune.core import (ConfigError, DiscreteLaw, DomainError,
                          EmpiricalSample, FunctionOnGrid, RateEnvelope,
                          ScalarValue, TuningGrid, bl_distance,
                          bl_distance_bruteforce, empirical_measure, hash64,
                          make_rng, parameter_distance, w1_distance)


# ---------- data carriers ----------

def test_sample_shapes_and_invariants():
    s = EmpiricalSample(np.array([1.0, 2.0, 3.0]))
    assert s.n == 3 and s.d == 1
    s2 = EmpiricalSample(np.zeros((4, 2)))
    assert s2.n == 4 and s2.d == 2
    with pytest.raises(DomainError):
        EmpiricalSample(np.zeros((0, 1)))


def test_tuning_grid_validation():
    g = TuningGrid(np.array([1.0, 2.0, 4.0]))
    assert len(g) == 3 and g.min == 1.0 and g.max == 4.0
    with pytest.raises(ConfigError):
        TuningGrid(np.array([2.0, 1.0]))
    with pytest.raises(ConfigError):
        TuningGrid(np.array([0.0, 1.0]))
    with pytest.raises(ConfigError):
        TuningGrid(np.array([]))


def test_discrete_law_merges_duplicates_and_sorts():
    law = DiscreteLaw(np.array([2.0, 1.0, 2.0]), np.array([0.25, 0.5, 0.25]))
    assert np.allclose(law.support, [1.0, 2.0])
    assert np.allclose(law.probs, [0.5, 0.5])
    with pytest.raises(DomainError):
        DiscreteLaw(np.array([0.0]), np.array([0.5]))


def test_rate_envelope_monotonicity_check():
    g = TuningGrid(np.array([1.0, 2.0, 4.0]))
    good = RateEnvelope(sampling=lambda k, n: k / n, bias=lambda k: 1.0 / k)
    good.check_monotone(g, 100)
    bad = RateEnvelope(sampling=lambda k, n: -k, bias=lambda k: 1.0 / k)
    with pytest.raises(ConfigError):
        bad.check_monotone(g, 100)
    bad2 = RateEnvelope(sampling=lambda k, n: k, bias=lambda k: k)
    with pytest.raises(ConfigError):
        bad2.check_monotone(g, 100)


def test_empirical_measure_examples():
    law = empirical_measure(EmpiricalSample(np.array([0.0, 0.0, 1.0])))
    assert np.allclose(law.support, [0.0, 1.0])
    assert np.allclose(law.probs, [2.0 / 3.0, 1.0 / 3.0])
    law5 = empirical_measure(EmpiricalSample(np.array([5.0])))
    assert np.allclose(law5.support, [5.0]) and np.allclose(law5.probs, [1.0])
    lawu = empirical_measure(EmpiricalSample(np.array([1.0, 2.0, 3.0])))
    assert np.allclose(lawu.probs, 1.0 / 3.0)


def test_parameter_distance_variants():
    assert parameter_distance(ScalarValue(1.0), ScalarValue(3.5)) == 2.5
    g = np.linspace(0, 1, 5)
    f1 = FunctionOnGrid(g, np.zeros(5))
    f2 = FunctionOnGrid(g, np.array([0.0, 1.0, -2.0, 0.0, 0.5]))
    assert parameter_distance(f1, f2) == 2.0
    with pytest.raises(DomainError):
        parameter_distance(ScalarValue(0.0), f1)


# ---------- seeding ----------

def test_hash64_is_stable_and_sensitive():
    a = hash64("m", 1, "x")
    assert a == hash64("m", 1, "x")
    assert a != hash64("m", 2, "x")
    assert 0 <= a < 2**64


def test_make_rng_reproducible():
    assert np.allclose(make_rng(42).standard_normal(5),
                       make_rng(42).standard_normal(5))


# ---------- metric examples ----------

def _pm(x):
    return DiscreteLaw.point_mass(x)


def test_bl_point_mass_examples():
    assert bl_distance(_pm(0.0), _pm(0.0)) == pytest.approx(0.0, abs=1e-12)
    # Lipschitz bound binds at distance 1
    assert bl_distance(_pm(0.0), _pm(1.0)) == pytest.approx(1.0, abs=1e-9)
    # sup-norm bound binds at distance 5
    assert bl_distance(_pm(0.0), _pm(5.0)) == pytest.approx(2.0, abs=1e-9)


def test_w1_examples():
    assert w1_distance(_pm(0.0), _pm(1.0)) == pytest.approx(1.0, abs=1e-12)
    u = DiscreteLaw(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
    assert w1_distance(u, _pm(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert w1_distance(u, u) == 0.0


def _random_law(rng, max_support=8, scale=3.0):
    m = int(rng.integers(1, max_support))
    return DiscreteLaw(rng.normal(size=m) * scale, rng.dirichlet(np.ones(m)))


def test_metric_oracles_small_instances():
    # acceptance criterion backbone: LP, DP and brute force agree to 1e-9
    rng = np.random.default_rng(20240824)
    for _ in range(200):
        p, q = _random_law(rng), _random_law(rng)
        brute = bl_distance_bruteforce(p, q)
        assert bl_distance(p, q, method="lp") == pytest.approx(brute, abs=1e-9)
        assert bl_distance(p, q, method="dp") == pytest.approx(brute, abs=1e-9)
        w_scipy = _w1_reference(p, q)
        assert w1_distance(p, q) == pytest.approx(w_scipy, abs=1e-9)


def _w1_reference(p, q):
    from scipy.stats import wasserstein_distance
    return wasserstein_distance(p.support, q.support, p.probs, q.probs)


def test_lp_dp_agree_on_larger_supports():
    rng = np.random.default_rng(5)
    for m in (500, 2500):
        p = DiscreteLaw(rng.normal(size=m), np.full(m, 1.0 / m))
        q = DiscreteLaw(rng.normal(size=m) + 0.3, np.full(m, 1.0 / m))
        assert bl_distance(p, q, method="dp") == pytest.approx(
            bl_distance(p, q, method="lp"), abs=1e-9)


# ---------- metric properties ----------

law_strategy = st.builds(
    lambda xs, seed: DiscreteLaw(
        np.asarray(xs), np.random.default_rng(seed).dirichlet(np.ones(len(xs)))),
    st.lists(st.floats(-50, 50), min_size=1, max_size=6, unique=True),
    st.integers(0, 10**6),
)


@settings(max_examples=150, deadline=None)
@given(law_strategy, law_strategy)
def test_bl_bounded_by_w1_and_two(p, q):
    bl = bl_distance(p, q)
    assert bl <= min(w1_distance(p, q), 2.0) + 1e-9
    assert bl >= -1e-12


@settings(max_examples=100, deadline=None)
@given(law_strategy, law_strategy)
def test_metrics_symmetric(p, q):
    assert bl_distance(p, q) == pytest.approx(bl_distance(q, p), abs=1e-9)
    assert w1_distance(p, q) == pytest.approx(w1_distance(q, p), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(law_strategy, law_strategy, law_strategy)
def test_metrics_triangle_inequality(p, q, r):
    assert bl_distance(p, q) <= bl_distance(p, r) + bl_distance(r, q) + 1e-9
    assert w1_distance(p, q) <= w1_distance(p, r) + w1_distance(r, q) + 1e-9


@settings(max_examples=60, deadline=None)
@given(law_strategy)
def test_metrics_vanish_on_identical(p):
    assert bl_distance(p, p) == pytest.approx(0.0, abs=1e-9)
    assert w1_distance(p, p) == pytest.approx(0.0, abs=1e-12)
