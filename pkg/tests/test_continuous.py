import itertools
import math

import numpy as np
import pytest
from conftest import random_contributions
from hypothesis import given, settings
from hypothesis import strategies as st

from varsns.continuous import (
    MultilinearExtension,
    SamplerConfig,
    continuous_greedy,
    continuous_select,
    estimate_F,
    estimate_gradient,
    estimate_hessian_entry,
    exact_F,
    exact_hessian_entry,
    gradient_samples,
    pipage_round,
    sample_set,
)
from varsns.errors import ConfigError
from varsns.greedy import brute_force_optimum, greedy_select
from varsns.metrics import Metric, MetricFunction
from varsns.variational import GramianContributions


def modular(weights):
    n = len(weights)
    c = GramianContributions({j: np.diag([weights[j] if i == j else 0.0 for i in range(n)]) for j in range(n)})
    return MetricFunction(Metric.trace(), c)


def explicit_F(f, x):
    # Independent oracle: sum over subsets written out with itertools.
    n = len(x)
    total = 0.0
    for bits in itertools.product([0, 1], repeat=n):
        p = 1.0
        for xi, b in zip(x, bits):
            p *= xi if b else 1.0 - xi
        total += p * f(frozenset(i for i in range(n) if bits[i]))
    return total


def test_exact_F_at_vertices(rng):
    f = MetricFunction(Metric.logdet(), random_contributions(rng, 4, 5))
    for bits in itertools.product([0.0, 1.0], repeat=5):
        S = frozenset(i for i in range(5) if bits[i])
        assert exact_F(f, np.array(bits)) == f(S)


def test_exact_F_matches_explicit_sum(rng):
    f = MetricFunction(Metric.rank(), random_contributions(rng, 3, 4, max_rank=1))
    for _ in range(5):
        x = rng.random(4)
        assert exact_F(f, x) == pytest.approx(explicit_F(f, x), rel=1e-12)


def test_modular_extension_is_linear():
    w = [1.0, 0.5, 2.0, 0.25]
    f = modular(w)
    x = np.array([0.2, 0.9, 0.5, 0.0])
    assert exact_F(f, x) == pytest.approx(float(np.dot(w, x)), rel=1e-14)


def test_modular_gradient_samples_are_exact():
    w = [1.0, 0.5, 2.0, 0.25, 3.0]
    f = modular(w)
    samples = gradient_samples(f, np.full(5, 0.4), SamplerConfig(16, 3))
    assert np.all(samples == np.array(w))


def test_gradient_converges_to_exact(rng):
    f = MetricFunction(Metric.logdet(), random_contributions(rng, 3, 5))
    ext = MultilinearExtension(f)
    x = rng.random(5)
    exact = []
    for s in range(5):
        hi, lo = x.copy(), x.copy()
        hi[s], lo[s] = 1.0, 0.0
        exact.append(ext(hi) - ext(lo))
    samples = gradient_samples(f, x, SamplerConfig(2000, 1))
    stderr = samples.std(axis=0) / math.sqrt(2000)
    assert np.all(np.abs(samples.mean(axis=0) - exact) <= 5 * stderr + 1e-12)


def test_sampled_F_reproducible_and_unbiased(rng):
    f = MetricFunction(Metric.logdet(), random_contributions(rng, 3, 6))
    x = rng.random(6)
    cfg = SamplerConfig(4000, 11)
    assert estimate_F(f, x, cfg) == estimate_F(f, x, cfg)
    vals = [f(frozenset(sample_set(x, i, 11))) for i in range(4000)]
    assert estimate_F(f, x, cfg) == pytest.approx(np.mean(vals), rel=1e-12)
    assert abs(np.mean(vals) - exact_F(f, x)) <= 5 * np.std(vals) / math.sqrt(4000)


def test_sample_sets_depend_only_on_index():
    x = np.full(8, 0.5)
    forward = [sample_set(x, i, 5) for i in range(10)]
    backward = [sample_set(x, i, 5) for i in reversed(range(10))][::-1]
    assert forward == backward
    assert sample_set(np.zeros(8), 3, 5) == frozenset()
    assert sample_set(np.ones(8), 3, 5) == frozenset(range(8))


def test_hessian_entries_nonpositive_for_submodular(rng):
    f = MetricFunction(Metric.logdet(), random_contributions(rng, 3, 5))
    x = rng.random(5)
    for a, b in [(0, 1), (2, 4), (1, 3)]:
        exact = exact_hessian_entry(f, x, a, b)
        assert exact <= 1e-9
        est = estimate_hessian_entry(f, x, a, b, SamplerConfig(3000, 2))
        assert est == pytest.approx(exact, abs=0.15 * abs(exact) + 0.05)
    assert exact_hessian_entry(modular([1.0, 2.0, 3.0]), np.full(3, 0.5), 0, 2) == 0.0
    with pytest.raises(ConfigError):
        exact_hessian_entry(f, x, 1, 1)


def test_continuous_greedy_point_lies_in_polytope(rng):
    f = MetricFunction(Metric.logdet(), random_contributions(rng, 4, 7))
    pt = continuous_greedy(f, None, 3, SamplerConfig(32, 0))
    assert pt.x.sum() == pytest.approx(3.0)
    assert np.all((pt.x >= 0) & (pt.x <= 1))
    np.testing.assert_array_equal(pt.x * 3, np.round(pt.x * 3))
    assert len(pt.history) == 3


def test_pipage_never_decreases_F(rng):
    for _ in range(10):
        f = MetricFunction(Metric.logdet(), random_contributions(rng, 3, 6))
        ext = MultilinearExtension(f)
        r = int(rng.integers(1, 6))
        x = rng.random(6)
        x *= r / x.sum()
        if np.any(x > 1):
            continue
        steps = []
        support = pipage_round(ext, x, r, steps)
        assert len(support) == r
        assert f(frozenset(support)) >= ext(x) - 1e-9
        values = [s["value"] for s in steps]
        assert all(b >= a - 1e-9 for a, b in zip([ext(x)] + values, values))


def test_pipage_input_validation():
    F = lambda y: 0.0  # noqa: E731
    with pytest.raises(ConfigError):
        pipage_round(F, np.array([0.5, 0.4]), 1)
    with pytest.raises(ConfigError):
        pipage_round(F, np.array([1.5, -0.5]), 1)
    assert pipage_round(F, np.array([0.0, 1.0, 1.0]), 2) == [1, 2]


def test_trace_selection_matches_greedy():
    w = [0.5, 3.0, 1.0, 2.0, 0.25, 1.5]
    f = modular(w)
    res = continuous_select(Metric.trace(), f.contrib, 3, SamplerConfig(8, 0))
    assert res.selected == sorted(greedy_select(Metric.trace(), f.contrib, 3).selected) == [1, 3, 5]


def test_selection_audit_and_determinism(rng):
    c = random_contributions(rng, 4, 7)
    a = continuous_select(Metric.logdet(), c, 3, SamplerConfig(16, 7))
    b = continuous_select(Metric.logdet(), c, 3, SamplerConfig(16, 7))
    assert a.to_json() == b.to_json()
    doc = a.to_dict()
    assert doc["seed"] == 7 and doc["samples"] == 16 and doc["exact_f"] is True
    assert a.objective >= doc["fractional_value"] - 1e-9
    sampled = continuous_select(Metric.logdet(), c, 3, SamplerConfig(16, 7), exact_f=False)
    assert sampled.to_dict()["exact_f"] is False and len(sampled.selected) == 3


@pytest.mark.parametrize("kwargs", [{"samples_K": 0}, {"seed": -1}, {"samples_K": 2.0}])
def test_sampler_validation(kwargs):
    with pytest.raises(ConfigError):
        SamplerConfig(**kwargs)


def test_exact_extension_size_limit():
    with pytest.raises(ConfigError):
        MultilinearExtension(lambda S: 0.0, list(range(21)))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 4))
def test_continuous_meets_bound(seed, r):
    c = random_contributions(np.random.default_rng(seed), 4, 7, max_rank=2)
    res = continuous_select(Metric.logdet(), c, r, SamplerConfig(64, seed % 1000))
    _, best = brute_force_optimum(Metric.logdet(), c, r)
    assert res.objective >= (1 - 1 / math.e - 0.05) * best
