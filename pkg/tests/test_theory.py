import math

import numpy as np
import pytest

from rpad.errors import ConfigurationError, DataError
from rpad.theory import (
    BoundSpec,
    k_bound,
    min_k,
    random_unit_pair,
    run_distance_trials,
    run_inner_product_trials,
    verify,
)


def test_min_k_distance_example():
    assert k_bound(BoundSpec(0.5, 0.1)) == pytest.approx(4 * math.log(20) / 0.125)
    assert min_k(BoundSpec(0.5, 0.1, "distance")) == 96


def test_min_k_inner_product_example():
    assert k_bound(BoundSpec(0.5, 0.1, "inner_product")) == pytest.approx(4 * math.log(40) / 0.125)
    assert 118.0 < k_bound(BoundSpec(0.5, 0.1, "inner_product")) < 118.1
    assert min_k(BoundSpec(0.5, 0.1, "inner_product")) == 119


@pytest.mark.parametrize("eps", [0.1, 0.3, 0.5, 0.9])
@pytest.mark.parametrize("delta", [0.01, 0.05, 0.5])
def test_inner_product_threshold_dominates(eps, delta):
    assert min_k(BoundSpec(eps, delta, "inner_product")) >= min_k(BoundSpec(eps, delta, "distance"))


def test_min_k_monotone():
    eps_grid = [0.1, 0.2, 0.3, 0.5, 0.6]  # eps^2 - eps^3 increases up to 2/3
    ks = [min_k(BoundSpec(e, 0.1)) for e in eps_grid]
    assert ks == sorted(ks, reverse=True)
    ks = [min_k(BoundSpec(0.3, d)) for d in [0.01, 0.05, 0.1, 0.5]]
    assert ks == sorted(ks, reverse=True)


def test_bound_spec_validation():
    for args in ((0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 1.0)):
        with pytest.raises(ConfigurationError):
            BoundSpec(*args)
    with pytest.raises(ConfigurationError):
        BoundSpec(0.5, 0.1, "cosine")


def test_distance_violations_below_delta_at_min_k():
    a, b = random_unit_pair(32, 1)
    k = min_k(BoundSpec(0.5, 0.1))
    rep = run_distance_trials(a, b, k, 0.5, 10_000, seed=2)
    assert rep.violation_rate <= 0.1
    assert rep.violation_rate == rep.violations / rep.trials
    assert abs(rep.empirical_mean / rep.target - 1) <= 0.02


def test_distance_violations_large_for_tiny_k():
    a, b = random_unit_pair(16, 3)
    rep = run_distance_trials(a, b, 2, 0.1, 2000, seed=4)
    assert rep.violation_rate > 0.5


def test_inner_product_at_min_k():
    a, b = random_unit_pair(32, 5)
    k = min_k(BoundSpec(0.5, 0.1, "inner_product"))
    assert run_inner_product_trials(a, b, k, 0.5, 10_000, seed=6).violation_rate <= 0.1


def test_orthogonal_pair_has_zero_mean_inner_product():
    a = np.zeros(16)
    b = np.zeros(16)
    a[0], b[1] = 1.0, 1.0
    rep = run_inner_product_trials(a, b, 128, 0.5, 10_000, seed=7)
    assert abs(rep.empirical_mean) <= 0.02


def test_preconditions():
    a, b = random_unit_pair(8, 0)
    with pytest.raises(DataError):
        run_inner_product_trials(2 * a, b, 10, 0.5, 10)
    with pytest.raises(DataError):
        run_distance_trials(a, a.copy(), 10, 0.5, 10)
    with pytest.raises(ConfigurationError):
        run_distance_trials(a, b, 10, 0.5, 0)


def test_violation_rate_nonincreasing_in_k():
    a, b = random_unit_pair(16, 8)
    rates = [run_distance_trials(a, b, k, 0.3, 3000, seed=9).violation_rate for k in (8, 32, 128, 256)]
    assert all(x >= y for x, y in zip(rates, rates[1:]))


def test_verify_is_deterministic():
    r1 = verify(0.5, 0.1, 500, 16, seed=3)
    r2 = verify(0.5, 0.1, 500, 16, seed=3)
    assert {k: v.to_dict() for k, v in r1.items()} == {k: v.to_dict() for k, v in r2.items()}
    assert r1["distance"].k_used == 96 and r1["inner_product"].k_used == 119
