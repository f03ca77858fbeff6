import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclab.cocycle import (CocycleGenerator, derive_seed, holder_constants, lambda_mu_estimate,
                              product)
from cocyclab.symbolic import BaseMeasure, ShiftSpace, sample_orbit


def radius_one_generator(d=2, k=2, seed=0):
    rng = np.random.default_rng(seed)
    table = {w: rng.uniform(0.5, 1.5, (d, d)) for w in itertools.product(range(k), repeat=3)}
    return CocycleGenerator(table, alphabet_size=k, radius=1)


def test_radius_one_reads_centered_windows():
    gen = radius_one_generator()
    sp = ShiftSpace.full(2)
    x = sample_orbit(sp, BaseMeasure.bernoulli([0.5, 0.5]), 3, 12, 0)
    mats = gen.matrices_along(x, 2, 5)
    for t in range(5):
        key = tuple(x.window(2 + t - 1, 2 + t + 1))
        assert np.array_equal(mats[t], gen.table[key])


@given(st.integers(0, 10_000), st.integers(0, 12), st.integers(0, 12))
@settings(max_examples=60, deadline=None)
def test_cocycle_law(seed, m, n):
    gen = radius_one_generator(d=3, seed=seed % 7)
    x = sample_orbit(ShiftSpace.full(2), BaseMeasure.bernoulli([0.5, 0.5]), 2, m + n + 2, seed)
    lhs = product(gen, x, m + n)
    rhs = product(gen, x.shift(m), n) @ product(gen, x, m)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)


def test_product_of_zero_steps_is_identity():
    gen = radius_one_generator(d=4)
    x = sample_orbit(ShiftSpace.full(2), BaseMeasure.bernoulli([0.5, 0.5]), 1, 3, 0)
    assert np.array_equal(product(gen, x, 0), np.eye(4))
    with pytest.raises(ValueError):
        product(gen, x, -1)


def test_generator_text_roundtrip():
    gen = radius_one_generator(d=3, seed=4)
    again = CocycleGenerator.from_text(gen.to_text())
    assert again.radius == 1 and again.dimension == 3
    for key, M in gen.table.items():
        assert np.array_equal(again.table[key], M)


@pytest.mark.parametrize("text", [
    "radius 0\n0 1 0 0 1\n",            # missing dim
    "dim 2\nradius 0\n0 1 0 0\n",        # too few entries
    "dim 2\nradius 0\n0 1 0 0 nan\n",    # not finite
    "0 1 0 0 1\ndim 2\nradius 0\n",      # headers after data
])
def test_generator_text_errors(text):
    with pytest.raises(ValueError):
        CocycleGenerator.from_text(text)


def test_missing_window_is_reported():
    gen = CocycleGenerator({(0,): np.eye(2)}, alphabet_size=2)
    with pytest.raises(ValueError):
        gen.check_space(ShiftSpace.full(2))
    with pytest.raises(KeyError):
        gen.matrices_for_word((0, 1), cyclic=True)


def test_holder_constant_radius_zero_and_one():
    a, b = np.diag([2.0, 1.0]), np.diag([1.0, 1.0])
    g0 = CocycleGenerator.from_matrices([a, b])
    assert holder_constants(g0, ShiftSpace.full(2)).C2 == pytest.approx(1.0)
    g1 = radius_one_generator(d=2, seed=3)
    mats = list(g1.table.values())
    gap = max(np.linalg.norm(M - N, 2) for M in mats for N in mats)
    assert holder_constants(g1, ShiftSpace.full(2)).C2 == pytest.approx(2 * gap)


def test_derive_seed_splits_deterministically():
    assert derive_seed(5, 1) == derive_seed(5, 1)
    seeds = {derive_seed(5, t) for t in range(50)} | {derive_seed(6, t) for t in range(50)}
    assert len(seeds) == 100
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)


def test_lambda_mu_for_constant_cocycle():
    gen = CocycleGenerator.constant(np.array([[2.0, 1.0], [0.0, 0.5]]), 2)
    est = lambda_mu_estimate(gen, ShiftSpace.full(2), BaseMeasure.bernoulli([0.5, 0.5]),
                             n=5000, replicates=3, seed=0)
    # norm of the n-th power grows like 2^n up to a bounded factor
    assert abs(est.lambda_mu - math.log(2.0)) < 1e-3
    assert est.quasi_compact and est.kappa_mu == -math.inf


def test_lambda_mu_nilpotent_floors_to_minus_infinity():
    gen = CocycleGenerator.constant(np.array([[0.0, 1.0], [0.0, 0.0]]), 2)
    with pytest.warns(RuntimeWarning):
        est = lambda_mu_estimate(gen, ShiftSpace.full(2), BaseMeasure.bernoulli([0.5, 0.5]),
                                 n=200, replicates=2, seed=0)
    assert est.lambda_mu == -math.inf and est.degenerate


def test_safe_stride_shrinks_for_ill_conditioned_entries():
    gen = CocycleGenerator.constant(np.diag([math.e ** 3, 1.0]), 2)
    assert gen.safe_stride(50) == 6
    assert CocycleGenerator.constant(np.eye(2), 2).safe_stride(50) == 50
