import math

import numpy as np
import pytest

from cocyclab.cocycle import CocycleGenerator
from cocyclab.oseledets import (SPECTRUM_HEADER, group_spectrum, lyapunov_spectrum, orbit_frames,
                                periodic_exponents, periodic_spectrum, singular_exponents,
                                spectrum_csv_rows)
from cocyclab.symbolic import BaseMeasure, PeriodicPoint, ShiftSpace, sample_orbit


def test_diagonal_cocycle_exponents(full2, fair_coin):
    gen = CocycleGenerator.from_matrices([np.diag([3.0, 1.0, 0.5]), np.diag([1.0, 2.0, 0.5])])
    x = sample_orbit(full2, fair_coin, 0, 50_000, 1)
    g = singular_exponents(gen, x, 50_000)
    freq = np.mean(x.window(0, 49_999) == 0)
    exact = sorted([freq * math.log(3), (1 - freq) * math.log(2), math.log(0.5)], reverse=True)
    assert np.allclose(g, exact, atol=1e-9)


def test_stride_independence(benchmark, full2, fair_coin):
    x = sample_orbit(full2, fair_coin, 0, 20_000, 2)
    a = singular_exponents(benchmark, x, 20_000, stride=10)
    b = singular_exponents(benchmark, x, 20_000, stride=50)
    assert np.allclose(a, b, atol=1e-10)


def test_singular_cocycle_floors_dead_direction(full2, fair_coin):
    gen = CocycleGenerator.from_matrices([np.array([[2.0, 1.0], [0.0, 0.0]]),
                                          np.array([[1.0, 0.0], [1.0, 0.0]])])
    x = sample_orbit(full2, fair_coin, 0, 2000, 3)
    g = singular_exponents(gen, x, 2000)
    assert np.isfinite(g[0]) and g[1] <= -1e8


def test_grouping_multiplicities():
    spec = group_spectrum([0.7, 0.7 - 1e-9, -0.2, -1.0 + 1e-9, -1.0], grouping_gap=1e-6)
    assert spec.multiplicities == (2, 1, 2)
    assert np.allclose(spec.lambdas, [0.7, -0.2, -1.0], atol=1e-8)
    assert spec.count(2) == 3
    assert -1.0 < spec.lambda_tilde(2) < -0.2


def test_periodic_exponents_match_eigenvalues(benchmark):
    word = (0, 1, 1, 0, 1)
    M = np.eye(3)
    for s in word:
        M = benchmark.table[(s,)] @ M
    exact = np.sort(np.log(np.abs(np.linalg.eigvals(M))))[::-1] / len(word)
    assert np.allclose(periodic_exponents(benchmark, word), exact, atol=1e-10)


def test_periodic_spectrum_rotation_invariant(benchmark):
    p, _ = PeriodicPoint.from_word((0, 0, 1, 0, 1, 1))
    base, frame = periodic_spectrum(benchmark, p)
    for c in range(1, p.period):
        rot = p.rotation(c)
        assert np.allclose(periodic_exponents(benchmark, rot), base.gammas, atol=1e-10)
    # the frame is equivariant around the cycle
    assert frame.orbit.equivariance_residual() < 1e-9


def test_periodic_frame_blocks_are_invariant():
    rng = np.random.default_rng(0)
    P = rng.standard_normal((3, 3))
    M = P @ np.diag([2.0, -0.7, 0.3]) @ np.linalg.inv(P)
    gen = CocycleGenerator.constant(M, 1)
    spec, frame = periodic_spectrum(gen, PeriodicPoint((0,)))
    assert np.allclose(spec.gammas, np.log([2.0, 0.7, 0.3]), atol=1e-10)
    for B in frame.E_bases:
        # M B stays in span B
        coef = np.linalg.lstsq(B, M @ B, rcond=None)[0]
        assert np.allclose(B @ coef, M @ B, atol=1e-9)


def test_orbit_frames_equivariance(benchmark, full2, fair_coin):
    x = sample_orbit(full2, fair_coin, 400, 1000, 5)
    spec = lyapunov_spectrum(benchmark, x, 1000)
    orb = orbit_frames(benchmark, x, spec, 2, -5, 20, depth=300)
    assert orb.equivariance_residual() < 1e-8


def test_spectrum_csv_schema():
    spec = group_spectrum([0.5, -0.5])
    rows = spectrum_csv_rows(spec, "orbit", 7)
    assert SPECTRUM_HEADER == "source,word_or_seed,i,gamma,lambda_group,multiplicity"
    assert rows[0].split(",")[:3] == ["orbit", "7", "1"]
    assert len(rows) == 2
