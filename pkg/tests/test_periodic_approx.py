import json
import math

import numpy as np
import pytest

from cocyclab.cocycle import CocycleGenerator, HolderData
from cocyclab.lyapnorm import LyapunovNormParams
from cocyclab.oseledets import group_spectrum
from cocyclab.periodic_approx import (ERRORS_HEADER, Horizons, NoRecurrenceError,
                                      benchmark_generator, delta_budget, reference_spectrum,
                                      run_main_experiment, semicontinuity_check,
                                      verify_cone_lemmas)

DIAG = [np.diag([2.0, 1.0, 0.5]), np.diag([4.0, 0.5, 0.25])]
SMALL = Horizons(recurrence=1 << 16, reference=20_000, margin=200)


@pytest.fixture(scope="module")
def diag_gen():
    return CocycleGenerator.from_matrices(DIAG)


@pytest.fixture(scope="module")
def diag_run(diag_gen, full2, fair_coin):
    return run_main_experiment(diag_gen, full2, fair_coin, 2, k_schedule=(2, 4, 8, 16),
                               horizons=SMALL, seed=1)


def test_delta_budget_formula():
    spec = group_spectrum(np.array([1.0, 0.0, -1.0]))
    b = delta_budget(spec, 2, HolderData(1.0, 1.0), math.log(2))
    assert b.d_scale == 10 * 5 * 5
    assert b.delta0 == pytest.approx(0.9 * math.log(2) / 250)
    assert b.delta == pytest.approx(b.delta0 / 2)
    with pytest.raises(ValueError):
        delta_budget(spec, 4, HolderData(1.0), math.log(2))


def test_delta_budget_single_group():
    spec = group_spectrum(np.array([0.3, 0.3]))
    b = delta_budget(spec, 1, HolderData(1.0, 0.5), 2.0)
    assert b.min_gap == math.inf
    assert b.delta0 == pytest.approx(0.9 * 1.0 / 4)


def test_reference_spectrum_diagonal(diag_gen, full2, fair_coin):
    ref = reference_spectrum(diag_gen, full2, fair_coin, n=20_000, seed=3)
    exact = np.array([1.5 * math.log(2), -0.5 * math.log(2), -1.5 * math.log(2)])
    se = ref.spectrum.stderr
    assert np.all(np.abs(ref.gammas - exact) < 5 * se + 1e-3)
    pse, sigma = ref.partial_sum_stats()
    assert pse.shape == (3,) and np.all(sigma > 0)


def test_main_experiment_diagonal_exact_periodic(diag_run):
    assert diag_run.m == 2
    for r in diag_run.records:
        ones = sum(r.point.word)
        n = r.point.period
        # symbol 1 picks diag(4, 1/2, 1/4)
        exact = [((n - ones) * math.log(2) + ones * math.log(4)) / n,
                 (-ones * math.log(2)) / n]
        assert np.allclose(r.gammas[:2], exact, atol=1e-10)
        assert np.allclose(r.errors, r.gammas[:2] - diag_run.reference.gammas[:2])
    assert list(diag_run.n_values()) == sorted(diag_run.n_values())


def test_errors_csv_and_json(diag_run):
    lines = diag_run.errors_csv().splitlines()
    assert lines[0] == ERRORS_HEADER == "k,n_k,i,gamma_pk,gamma_mu,error"
    assert len(lines) == 1 + 4 * 2
    doc = json.loads(diag_run.to_json())
    assert doc["schema"] == "cocyclab.approximation_run/1"
    assert doc["k_schedule"] == [2, 4, 8, 16]
    assert len(doc["records"]) == 4 and doc["records"][0]["theta"] == pytest.approx(math.log(2))


def test_main_experiment_is_deterministic(diag_gen, full2, fair_coin, diag_run):
    again = run_main_experiment(diag_gen, full2, fair_coin, 2, k_schedule=(2, 4, 8, 16),
                                horizons=SMALL, seed=1)
    assert again.errors_csv() == diag_run.errors_csv()


def test_schedule_must_be_nondecreasing(diag_gen, full2, fair_coin, diag_run):
    with pytest.raises(ValueError):
        run_main_experiment(diag_gen, full2, fair_coin, 1, k_schedule=(8, 4),
                            reference=diag_run.reference)


def test_no_recurrence_raises(diag_gen, full2, fair_coin, diag_run):
    with pytest.raises(NoRecurrenceError):
        run_main_experiment(diag_gen, full2, fair_coin, 1, k_schedule=(64,),
                            horizons=Horizons(recurrence=100, reference=1000, margin=10),
                            reference=diag_run.reference)


def test_semicontinuity_fixed_tolerance(diag_run):
    rep = semicontinuity_check(diag_run, tol=10.0)
    assert rep.hard_violations == 0
    assert rep.checked.tolist() == [False, False, True, True]
    strict = semicontinuity_check(diag_run, tol=-10.0)
    assert strict.hard_violations == 2 * 2


def test_cone_lemmas_diagonal(diag_gen, diag_run):
    spec = diag_run.reference.spectrum
    params = LyapunovNormParams.default(spec, 1, 0.05, window="absolute")
    rep = verify_cone_lemmas(diag_gen, diag_run, 1, params, samples=500, seed=0)
    assert rep.checked == 500
    assert rep.invariance_violations == 0


def test_benchmark_generator_positive_and_seeded():
    g = benchmark_generator()
    mats = [g.table[(s,)] for s in range(2)]
    assert all(np.all((M > 0.5) & (M < 1.5)) for M in mats)
    assert np.array_equal(benchmark_generator().table[(0,)], mats[0])
    assert not np.array_equal(benchmark_generator(seed=1).table[(0,)], mats[0])
