import math

import numpy as np
import pytest

from cocyclab.applications import (BudgetError, ConjugacyData, DichotomyData, GrowthBracket,
                                   certify_uniform_hyperbolicity, conjugacy_invariance_check,
                                   growth_vs_periodic_radius, lambda_periodic_proxy,
                                   running_max_report, sacker_sell_estimate, similarity_conjugate,
                                   spectral_radius_along_orbit)
from cocyclab.cocycle import CocycleGenerator
from cocyclab.symbolic import ShiftSpace, sample_orbit

SHEAR = [np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 1.0]])]
P_STABLE = np.diag([0.0, 1.0])


def test_bracket_small_brute_force_matches_pruned(full2):
    gen = CocycleGenerator.from_matrices(SHEAR)
    up, lo = growth_vs_periodic_radius(gen, full2, 10, 2, prune=False)
    up2, lo2 = growth_vs_periodic_radius(gen, full2, 10, 2, budget=64, prune=True)
    assert np.allclose(up, up2, rtol=1e-12)
    assert lo == lo2 == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-12)
    assert all(u >= lo - 1e-12 for u in up)


def test_bracket_budget_error_without_pruning(full2):
    gen = CocycleGenerator.from_matrices(SHEAR)
    with pytest.raises(BudgetError):
        growth_vs_periodic_radius(gen, full2, 12, 2, budget=100, prune=False)


def test_bracket_brute_force_oracle(full2):
    rng = np.random.default_rng(3)
    gen = CocycleGenerator.from_matrices([rng.standard_normal((2, 2)) for _ in range(2)])
    up, _ = growth_vs_periodic_radius(gen, full2, 6, 3, prune=False)
    best = 0.0
    for code in range(2 ** 6):
        M = np.eye(2)
        for t in range(6):
            M = gen.table[((code >> t) & 1,)] @ M
        best = max(best, np.linalg.norm(M, 2))
    assert up[5] == pytest.approx(best ** (1 / 6), rel=1e-12)


def test_growth_bracket_csv():
    text = GrowthBracket(np.array([1, 2]), np.array([2.0, 1.5]), 1.2).to_csv()
    assert text.splitlines()[0] == "n,upper,lower"
    assert text.splitlines()[2] == "2,1.5,1.2"


def test_certificate_constant_hyperbolic(full2):
    gen = CocycleGenerator.constant(np.diag([2.0, 0.5]), 2)
    cert = certify_uniform_hyperbolicity(gen, full2, DichotomyData.constant(P_STABLE, 2), 0.1, 8)
    assert cert.verdict == "certified"
    assert cert.delta_margin == pytest.approx(math.log(2), abs=1e-10)
    assert lambda_periodic_proxy(gen, full2, DichotomyData.constant(P_STABLE, 2), 6) \
        == pytest.approx(-math.log(2))


def test_certificate_identity_refuted(full2):
    gen = CocycleGenerator.constant(np.eye(2), 2)
    cert = certify_uniform_hyperbolicity(gen, full2, DichotomyData.constant(P_STABLE, 2), 0.1, 8)
    assert cert.verdict == "refuted"


def test_certificate_wrong_projection_inconclusive(full2):
    gen = CocycleGenerator.constant(np.array([[2.0, 1.0], [0.0, 0.5]]), 2)
    # span(e2) is not invariant, but the periodic split is still hyperbolic
    cert = certify_uniform_hyperbolicity(gen, full2, DichotomyData.constant(P_STABLE, 2), 0.1, 4)
    assert cert.verdict == "inconclusive"
    assert cert.equivariance_residual > 1e-3


def test_dichotomy_rejects_non_projection():
    with pytest.raises(ValueError):
        DichotomyData.constant(np.array([[1.0, 0.0], [0.0, 2.0]]), 2)


def test_sacker_sell_diag31(full2):
    gen = CocycleGenerator.constant(np.diag([3.0, 1.0]), 2)
    rep = sacker_sell_estimate(gen, full2, 8, 0.1)
    assert len(rep.intervals) == 2
    (a1, b1), (a2, b2) = rep.intervals
    assert abs(a1 - math.log(3)) < 1e-12 and abs(b1 - math.log(3)) < 1e-12
    assert abs(a2) < 1e-12 and abs(b2) < 1e-12
    assert rep.to_csv().splitlines()[0] == "a_i,b_i,support_count"


def test_sacker_sell_scalar_cocycle_fills_interval(full2):
    gen = CocycleGenerator.from_matrices([[[2.0]], [[0.5]]])
    rep = sacker_sell_estimate(gen, full2, 12, 0.2)
    assert len(rep.intervals) == 1
    a, b = rep.intervals[0]
    assert a == pytest.approx(-math.log(2)) and b == pytest.approx(math.log(2))


def test_conjugacy_invariance_and_negative_control(full2):
    rng = np.random.default_rng(0)
    gen = CocycleGenerator.from_matrices([np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])])
    L = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
    conj = similarity_conjugate(gen, L)
    rep = conjugacy_invariance_check(gen, conj, ConjugacyData(lambda w: w, {(): L}), 8)
    assert rep.max_deviation < 1e-8 and not rep.flagged and rep.commutes
    swap = conjugacy_invariance_check(gen, conj, ConjugacyData(lambda w: tuple(1 - s for s in w)), 8)
    assert swap.flagged


def test_running_max_of_spectral_radii(benchmark, full2, fair_coin):
    x = sample_orbit(full2, fair_coin, 0, 400, 1)
    vals = spectral_radius_along_orbit(benchmark, x, [10, 50, 200])
    rep = running_max_report(vals, 1.17)
    assert len(rep) == 3
