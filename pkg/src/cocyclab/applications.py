"""Uniform hyperbolicity, Sacker-Sell spectra, growth brackets and conjugacy checks.

Everything here is driven by periodic data: spectra of return maps over
necklaces up to a maximal period, plus brute-force (or pruned) scans of
products over cylinder words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from ._linalg import TINY, report_value, scaled_product
from .cocycle import CocycleGenerator
from .oseledets import periodic_exponents
from .symbolic import PeriodicPoint, ShiftSpace, SymbolSequence, enumerate_periodic

BRUTE_FORCE_BUDGET = 1 << 20


class BudgetError(RuntimeError):
    """A word scan would exceed the brute-force budget."""


# ---------------------------------------------------------------------------
# data types


@dataclass
class DichotomyData:
    """Projections ``P(x)`` keyed by windows of radius ``radius``.

    ``Im P`` is the contracting side, ``Ker P`` the expanding side.
    """

    projections: dict
    D: float = 1.0
    rate: float = 0.0
    radius: int = 0

    def __post_init__(self):
        clean = {}
        for key, P in self.projections.items():
            key = (int(key),) if np.isscalar(key) else tuple(int(s) for s in key)
            P = np.asarray(P, dtype=float)
            if np.abs(P @ P - P).max() > 1e-10:
                raise ValueError(f"P for window {key} is not idempotent")
            clean[key] = P
        self.projections = clean

    @classmethod
    def constant(cls, P, alphabet_size: int) -> "DichotomyData":
        return cls({(s,): P for s in range(alphabet_size)})

    def at(self, window) -> np.ndarray:
        return self.projections[tuple(int(s) for s in window)]


@dataclass(frozen=True)
class HyperbolicityCertificate:
    verdict: str                    # certified / refuted / inconclusive
    delta_margin: float
    max_period_checked: int
    equivariance_residual: float
    min_kernel_singular_value: float
    worst_word: tuple | None = None


@dataclass(frozen=True)
class SackerSellReport:
    intervals: list                 # [(a_i, b_i)] with b_1 >= a_1 > b_2 >= ...
    support_counts: list
    clustering_eps: float
    max_period: int

    def to_csv(self) -> str:
        lines = ["a_i,b_i,support_count"]
        for (a, b), c in zip(self.intervals, self.support_counts):
            lines.append(f"{a!r},{b!r},{c}")
        return "\n".join(lines) + "\n"


@dataclass
class ConjugacyData:
    """Word map ``h`` and matrices ``L`` with ``A_1(x) = L(fx)^{-1} A_2(hx) L(x)``."""

    point_map: Callable
    L: dict = field(default_factory=dict)

    def condition_numbers(self) -> dict:
        return {w: float(np.linalg.cond(M)) for w, M in self.L.items()}


# ---------------------------------------------------------------------------
# helpers


def _return_map(gen: CocycleGenerator, word) -> tuple[np.ndarray, float]:
    mats = gen.matrices_for_word(tuple(word), cyclic=True)
    return scaled_product(mats)


def _restricted_exponents(M: np.ndarray, logscale: float, basis: np.ndarray, p: int) -> np.ndarray:
    """Exponents of the return map restricted to an invariant subspace."""
    if basis.shape[1] == 0:
        return np.zeros(0)
    R = np.linalg.pinv(basis) @ M @ basis
    mods = np.abs(np.linalg.eigvals(R))
    with np.errstate(divide="ignore"):
        g = (np.log(mods) + logscale) / p
    g[mods <= TINY] = -np.inf
    return np.sort(g)[::-1]


def _windows(space: ShiftSpace, length: int) -> np.ndarray:
    return space.admissible_words(length)


# ---------------------------------------------------------------------------
# uniform hyperbolicity


def certify_uniform_hyperbolicity(gen: CocycleGenerator, space: ShiftSpace, dichotomy: DichotomyData,
                                  delta: float, max_period: int, tol: float = 1e-10
                                  ) -> HyperbolicityCertificate:
    """Check equivariance, kernel invertibility and the periodic exponent split.

    The verdict is relative to periods ``<= max_period``: refuted if some
    periodic orbit violates the ``delta`` split, inconclusive if only the
    structural checks fail, certified otherwise.
    """
    gen.check_space(space)
    rA, rP = gen.radius, dichotomy.radius
    R = max(rA, rP)
    resid = 0.0
    smin = math.inf
    for w in _windows(space, 2 * R + 2):
        A = gen.table[tuple(w[R - rA:R + rA + 1])]
        P0 = dichotomy.at(w[R - rP:R + rP + 1])
        P1 = dichotomy.at(w[R + 1 - rP:R + rP + 2])
        scale = max(np.linalg.norm(A, 2), TINY)
        resid = max(resid, float(np.linalg.norm(A @ P0 - P1 @ A, 2) / scale))
        K = null_space(P0)
        if K.shape[1]:
            sv = np.linalg.svd(A @ K, compute_uv=False)
            smin = min(smin, float(sv[-1]))
    margin = math.inf
    worst = None
    for p in enumerate_periodic(space, max_period):
        word = p.word
        per = p.period
        M, ls = _return_map(gen, word)
        r = max(rP, 0)
        ctx = tuple(word[(i % per)] for i in range(-r, r + 1))
        P = dichotomy.at(ctx)
        img = null_space(np.eye(P.shape[0]) - P)
        ker = null_space(P)
        gi = _restricted_exponents(M, ls, img, per)
        gk = _restricted_exponents(M, ls, ker, per)
        top = gi[0] if gi.size else -math.inf
        bottom = gk[-1] if gk.size else math.inf
        m = min(-top, bottom)
        if m < margin:
            margin, worst = m, word
    structural = resid <= tol and smin > 1e-10
    if margin < delta:
        verdict = "refuted"
    elif not structural:
        verdict = "inconclusive"
    else:
        verdict = "certified"
    return HyperbolicityCertificate(verdict, float(margin), int(max_period), resid,
                                    smin if smin < math.inf else math.inf, worst)


def lambda_periodic_proxy(gen: CocycleGenerator, space: ShiftSpace, projections: DichotomyData,
                          max_period: int) -> float:
    """``sup_p (1/p) log rho(A^p(p) P(p))`` over necklaces up to ``max_period``."""
    best = -math.inf
    r = projections.radius
    for p in enumerate_periodic(space, max_period):
        M, ls = _return_map(gen, p.word)
        ctx = tuple(p.word[i % p.period] for i in range(-r, r + 1))
        P = projections.at(ctx)
        rho = float(np.abs(np.linalg.eigvals(M @ P)).max())
        if rho > TINY:
            best = max(best, (math.log(rho) + ls) / p.period)
    return best


# ---------------------------------------------------------------------------
# Sacker-Sell


def periodic_exponent_cloud(gen: CocycleGenerator, space: ShiftSpace, max_period: int) -> np.ndarray:
    vals = []
    for p in enumerate_periodic(space, max_period):
        g = periodic_exponents(gen, p.word)
        vals.extend(float(v) for v in g if np.isfinite(v))
    return np.array(vals)


def sacker_sell_estimate(gen: CocycleGenerator, space: ShiftSpace, max_period: int,
                         clustering_eps: float = 0.1) -> SackerSellReport:
    """Inner estimate of the Sacker-Sell spectrum from periodic exponents.

    The finite exponents over all necklaces are split wherever consecutive
    sorted values are more than ``clustering_eps`` apart.
    """
    if max_period < 1:
        raise ValueError("max_period must be at least 1")
    cloud = np.sort(periodic_exponent_cloud(gen, space, max_period))[::-1]
    intervals, counts = [], []
    if cloud.size:
        start = 0
        for i in range(1, cloud.size + 1):
            if i == cloud.size or cloud[i - 1] - cloud[i] > clustering_eps:
                seg = cloud[start:i]
                intervals.append((float(seg.min()), float(seg.max())))
                counts.append(int(seg.size))
                start = i
    return SackerSellReport(intervals, counts, float(clustering_eps), int(max_period))


# ---------------------------------------------------------------------------
# growth vs periodic spectral radius


@dataclass
class GrowthBracket:
    n: np.ndarray
    upper: np.ndarray
    lower: float
    pruned: bool = False

    def to_csv(self) -> str:
        lines = ["n,upper,lower"]
        for n, u in zip(self.n, self.upper):
            lines.append(f"{int(n)},{float(u)!r},{self.lower!r}")
        return "\n".join(lines) + "\n"


def _word_levels(gen: CocycleGenerator, space: ShiftSpace, n_max: int, budget: int):
    """Generator of ``(n, log-norms)`` over all admissible products of length ``n``.

    Products are stored normalized with a per-word log scale.  Sending a
    boolean mask back into the generator drops the masked-out prefixes
    before the next extension.
    """
    r = gen.radius
    k = space.alphabet_size
    width = 2 * r + 1
    powers = k ** np.arange(width)[::-1]
    T = space.transitions
    base = _windows(space, width)
    mats = gen._dense[base @ powers]
    nrm = np.linalg.norm(mats, 2, axis=(1, 2))
    P = mats / np.where(nrm > 0, nrm, 1.0)[:, None, None]
    with np.errstate(divide="ignore"):
        logs = np.where(nrm > TINY, np.log(np.maximum(nrm, TINY)), -np.inf)
    tails = base[:, 1:]
    last = base[:, -1]
    n = 1
    keep = yield n, logs
    while n < n_max:
        if keep is not None:
            P, logs, tails, last = P[keep], logs[keep], tails[keep], last[keep]
        cand_w, cand_a = np.nonzero(T[last])
        if len(cand_w) > budget:
            raise BudgetError(f"{len(cand_w)} words at length {n + 1} exceed the budget {budget}; "
                              "enable pruning")
        win = np.concatenate([tails[cand_w], cand_a[:, None]], axis=1)
        A = gen._dense[win @ powers]
        Q = np.matmul(A, P[cand_w])
        sv = np.linalg.norm(Q, 2, axis=(1, 2))
        with np.errstate(divide="ignore"):
            logs = logs[cand_w] + np.log(np.maximum(sv, TINY))
        logs[sv <= TINY] = -np.inf
        P = Q / np.where(sv > 0, sv, 1.0)[:, None, None]
        tails, last = win[:, 1:], cand_a
        n += 1
        keep = yield n, logs


def growth_vs_periodic_radius(gen: CocycleGenerator, space: ShiftSpace, n_max: int,
                              max_period: int, budget: int = BRUTE_FORCE_BUDGET,
                              prune: bool = True) -> tuple[list, float]:
    """``upper[n-1] = max_w ||A_w||^{1/n}`` for ``n = 1..n_max`` and
    ``lower = max_p rho(A^p(p))^{1/p}`` over necklaces up to ``max_period``.

    Word scans are exhaustive while the word count fits ``budget``; past that
    prefixes whose norm times the best remaining growth cannot beat the
    incumbent are discarded (the maxima stay exact).
    """
    gen.check_space(space)
    lower = -math.inf
    radii = []
    for p in enumerate_periodic(space, max_period):
        M, ls = _return_map(gen, p.word)
        rho = float(np.abs(np.linalg.eigvals(M)).max())
        if rho > TINY:
            val = (math.log(rho) + ls) / p.period
            radii.append((val, p.word))
            lower = max(lower, val)
    lower_val = math.exp(lower) if lower > -math.inf else 0.0
    total_words = space.alphabet_size ** (n_max + 2 * gen.radius)
    pruned = prune and total_words > budget
    best_log = np.full(n_max + 1, -np.inf)
    if not pruned:
        it = _word_levels(gen, space, n_max, budget)
        n, logs = next(it)
        while True:
            best_log[n] = logs.max() if logs.size else -np.inf
            if n == n_max:
                break
            n, logs = it.send(None)
    else:
        seeds = [w for _, w in sorted(radii, reverse=True)[:8]] or [(0,)]
        best_log = _pruned_maxima(gen, space, n_max, budget, seeds)
    upper = [math.exp(best_log[n] / n) if best_log[n] > -np.inf else 0.0 for n in range(1, n_max + 1)]
    return upper, lower_val


def _periodic_incumbent(gen: CocycleGenerator, words: list, n: int) -> float:
    """``max log||A^n(p)||`` over the given periodic words: an attained lower bound."""
    best = -math.inf
    for w in words:
        per = len(w)
        reps = -(-n // per)
        mats = gen.matrices_for_word(tuple(w) * reps, cyclic=True)[:n]
        M, ls = scaled_product(mats)
        nv = float(np.linalg.norm(M, 2))
        if nv > TINY:
            best = max(best, math.log(nv) + ls)
    return best


def _pruned_maxima(gen, space, n_max, budget, seeds: list) -> np.ndarray:
    """Exact ``max_w log||A_w||`` per length using norm-bound pruning.

    Level ``m`` maxima bound the growth of any continuation of length ``m``
    (submultiplicativity), so a prefix of length ``n`` with log-norm ``a``
    can reach at most ``a + U[m]`` at length ``n + m``.  Prefixes whose bound
    falls below an attained value (a periodic continuation) are dropped.
    """
    best = np.full(n_max + 1, -np.inf)
    best[0] = 0.0
    for target in range(1, n_max + 1):
        incumbent = _periodic_incumbent(gen, seeds, target)
        it = _word_levels(gen, space, target, budget)
        n, logs = next(it)
        while n < target:
            keep = logs + best[target - n] >= incumbent - 1e-9 * max(1.0, abs(incumbent))
            n, logs = it.send(keep)
        best[target] = max(incumbent, float(logs.max()) if logs.size else -np.inf)
    return best


# ---------------------------------------------------------------------------
# spectral radius along an orbit


def spectral_radius_along_orbit(gen: CocycleGenerator, x: SymbolSequence, n_schedule) -> list:
    """``(n, (1/n) log rho(A^n(x)))``; vanishing radii are recorded as -inf."""
    out = []
    ns = sorted(int(n) for n in n_schedule)
    if not ns:
        return out
    mats = gen.matrices_along(x, 0, ns[-1])
    for n in ns:
        M, ls = scaled_product(mats[:n])
        rho = float(np.abs(np.linalg.eigvals(M)).max()) if np.isfinite(ls) else 0.0
        out.append((n, (math.log(rho) + ls) / n if rho > TINY else -math.inf))
    return out


def running_max_report(values: list, lambda1: float) -> list:
    """Running max of finite terms next to the ``lambda_1`` estimate."""
    rows = []
    best = -math.inf
    for n, v in values:
        if np.isfinite(v):
            best = max(best, v)
        rows.append((n, report_value(v), report_value(best), lambda1))
    return rows


# ---------------------------------------------------------------------------
# conjugacy


@dataclass
class ConjugacyReport:
    max_deviation: float
    flagged: bool
    deviations: dict
    commutes: bool
    min_abs_exponent: float | None = None
    hyperbolic_bound_ok: bool | None = None
    L_condition: float | None = None


def similarity_conjugate(gen: CocycleGenerator, L) -> CocycleGenerator:
    """``L A L^{-1}`` on every window (a conjugate with ``h`` the identity)."""
    L = np.asarray(L, dtype=float)
    Li = np.linalg.inv(L)
    return gen.map_matrices(lambda M: L @ M @ Li)


def conjugacy_invariance_check(gen1: CocycleGenerator, gen2: CocycleGenerator, conj: ConjugacyData,
                               max_period: int, space: ShiftSpace | None = None,
                               certificate: HyperbolicityCertificate | None = None,
                               tol: float = 1e-8) -> ConjugacyReport:
    """Periodic spectra of ``A_1`` at ``p`` against ``A_2`` at ``h(p)``."""
    space = space or ShiftSpace.full(gen1.alphabet_size)
    devs = {}
    commutes = True
    min_abs = math.inf
    for p in enumerate_periodic(space, max_period):
        w = p.word
        hw = tuple(conj.point_map(w))
        # h o f = f o h on the orbit: images of rotations are rotations of the image
        for c in range(1, min(p.period, 4)):
            rot = w[c:] + w[:c]
            hr = tuple(conj.point_map(rot))
            if hr != hw[c:] + hw[:c]:
                commutes = False
        g1 = periodic_exponents(gen1, w)
        g2 = periodic_exponents(gen2, hw)
        fin = np.isfinite(g1) & np.isfinite(g2)
        mism = np.isfinite(g1) != np.isfinite(g2)
        dev = float(np.abs(g1[fin] - g2[fin]).max()) if fin.any() else 0.0
        if mism.any():
            dev = math.inf
        devs[w] = dev
        if np.isfinite(g1).any():
            min_abs = min(min_abs, float(np.abs(g1[np.isfinite(g1)]).min()))
    worst = max(devs.values()) if devs else 0.0
    bound_ok = None
    if certificate is not None and certificate.verdict == "certified":
        bound_ok = min_abs >= certificate.delta_margin - tol
    cond = max(conj.condition_numbers().values()) if conj.L else None
    return ConjugacyReport(worst, worst > tol, devs, commutes,
                           min_abs if min_abs < math.inf else None, bound_ok, cond)
