"""Ulam discretizations of transfer operators of piecewise affine expanding maps.

Each map ``T_s`` is cut into affine branches; the Ulam matrix on ``N``
equal bins moves bin masses exactly, so every column sums to one.  A random
composition of such maps gives a stochastic matrix cocycle whose top
exponent is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cocycle import CocycleGenerator, derive_seed
from .oseledets import periodic_exponents
from .symbolic import BaseMeasure, ShiftSpace, enumerate_periodic, sample_orbit

DEFAULT_BINS = 128


class LasotaYorkeHypothesisError(ValueError):
    """Some map has minimal expansion at most 2."""


@dataclass(frozen=True)
class Branch:
    u: float
    v: float
    a: float
    b: float

    def image(self) -> tuple[float, float]:
        y0, y1 = self.a * self.u + self.b, self.a * self.v + self.b
        return (min(y0, y1), max(y0, y1))


class PiecewiseExpandingMap:
    """Affine branches ``x -> a x + b`` on a partition of ``[0, 1]``.

    Every branch must expand (``|a| > 1``) and map into ``[0, 1]``.  The
    stronger ``|a| > 2`` needed for the Lasota-Yorke argument is checked by
    :func:`lasota_yorke_check`.
    """

    def __init__(self, branches, name: str = ""):
        br = sorted((Branch(*map(float, b)) if not isinstance(b, Branch) else b for b in branches),
                    key=lambda b: b.u)
        if not br:
            raise ValueError("a map needs at least one branch")
        if abs(br[0].u) > 1e-12 or abs(br[-1].v - 1.0) > 1e-12:
            raise ValueError("branches must cover [0, 1]")
        for b0, b1 in zip(br, br[1:]):
            if abs(b0.v - b1.u) > 1e-12:
                raise ValueError(f"branches [{b0.u}, {b0.v}] and [{b1.u}, {b1.v}] do not abut")
        for b in br:
            if not b.v > b.u:
                raise ValueError(f"empty branch [{b.u}, {b.v}]")
            if not abs(b.a) > 1.0:
                raise ValueError(f"branch slope {b.a} is not expanding")
            lo, hi = b.image()
            if lo < -1e-12 or hi > 1 + 1e-12:
                raise ValueError(f"branch on [{b.u}, {b.v}] leaves [0, 1]")
        self.branches = tuple(br)
        self.name = name

    @property
    def delta(self) -> float:
        """Essential infimum of ``|T'|``."""
        return min(abs(b.a) for b in self.branches)

    @property
    def min_branch_length(self) -> float:
        return min(b.v - b.u for b in self.branches)

    @classmethod
    def mod_one(cls, a: float, name: str = "") -> "PiecewiseExpandingMap":
        """``x -> a x mod 1`` for ``a > 1`` (last branch partial when ``a`` is not an integer)."""
        if not a > 1:
            raise ValueError("slope must exceed 1")
        cuts = [j / a for j in range(int(math.ceil(a)))] + [1.0]
        return cls([(cuts[j], cuts[j + 1], a, -float(j)) for j in range(len(cuts) - 1)],
                   name or f"x->{a:g}x mod 1")

    def to_text(self) -> str:
        return "".join(f"branch {b.u!r} {b.v!r} {b.a!r} {b.b!r}\n" for b in self.branches)

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "PiecewiseExpandingMap":
        branches = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != "branch" or len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 'branch u v a b'")
            branches.append(tuple(float(v) for v in parts[1:]))
        return cls(branches, name)

    @classmethod
    def load(cls, path) -> "PiecewiseExpandingMap":
        return cls.from_text(Path(path).read_text(), Path(path).stem)

    def __repr__(self):
        return f"PiecewiseExpandingMap({self.name or len(self.branches)} branches, delta={self.delta:g})"


def build_ulam(T: PiecewiseExpandingMap, N: int = DEFAULT_BINS) -> np.ndarray:
    """Ulam matrix ``M[i, j] = |B_j ∩ T^{-1} B_i| / |B_j|`` on ``N`` equal bins.

    Overlaps are exact for affine branches: the image of ``B_j`` under a
    branch is an interval whose length splits over the target bins.
    """
    if N < 2:
        raise ValueError("need at least two bins")
    if not isinstance(T, PiecewiseExpandingMap):
        raise TypeError("build_ulam needs a PiecewiseExpandingMap with affine branches")
    edges = np.linspace(0.0, 1.0, N + 1)
    M = np.zeros((N, N))
    for br in T.branches:
        lo = np.maximum(edges[:-1], br.u)
        hi = np.minimum(edges[1:], br.v)
        js = np.nonzero(hi > lo)[0]
        y0 = br.a * lo[js] + br.b
        y1 = br.a * hi[js] + br.b
        ylo, yhi = np.minimum(y0, y1), np.maximum(y0, y1)
        # overlap of [ylo, yhi] with each target bin, pulled back by 1/|a|
        ov = np.clip(np.minimum(yhi[:, None], edges[None, 1:]) - np.maximum(ylo[:, None], edges[None, :-1]),
                     0.0, None)
        M[:, js] += (ov / abs(br.a)).T * N
    return M


@dataclass(frozen=True)
class LasotaYorkeData:
    alpha: tuple
    beta: tuple
    gamma_bound: tuple
    integral_log_alpha: float
    quasi_compact: bool


def lasota_yorke_check(maps, measure: BaseMeasure) -> LasotaYorkeData:
    """Lasota-Yorke constants and the quasi-compactness test.

    ``alpha_i = 2 / delta_i``; ``beta_i = 2 / (delta_i * min branch length)``
    (affine branches have no distortion term); ``gamma_bound = 1 + alpha + beta``
    bounds the BV operator norm.  Quasi-compact when
    ``sum q_i log alpha_i < 0``, the top exponent of a transfer cocycle being 0.
    """
    maps = list(maps)
    if len(maps) != measure.alphabet_size:
        raise ValueError("one map per symbol of the measure is required")
    bad = [T for T in maps if not T.delta > 2.0]
    if bad:
        raise LasotaYorkeHypothesisError(f"minimal expansion {bad[0].delta:g} is not above 2")
    alpha = tuple(2.0 / T.delta for T in maps)
    beta = tuple(2.0 / (T.delta * T.min_branch_length) for T in maps)
    gamma = tuple(1.0 + a + b for a, b in zip(alpha, beta))
    q = np.asarray(measure.probs, dtype=float)
    integral = float(np.dot(q, np.log(alpha)))
    return LasotaYorkeData(alpha, beta, gamma, integral, integral < 0.0)


def transfer_cocycle(maps, N: int = DEFAULT_BINS) -> CocycleGenerator:
    """Radius-0 generator with the Ulam matrix of map ``s`` on symbol ``s``."""
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one map")
    return CocycleGenerator.from_matrices([build_ulam(T, N) for T in maps])


@dataclass
class UlamSpectrumReport:
    N: int
    n: int
    lambda1: float
    lambda2: float
    periodic: dict          # word -> (gamma_1, gamma_2)
    seed: int


def _thin_adjoint_exponents(table_t: np.ndarray, symbols: np.ndarray, k: int, rng,
                            reortho: int = 8) -> np.ndarray:
    """Top ``k`` exponents of the adjoint cocycle, first column pinned to the ones vector.

    ``table_t[s]`` is the transposed matrix of symbol ``s``; ``symbols`` lists
    the symbols in the order the transposes are applied.  The ones vector is
    fixed by every transposed column-stochastic matrix, so the first column
    carries exponent 0 up to roundoff.
    """
    N = table_t.shape[1]
    n = len(symbols)
    Q = np.empty((N, k))
    Q[:, 0] = 1.0 / math.sqrt(N)
    if k > 1:
        Q[:, 1:] = rng.standard_normal((N, k - 1))
    Q, _ = np.linalg.qr(Q)
    logs = np.zeros(k)
    for t, s in enumerate(symbols):
        Q = table_t[s] @ Q
        if (t + 1) % reortho == 0 or t == n - 1:
            Q, R = np.linalg.qr(Q)
            d = np.abs(np.diagonal(R))
            logs += np.log(np.maximum(d, 1e-300))
    return logs / n


def exceptional_spectrum_ulam(gen: CocycleGenerator, measure: BaseMeasure, n: int = 20_000,
                              max_period: int = 1, seed: int = 0) -> UlamSpectrumReport:
    """Top two exponents of a transfer cocycle and their periodic approximations.

    ``lambda_1`` comes from an adjoint sweep whose first column is the ones
    vector (so it is 0 to roundoff); ``lambda_2`` from the second column of
    the same thin QR sweep.
    """
    space = ShiftSpace.full(gen.alphabet_size)
    x = sample_orbit(space, measure, 0, n, derive_seed(seed, 6))
    if gen.radius != 0:
        raise ValueError("transfer cocycles have radius 0")
    table_t = np.ascontiguousarray(gen._dense.transpose(0, 2, 1))
    # the adjoint sweep runs backward in time with transposes
    symbols = x.window(0, n - 1)[::-1].astype(np.int64)
    rng = np.random.default_rng(derive_seed(seed, 7))
    g = _thin_adjoint_exponents(table_t, symbols, 2, rng)
    periodic = {}
    for p in enumerate_periodic(space, max_period):
        pg = periodic_exponents(gen, p.word)
        periodic[p.word] = (float(pg[0]), float(pg[1]))
    return UlamSpectrumReport(gen.dimension, n, float(g[0]), float(g[1]), periodic, seed)
