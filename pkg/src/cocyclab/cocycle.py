"""Locally constant matrix cocycles over a shift and their growth rates.

A :class:`CocycleGenerator` assigns a ``d x d`` matrix to every admissible
window ``x_{-r} .. x_r``; ``A^n(x) = A(f^{n-1}x) ... A(fx) A(x)``.
Operator norms are spectral norms throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._linalg import TINY, scaled_chunk_products, chain_product
from .symbolic import BaseMeasure, ShiftSpace, SymbolSequence, sample_orbit


class DegenerateCocycleWarning(RuntimeWarning):
    """A running product collapsed to zero; exponents were floored at -inf."""


class CocycleGenerator:
    """Table of matrices indexed by symbol windows of radius ``radius``.

    ``table`` maps tuples of ``2*radius + 1`` symbols to matrices.  Windows
    that are missing from the table are treated as inadmissible; evaluating
    the cocycle on one raises ``KeyError``.
    """

    def __init__(self, table: dict, alphabet_size: int | None = None, radius: int = 0):
        if not table:
            raise ValueError("empty generator table")
        self.radius = int(radius)
        width = 2 * self.radius + 1
        mats = {}
        dim = None
        for key, value in table.items():
            key = (int(key),) if np.isscalar(key) else tuple(int(s) for s in key)
            if len(key) != width:
                raise ValueError(f"window {key} has length {len(key)}, expected {width}")
            M = np.array(value, dtype=float)
            if M.ndim == 0:
                M = M.reshape(1, 1)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"entry for {key} is not square")
            if dim is None:
                dim = M.shape[0]
            elif M.shape[0] != dim:
                raise ValueError("inconsistent matrix dimensions")
            if not np.isfinite(M).all():
                raise ValueError(f"entry for {key} is not finite")
            M.setflags(write=False)
            mats[key] = M
        k = alphabet_size if alphabet_size is not None else 1 + max(max(w) for w in mats)
        self.alphabet_size = int(k)
        self.dimension = int(dim)
        self.table = mats
        dense = np.full((k ** width, dim, dim), np.nan)
        present = np.zeros(k ** width, dtype=bool)
        for key, M in mats.items():
            c = self._code(key)
            dense[c] = M
            present[c] = True
        self._dense = dense
        self._present = present

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_matrices(cls, mats) -> "CocycleGenerator":
        """Radius-0 generator with ``mats[s]`` on symbol ``s``."""
        return cls({(s,): M for s, M in enumerate(mats)}, alphabet_size=len(mats))

    @classmethod
    def constant(cls, M, alphabet_size: int = 1) -> "CocycleGenerator":
        return cls.from_matrices([M] * alphabet_size)

    def map_matrices(self, fn) -> "CocycleGenerator":
        """New generator with ``fn`` applied to every table entry."""
        return CocycleGenerator({w: fn(M) for w, M in self.table.items()},
                                self.alphabet_size, self.radius)

    def transpose(self) -> "CocycleGenerator":
        return self.map_matrices(lambda M: M.T)

    def max_log_condition(self) -> float:
        """Largest ``log(s_max / s_min)`` over table entries, ignoring null directions."""
        worst = 0.0
        for M in self.table.values():
            sv = np.linalg.svd(M, compute_uv=False)
            if sv[0] <= TINY:
                continue
            pos = sv[sv > sv[0] * 1e-13]
            worst = max(worst, math.log(sv[0] / pos[-1]))
        return worst

    def safe_stride(self, stride: int, budget: float = 18.0) -> int:
        """Largest stride <= ``stride`` whose block products keep a spread below ``e**budget``.

        Past that spread a block product no longer resolves its small singular
        directions in double precision.
        """
        L = self.max_log_condition()
        if L <= 0:
            return max(1, int(stride))
        return max(1, min(int(stride), int(budget // L)))

    def _code(self, window) -> int:
        c = 0
        for s in window:
            c = c * self.alphabet_size + int(s)
        return c

    def check_space(self, space: ShiftSpace) -> None:
        """Raise unless every admissible window of the space has an entry."""
        if space.alphabet_size != self.alphabet_size:
            raise ValueError("generator and shift space disagree on the alphabet")
        words = space.admissible_words(2 * self.radius + 1)
        codes = words @ (self.alphabet_size ** np.arange(words.shape[1])[::-1])
        if not self._present[codes].all():
            missing = words[~self._present[codes]][0]
            raise ValueError(f"no matrix for admissible window {tuple(missing)}")

    def matrices_for_word(self, word, cyclic: bool = False) -> np.ndarray:
        """Matrices at positions of ``word``.

        With ``cyclic`` the word is read periodically and one matrix per letter
        is returned; otherwise the outer ``radius`` letters on each side only
        serve as context and ``len(word) - 2r`` matrices are returned.
        """
        w = np.asarray(word, dtype=np.int64)
        r = self.radius
        if cyclic:
            idx = (np.arange(-r, w.size + r)) % w.size
            w = w[idx]
        return self._lookup(w)

    def _lookup(self, symbols: np.ndarray) -> np.ndarray:
        width = 2 * self.radius + 1
        n = symbols.size - width + 1
        if n <= 0:
            return np.zeros((0, self.dimension, self.dimension))
        if width == 1:
            codes = symbols
        else:
            view = np.lib.stride_tricks.sliding_window_view(symbols, width)
            codes = view @ (self.alphabet_size ** np.arange(width)[::-1])
        if not self._present[codes].all():
            bad = int(np.nonzero(~self._present[codes])[0][0])
            raise KeyError(f"no matrix for window at offset {bad}")
        return self._dense[codes]

    def matrices_along(self, x: SymbolSequence, start: int, n: int) -> np.ndarray:
        """``A(f^t x)`` for ``t = start .. start+n-1`` as an ``(n, d, d)`` array."""
        r = self.radius
        if n <= 0:
            return np.zeros((0, self.dimension, self.dimension))
        sym = x.window(start - r, start + n - 1 + r)
        return self._lookup(sym)

    # -- file format -----------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"dim {self.dimension}", f"radius {self.radius}"]
        for key in sorted(self.table):
            M = self.table[key]
            lines.append(" ".join(str(s) for s in key) + "  "
                         + " ".join(repr(float(v)) for v in M.ravel()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, alphabet_size: int | None = None) -> "CocycleGenerator":
        dim = radius = None
        table = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "dim":
                dim = int(parts[1])
                continue
            if parts[0] == "radius":
                radius = int(parts[1])
                continue
            if dim is None or radius is None:
                raise ValueError(f"line {lineno}: 'dim' and 'radius' headers must come first")
            width = 2 * radius + 1
            if len(parts) != width + dim * dim:
                raise ValueError(f"line {lineno}: expected {width} symbols and {dim * dim} entries")
            key = tuple(int(s) for s in parts[:width])
            vals = np.array([float(v) for v in parts[width:]]).reshape(dim, dim)
            table[key] = vals
        if dim is None or radius is None:
            raise ValueError("missing 'dim' or 'radius' header")
        return cls(table, alphabet_size=alphabet_size, radius=radius)

    @classmethod
    def load(cls, path, alphabet_size: int | None = None) -> "CocycleGenerator":
        return cls.from_text(Path(path).read_text(), alphabet_size)

    def __repr__(self):
        return (f"CocycleGenerator(dim={self.dimension}, radius={self.radius}, "
                f"alphabet={self.alphabet_size}, entries={len(self.table)})")


@dataclass(frozen=True)
class HolderData:
    C2: float
    alpha: float = 1.0


@dataclass(frozen=True)
class GrowthEstimates:
    lambda_mu: float
    lambda_mu_stderr: float
    kappa_mu: float = -math.inf
    quasi_compact: bool = True
    n: int = 0
    replicates: int = 0
    seed: int | None = None
    degenerate: bool = False


def evaluate(gen: CocycleGenerator, x: SymbolSequence) -> np.ndarray:
    return gen.matrices_along(x, 0, 1)[0]


def product(gen: CocycleGenerator, x: SymbolSequence, n: int) -> np.ndarray:
    """``A^n(x)``; the identity for ``n = 0``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.eye(gen.dimension)
    return chain_product(gen.matrices_along(x, 0, n))


def holder_constants(gen: CocycleGenerator, space: ShiftSpace) -> HolderData:
    """Lipschitz (alpha = 1) constant of the generator on the shift.

    Windows that differ force ``d(x, y) >= 2**-r``, so the largest table gap
    divided by that distance is a valid constant for all sequence pairs.
    """
    gen.check_space(space)
    words = space.admissible_words(2 * gen.radius + 1)
    mats = np.stack([gen.table[tuple(w)] for w in words])
    gap = 0.0
    for i in range(len(mats)):
        diffs = mats[i + 1:] - mats[i]
        if diffs.size:
            gap = max(gap, float(np.linalg.norm(diffs, ord=2, axis=(1, 2)).max()))
    return HolderData(C2=gap * 2.0 ** gen.radius, alpha=1.0)


def _seed_for(seed: int, *task) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(t) for t in task))


def derive_seed(seed: int, *task) -> int:
    """Deterministic child seed for ``(seed, task...)``."""
    return int(_seed_for(seed, *task).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def log_norm_growth(mats: np.ndarray, stride: int = 50) -> float:
    """``log ||A_{n-1} ... A_0||`` with the running product renormalized every stride."""
    chunks, logs = scaled_chunk_products(mats, stride)
    d = mats.shape[1]
    P = np.eye(d)
    total = 0.0
    for C, ls in zip(chunks, logs):
        if not np.isfinite(ls):
            return -math.inf
        P = C @ P
        nrm = np.linalg.norm(P, 2)
        if nrm <= TINY:
            return -math.inf
        P /= nrm
        total += ls + math.log(nrm)
    return total


def lambda_mu_estimate(gen: CocycleGenerator, space: ShiftSpace, measure: BaseMeasure,
                       n: int, replicates: int, seed: int, stride: int = 50) -> GrowthEstimates:
    """Norm growth rate ``lambda(mu)`` averaged over independent orbit samples."""
    if n < 100:
        raise ValueError("n must be at least 100")
    gen.check_space(space)
    r = gen.radius
    vals = []
    for j in range(replicates):
        x = sample_orbit(space, measure, r, n + r, derive_seed(seed, 0, j))
        vals.append(log_norm_growth(gen.matrices_along(x, 0, n), stride) / n)
    vals = np.array(vals)
    degenerate = bool(np.isneginf(vals).any())
    if degenerate:
        warnings.warn("running product vanished; lambda(mu) floored at -inf",
                      DegenerateCocycleWarning, stacklevel=2)
        return GrowthEstimates(-math.inf, 0.0, -math.inf, False, n, replicates, seed, True)
    lam = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    # finite-dimensional fibres are compact operators: kappa = -inf
    return GrowthEstimates(lam, se, -math.inf, True, n, replicates, seed, False)
