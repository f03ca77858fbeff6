"""Subshifts of finite type, orbit samples, periodic points and orbit closing.

Points of the two-sided shift are :class:`SymbolSequence` objects.  They are
backed either by a periodic word (every coordinate exposed) or by a finite
sampled window; asking a sampled window for a coordinate it does not hold
raises :class:`WindowRangeError` instead of extending the sample.

The metric is ``d(x, y) = 2**-m`` where ``m`` is the smallest ``|i|`` with
``x_i != y_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class WindowRangeError(IndexError):
    """A coordinate outside the exposed window was requested."""


class ClosureError(ValueError):
    """An orbit segment cannot be closed into an admissible periodic word."""


# ---------------------------------------------------------------------------
# shift spaces and measures


@dataclass(frozen=True, eq=False)
class ShiftSpace:
    """Two-sided subshift of finite type on ``alphabet_size`` symbols."""

    alphabet_size: int
    transitions: np.ndarray = None

    def __post_init__(self):
        k = int(self.alphabet_size)
        if k < 1:
            raise ValueError("alphabet_size must be positive")
        if self.transitions is None:
            T = np.ones((k, k), dtype=bool)
        else:
            T = np.array(self.transitions, dtype=bool)
        if T.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}")
        if not T.any(axis=1).all() or not T.any(axis=0).all():
            raise ValueError("every symbol needs an admissible successor and predecessor")
        T.setflags(write=False)
        object.__setattr__(self, "alphabet_size", k)
        object.__setattr__(self, "transitions", T)

    @classmethod
    def full(cls, k: int) -> "ShiftSpace":
        return cls(k)

    @property
    def is_full(self) -> bool:
        return bool(self.transitions.all())

    def admissible(self, word, cyclic: bool = False) -> bool:
        w = np.asarray(word, dtype=np.int64)
        if w.size == 0:
            return True
        if w.min() < 0 or w.max() >= self.alphabet_size:
            return False
        ok = bool(self.transitions[w[:-1], w[1:]].all())
        if cyclic:
            ok = ok and bool(self.transitions[w[-1], w[0]])
        return ok

    def admissible_words(self, length: int) -> np.ndarray:
        """All admissible words of ``length`` as rows, in lexicographic order."""
        k = self.alphabet_size
        words = np.arange(k, dtype=np.int64)[:, None]
        if length == 0:
            return np.zeros((1, 0), dtype=np.int64)
        for _ in range(length - 1):
            last = words[:, -1]
            ext = []
            for s in range(k):
                keep = self.transitions[last, s]
                ext.append(np.column_stack([words[keep], np.full(keep.sum(), s)]))
            words = np.concatenate(ext, axis=0)
            order = np.lexsort(words.T[::-1])
            words = words[order]
        return words

    def closing_constants(self) -> "ClosingConstants":
        # d(f^n z, z) < 1 forces z_n = z_0, so the wrap transition is admissible.
        return ClosingConstants(C1=1.0, theta=math.log(2.0), eps0=1.0)

    def to_text(self) -> str:
        lines = [f"k {self.alphabet_size}"]
        for a, b in zip(*np.nonzero(~self.transitions)):
            lines.append(f"forbid {a} {b}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ShiftSpace":
        k = None
        forbidden = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "k" and len(parts) == 2:
                k = int(parts[1])
            elif parts[0] == "forbid" and len(parts) == 3:
                forbidden.append((int(parts[1]), int(parts[2])))
            else:
                raise ValueError(f"line {lineno}: cannot parse {raw!r}")
        if k is None:
            raise ValueError("missing 'k <alphabet_size>' line")
        T = np.ones((k, k), dtype=bool)
        for a, b in forbidden:
            if not (0 <= a < k and 0 <= b < k):
                raise ValueError(f"forbidden transition {a}->{b} outside alphabet")
            T[a, b] = False
        return cls(k, T)

    @classmethod
    def load(cls, path) -> "ShiftSpace":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class ClosingConstants:
    C1: float
    theta: float
    eps0: float

    def __post_init__(self):
        if not (self.C1 > 0 and self.theta > 0 and self.eps0 > 0):
            raise ValueError("closing constants must be strictly positive")


@dataclass(frozen=True, eq=False)
class BaseMeasure:
    """Bernoulli or stationary Markov measure on a shift space.

    Build with :meth:`bernoulli` or :meth:`markov`; ``probs`` is the one-symbol
    marginal (the stationary vector in the Markov case).
    """

    kind: str
    probs: np.ndarray
    matrix: np.ndarray | None = None
    name: str = ""

    @classmethod
    def bernoulli(cls, probs) -> "BaseMeasure":
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("Bernoulli weights must be nonnegative and sum to 1")
        p.setflags(write=False)
        name = "bernoulli(" + ",".join(f"{v:g}" for v in p) + ")"
        return cls("bernoulli", p, None, name)

    @classmethod
    def markov(cls, matrix, stationary=None) -> "BaseMeasure":
        P = np.asarray(matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("Markov matrix must be square")
        if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("Markov matrix rows must be probability vectors")
        if stationary is None:
            w, v = np.linalg.eig(P.T)
            i = int(np.argmin(np.abs(w - 1.0)))
            pi = np.real(v[:, i])
            pi = pi / pi.sum()
            pi = np.clip(pi, 0.0, None)
            pi = pi / pi.sum()
        else:
            pi = np.asarray(stationary, dtype=float)
        if np.abs(pi @ P - pi).max() > 1e-10 or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("stationary vector does not satisfy pi P = pi")
        P.setflags(write=False)
        pi.setflags(write=False)
        return cls("markov", pi, P, "markov")

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def check_support(self, space: ShiftSpace) -> None:
        if self.alphabet_size != space.alphabet_size:
            raise ValueError("measure and shift space disagree on the alphabet")
        if self.kind == "bernoulli":
            support = self.probs > 0
            if not space.transitions[np.ix_(support, support)].all():
                raise ValueError("Bernoulli support crosses a forbidden transition")
        elif (self.matrix[~space.transitions] > 0).any():
            raise ValueError("Markov matrix charges a forbidden transition")


# ---------------------------------------------------------------------------
# periodic points


def _least_rotation(word: tuple) -> int:
    """Index of the lexicographically least rotation (Booth's algorithm)."""
    s = list(word) * 2
    n = len(word)
    f = [-1] * len(s)
    k = 0
    for j in range(1, len(s)):
        sj = s[j]
        i = f[j - k - 1]
        while i != -1 and sj != s[k + i + 1]:
            if sj < s[k + i + 1]:
                k = j - i - 1
            i = f[i]
        if sj != s[k + i + 1]:
            if sj < s[k]:
                k = j
            f[j - k] = -1
        else:
            f[j - k] = i + 1
    return k % n


def _primitive_root_length(word: tuple) -> int:
    n = len(word)
    for q in range(1, n + 1):
        if n % q == 0 and word[:q] * (n // q) == word:
            return q
    return n


@dataclass(frozen=True)
class PeriodicPoint:
    """A primitive cyclic word stored as its least rotation."""

    word: tuple

    def __post_init__(self):
        w = tuple(int(s) for s in self.word)
        if not w:
            raise ValueError("periodic word must be nonempty")
        if _primitive_root_length(w) != len(w):
            raise ValueError(f"word {w} is not primitive")
        if _least_rotation(w) != 0:
            raise ValueError(f"word {w} is not in canonical (least rotation) form")
        object.__setattr__(self, "word", w)

    @property
    def period(self) -> int:
        return len(self.word)

    @classmethod
    def from_word(cls, word) -> tuple["PeriodicPoint", int]:
        """Canonicalize an arbitrary nonempty word.

        Returns the point and the phase ``c`` with ``word[i] == point.word[(i + c) % p]``.
        A non-primitive word is reduced to its primitive root.
        """
        w = tuple(int(s) for s in word)
        if not w:
            raise ValueError("periodic word must be nonempty")
        q = _primitive_root_length(w)
        root = w[:q]
        c = _least_rotation(root)
        return cls(root[c:] + root[:c]), (q - c) % q

    def rotation(self, phase: int) -> tuple:
        p = self.period
        c = phase % p
        return self.word[c:] + self.word[:c]

    def sequence(self, space: ShiftSpace, phase: int = 0) -> "SymbolSequence":
        return SymbolSequence.periodic(space, self, phase)

    def label(self) -> str:
        return "".join(str(s) for s in self.word) if self.period <= 64 else (
            f"p{self.period}:" + "".join(str(s) for s in self.word[:16]) + "...")


def lyndon_words(k: int, max_length: int):
    """Yield Lyndon words over ``range(k)`` of length <= max_length (Duval)."""
    w = [-1]
    while w:
        w[-1] += 1
        yield tuple(w)
        m = len(w)
        while len(w) < max_length:
            w.append(w[len(w) - m])
        while w and w[-1] == k - 1:
            w.pop()


def enumerate_periodic(space: ShiftSpace, max_period: int) -> list[PeriodicPoint]:
    """One canonical representative per primitive admissible necklace."""
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    out = [PeriodicPoint(w) for w in lyndon_words(space.alphabet_size, max_period)
           if space.admissible(w, cyclic=True)]
    out.sort(key=lambda p: (p.period, p.word))
    return out


def necklace_count(k: int, max_period: int) -> int:
    """Number of primitive necklaces of length <= max_period on k letters."""
    def mobius(n):
        res, m, q = 1, n, 2
        while q * q <= m:
            if m % q == 0:
                m //= q
                if m % q == 0:
                    return 0
                res = -res
            q += 1
        return -res if m > 1 else res

    total = 0
    for p in range(1, max_period + 1):
        total += sum(mobius(d) * k ** (p // d) for d in range(1, p + 1) if p % d == 0) // p
    return total


# ---------------------------------------------------------------------------
# points of the shift


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """A point ``x`` of the shift together with its current shift position.

    Use :meth:`periodic` or :func:`sample_orbit` to build one.  ``at(i)``
    returns ``x_i`` relative to the current position.
    """

    space: ShiftSpace
    point: PeriodicPoint | None = None
    symbols: np.ndarray | None = None
    origin: int = 0          # array index of coordinate 0 (sampled backing)
    offset: int = 0          # accumulated shift
    measure_id: str = ""
    seed: int | None = None

    @classmethod
    def periodic(cls, space: ShiftSpace, point: PeriodicPoint, phase: int = 0):
        if not space.admissible(point.word, cyclic=True):
            raise ValueError(f"periodic word {point.word} is not admissible")
        return cls(space, point=point, offset=int(phase))

    @classmethod
    def from_window(cls, space: ShiftSpace, symbols, past: int, measure_id="", seed=None):
        arr = np.asarray(symbols, dtype=np.int8 if space.alphabet_size <= 127 else np.int64)
        if not space.admissible(arr):
            raise ValueError("window contains an inadmissible transition")
        arr.setflags(write=False)
        return cls(space, symbols=arr, origin=int(past), measure_id=measure_id, seed=seed)

    @property
    def is_periodic(self) -> bool:
        return self.point is not None

    @property
    def bounds(self) -> tuple[float, float]:
        """Smallest and largest exposed coordinate (infinite for periodic)."""
        if self.is_periodic:
            return (-math.inf, math.inf)
        lo = -(self.origin + self.offset)
        return (lo, lo + self.symbols.size - 1)

    def covers(self, lo: int, hi: int) -> bool:
        a, b = self.bounds
        return a <= lo and hi <= b

    def shift(self, n: int = 1) -> "SymbolSequence":
        return SymbolSequence(self.space, self.point, self.symbols, self.origin,
                              self.offset + int(n), self.measure_id, self.seed)

    def at(self, i: int) -> int:
        return int(self.window(i, i)[0])

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Coordinates ``x_lo .. x_hi`` inclusive as an int array."""
        lo, hi = int(lo), int(hi)
        if hi < lo:
            return np.zeros(0, dtype=np.int64)
        if self.is_periodic:
            w = np.asarray(self.point.word, dtype=np.int64)
            idx = (np.arange(lo, hi + 1) + self.offset) % w.size
            return w[idx]
        a, b = self.bounds
        if lo < a or hi > b:
            raise WindowRangeError(
                f"coordinates {lo}..{hi} requested but window holds {a}..{b}")
        start = self.origin + self.offset + lo
        return self.symbols[start:start + hi - lo + 1].astype(np.int64)

    def to_text(self) -> str:
        """Orbit dump: header ``offset <-past>`` then one ASCII digit per symbol."""
        if self.is_periodic:
            raise ValueError("only sampled windows can be dumped")
        if self.space.alphabet_size > 10:
            raise ValueError("dump format supports at most 10 symbols")
        a, b = self.bounds
        digits = "".join(str(int(s)) for s in self.window(a, b))
        return f"offset {a}\n{digits}\n"

    @classmethod
    def from_text(cls, space: ShiftSpace, text: str) -> "SymbolSequence":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("offset "):
            raise ValueError("orbit dump must start with 'offset <-past>'")
        start = int(lines[0].split()[1])
        digits = "".join(lines[1:]).strip()
        symbols = np.frombuffer(digits.encode("ascii"), dtype=np.uint8) - ord("0")
        return cls.from_window(space, symbols, past=-start)


# ---------------------------------------------------------------------------
# operations


def distance(x: SymbolSequence, y: SymbolSequence, horizon: int) -> float:
    """``2**-m`` for the first mismatch ``|i| = m <= horizon``, else 0."""
    h = int(horizon)
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    diff = x.window(-h, h) != y.window(-h, h)
    if not diff.any():
        return 0.0
    m = int(np.abs(np.nonzero(diff)[0] - h).min())
    return 2.0 ** (-m)


def agreement_radius(k: int) -> int:
    """Integer radius R with agreement on |i| <= R standing for d < 1/k."""
    if k < 1:
        raise ValueError("k must be positive")
    return int(math.ceil(math.log2(k))) if k > 1 else 0


def sample_orbit(space: ShiftSpace, measure: BaseMeasure, past: int, future: int,
                 seed: int) -> SymbolSequence:
    """Sample ``x_{-past} .. x_{future}`` from a Bernoulli or Markov measure."""
    if past < 0 or future < 1:
        raise ValueError("need past >= 0 and future >= 1")
    measure.check_support(space)
    rng = np.random.default_rng(seed)
    n = past + future + 1
    k = space.alphabet_size
    if measure.kind == "bernoulli":
        sym = rng.choice(k, size=n, p=measure.probs)
    else:
        cum = np.cumsum(measure.matrix, axis=1)
        cum[:, -1] = 1.0
        u = rng.random(n)
        sym = np.empty(n, dtype=np.int64)
        s = int(np.searchsorted(np.cumsum(measure.probs), u[0], side="right"))
        s = min(s, k - 1)
        sym[0] = s
        rows = cum.tolist()
        for t in range(1, n):
            row = rows[s]
            ut = u[t]
            s = 0
            while row[s] <= ut and s < k - 1:
                s += 1
            sym[t] = s
    return SymbolSequence.from_window(space, sym, past, measure_id=measure.name, seed=seed)


def recurrence_times(x: SymbolSequence, k: int, max_n: int) -> np.ndarray:
    """All ``n <= max_n`` with ``x`` and ``sigma^n x`` agreeing on ``|i| <= ceil(log2 k)``."""
    R = agreement_radius(k)
    arr = x.window(-R, max_n + R)
    pattern = arr[:2 * R + 1]
    view = np.lib.stride_tricks.sliding_window_view(arr, 2 * R + 1)[1:]
    hits = (view == pattern).all(axis=1)
    return np.nonzero(hits)[0] + 1


def first_recurrence(x: SymbolSequence, k: int, max_n: int, block: int = 1 << 16) -> int | None:
    """Smallest recurrence time, scanning in blocks; None if none <= max_n."""
    R = agreement_radius(k)
    pattern = x.window(-R, R)
    start = 1
    while start <= max_n:
        stop = min(max_n, start + block - 1)
        arr = x.window(start - R, stop + R)
        view = np.lib.stride_tricks.sliding_window_view(arr, 2 * R + 1)
        hits = np.nonzero((view == pattern).all(axis=1))[0]
        if hits.size:
            return int(start + hits[0])
        start = stop + 1
    return None


@dataclass
class ShadowingReport:
    """Distances ``d(sigma^j x, sigma^j p)`` for ``j = 0..n`` and fitted constants."""

    n: int
    horizon: int
    distances: np.ndarray
    recurrence_distance: float
    C1: float
    theta: float
    phase: int = 0
    periodic_sequence: SymbolSequence | None = field(default=None, repr=False)

    def bound(self, C1: float, theta: float) -> np.ndarray:
        j = np.arange(self.n + 1)
        return C1 * np.exp(-theta * np.minimum(j, self.n - j)) * self.recurrence_distance

    def holds(self, C1: float | None = None, theta: float | None = None,
              rtol: float = 1e-12) -> bool:
        C1 = self.C1 if C1 is None else C1
        theta = self.theta if theta is None else theta
        b = self.bound(C1, theta)
        return bool((self.distances <= b * (1 + rtol) + 0.0).all())


def _nearest_mismatch(mismatch: np.ndarray, centers: np.ndarray, horizon: int) -> np.ndarray:
    """Distance from each center to the nearest True in ``mismatch`` (inf if > horizon)."""
    pos = np.nonzero(mismatch)[0]
    out = np.full(centers.size, np.inf)
    if pos.size == 0:
        return out
    k = np.searchsorted(pos, centers)
    right = np.where(k < pos.size, pos[np.minimum(k, pos.size - 1)] - centers, np.inf)
    left = np.where(k > 0, centers - pos[np.maximum(k - 1, 0)], np.inf)
    dist = np.minimum(np.abs(right), np.abs(left))
    out = np.where(dist <= horizon, dist, np.inf)
    return out


def close_orbit(x: SymbolSequence, n: int, horizon: int | None = None,
                max_horizon: int = 60) -> tuple[PeriodicPoint, ShadowingReport]:
    """Close the segment ``x_0 .. x_{n-1}`` into a periodic point and measure shadowing.

    The periodic orbit ``p`` satisfies ``p_i = x_{i mod n}``.  Distances are
    computed with a common horizon (default: as large as the window allows, at
    most ``max_horizon``).
    """
    if n < 1:
        raise ValueError("n must be positive")
    space = x.space
    word = x.window(0, n - 1)
    if not space.admissible(word, cyclic=True):
        raise ClosureError(f"wrap transition {word[-1]}->{word[0]} is not admissible")
    point, phase = PeriodicPoint.from_word(word)
    pseq = SymbolSequence.periodic(space, point, phase)
    if horizon is None:
        a, b = x.bounds
        horizon = int(min(-a, b - n, max_horizon))
    H = int(horizon)
    if H < 0:
        raise WindowRangeError("window too short to measure shadowing")
    xs = x.window(-H, n + H)
    ps = pseq.window(-H, n + H)
    centers = np.arange(n + 1) + H
    dist_m = _nearest_mismatch(xs != ps, centers, H)
    finite = np.isfinite(dist_m)
    distances = np.where(finite, 2.0 ** -np.where(finite, dist_m, 0.0), 0.0)
    # d(sigma^n x, x) with the same horizon
    xa = x.window(-H, H)
    xb = x.window(n - H, n + H)
    D = 0.0
    mm = np.nonzero(xa != xb)[0]
    if mm.size:
        D = 2.0 ** (-int(np.abs(mm - H).min()))
    C1, theta = _fit_closing(distances, D, n)
    report = ShadowingReport(n, H, distances, D, C1, theta, phase, pseq)
    return point, report


def _fit_closing(dist: np.ndarray, D: float, n: int) -> tuple[float, float]:
    if D == 0.0:
        return 1.0, math.inf
    j = np.arange(n + 1)
    m = np.minimum(j, n - j)
    C1 = max(1.0, float(dist[m == 0].max()) / D) if (m == 0).any() else 1.0
    inner = (m > 0) & (dist > 0)
    if not inner.any():
        return C1, math.inf
    ratios = np.log(C1 * D / dist[inner]) / m[inner]
    return C1, float(ratios.min())
