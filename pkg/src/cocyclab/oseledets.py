"""Numerical multiplicative ergodic theorem for matrix cocycles.

Exponents come from streaming QR (Benettin) sweeps.  Oseledets blocks are
the intersection of two filtrations: the forward Gram-Schmidt frame pushed
from the past gives ``F_c = E_1 + ... + E_i`` (``c`` leading columns) and a
sweep of the transposed cocycle pulled back from the future gives the
orthogonal complement of the slow space ``E_i + ... + V``.  Both sweeps are
exactly equivariant in span, so the blocks they produce are too.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._linalg import (TINY, floor_exponents, min_principal_angle, scaled_chunk_products,
                      scaled_product, signed_qr, subspace_distance)
from .cocycle import CocycleGenerator, DegenerateCocycleWarning
from .symbolic import PeriodicPoint, ShiftSpace, SymbolSequence

PERIODIC_GROUP_GAP = 1e-7
DEAD_RTOL = 1e-13
RETURN_MAP_SPREAD = 1e-8
SEGMENT_BYTES = 1 << 26


class ConvergenceError(RuntimeError):
    """Frames did not stabilize when the pullback depth was doubled."""


class DefectiveMatrixWarning(RuntimeWarning):
    """A periodic return map has (numerically) nontrivial Jordan blocks."""


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Exponents with multiplicity and their grouping into exceptional values."""

    gammas: np.ndarray
    groups: tuple
    grouping_gap: float
    stderr: np.ndarray | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([g[0] for g in self.groups])

    @property
    def multiplicities(self) -> tuple:
        return tuple(int(g[1]) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def dimension(self) -> int:
        return len(self.gammas)

    def offsets(self) -> np.ndarray:
        """Cumulative multiplicities ``c_0 = 0, c_i = d_1 + ... + d_i``."""
        return np.concatenate([[0], np.cumsum(self.multiplicities)]).astype(int)

    def count(self, s: int) -> int:
        return int(self.offsets()[s])

    def lambda_tilde(self, s: int) -> float:
        """Default threshold below level ``s``: group midpoint, or ``lambda_s - 1`` at the last level."""
        lam = self.lambdas
        if s < 1 or s > len(lam):
            raise ValueError(f"level {s} outside 1..{len(lam)}")
        if s < len(lam):
            return 0.5 * (lam[s - 1] + lam[s])
        return lam[s - 1] - 1.0

    def to_rows(self, source: str, label) -> list[tuple]:
        rows = []
        c = self.offsets()
        for i, g in enumerate(self.gammas):
            grp = int(np.searchsorted(c, i, side="right")) - 1
            if grp < self.n_groups:
                lam, mult = self.groups[grp]
            else:
                lam, mult = -math.inf, 0
            rows.append((source, label, i + 1, float(g), float(lam), mult))
        return rows


def default_grouping_gap(gammas, stderr=None) -> float:
    """Half the smallest consecutive gap exceeding ten standard errors."""
    g = floor_exponents(np.sort(np.asarray(gammas, dtype=float))[::-1])
    fin = g[np.isfinite(g)]
    if fin.size < 2:
        return 1e-3
    se = np.zeros_like(fin) if stderr is None else np.asarray(stderr, dtype=float)[:fin.size]
    gaps = fin[:-1] - fin[1:]
    noise = 10.0 * np.maximum(se[:-1], se[1:])
    resolved = gaps[(gaps > noise) & (gaps > 0)]
    if resolved.size == 0:
        return max(float(noise.max()), 1e-3)
    return 0.5 * float(resolved.min())


def group_spectrum(gammas, grouping_gap: float | None = None, stderr=None) -> LyapunovSpectrum:
    """Greedy clustering of a nonincreasing exponent list.

    A new group starts whenever the drop from the previous exponent exceeds
    ``grouping_gap``.  Exponents at the ``-inf`` floor never join a group.
    """
    g = floor_exponents(gammas)
    if g.size and np.any(np.diff(g[np.isfinite(g)]) > 1e-12):
        raise ValueError("gammas must be sorted nonincreasing")
    if grouping_gap is None:
        grouping_gap = default_grouping_gap(g, stderr)
    groups = []
    members: list[float] = []
    for val in g[np.isfinite(g)]:
        if members and members[-1] - val > grouping_gap:
            groups.append((float(np.mean(members)), len(members)))
            members = []
        members.append(float(val))
    if members:
        groups.append((float(np.mean(members)), len(members)))
    se = None if stderr is None else np.asarray(stderr, dtype=float)
    return LyapunovSpectrum(g, tuple(groups), float(grouping_gap), se)


# ---------------------------------------------------------------------------
# QR sweeps


def _reseed(Q: np.ndarray, dead: np.ndarray, rng) -> np.ndarray:
    """Replace dead columns of each frame in a stack with random directions.

    Gram-Schmidt runs in column order, so live columns before the first dead
    one are unchanged.
    """
    Z = Q.copy()
    rows = np.nonzero(dead.any(axis=1))[0]
    for r in rows:
        k = int(dead[r].sum())
        Z[r][:, dead[r]] = rng.standard_normal((Z.shape[1], k))
    Qn, _ = signed_qr(Z[rows])
    Z[rows] = Qn
    return Z


@dataclass
class SweepResult:
    Q: np.ndarray                 # final frame
    logs: np.ndarray              # accumulated log|R_ii| per column
    chunk_logs: np.ndarray        # (nchunks, p) increments, for batch statistics
    dead: np.ndarray              # columns floored at -inf
    frames: np.ndarray | None = None   # (n+1, d, p) when requested
    passes: int = 1


def _frame_gap(A: np.ndarray, B: np.ndarray) -> float:
    """Largest columnwise difference between frames, ignoring column signs."""
    sgn = np.sign(np.sum(A * B, axis=-2, keepdims=True))
    sgn[sgn == 0] = 1.0
    return float(np.abs(A - B * sgn).max()) if A.size else 0.0


def _chunk_pass(C, ls, starts, rng):
    """Sweep every segment of a (K, L, d, d) chunk array from its start frame."""
    K, L = C.shape[:2]
    p = starts.shape[2]
    Q = starts.copy()
    inc = np.empty((K, L, p))
    bstarts = np.empty((K, L) + starts.shape[1:])
    dead = np.zeros((K, p), dtype=bool)
    for t in range(L):
        bstarts[:, t] = Q
        Qn, R = signed_qr(np.matmul(C[:, t], Q))
        diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
        scale = np.maximum(np.abs(R).max(axis=(1, 2)), TINY)
        zero = (diag <= DEAD_RTOL * scale[:, None]) | ~np.isfinite(ls[:, t])[:, None]
        with np.errstate(divide="ignore"):
            step = np.log(np.where(zero, 1.0, diag)) + ls[:, t, None]
        step[zero] = -np.inf
        inc[:, t] = step
        dead |= zero
        Q = Qn
        if zero.any():
            Q = _reseed(Q, zero, rng)
    return Q, inc, dead, bstarts


def qr_sweep(mats: np.ndarray, Q0: np.ndarray, stride: int, keep_frames: bool = False,
             rng=None, segment_chunks: int = 256, max_passes: int = 8) -> SweepResult:
    """Push an orthonormal frame through ``mats[0], mats[1], ...`` with QR every ``stride`` steps.

    The orbit is cut into segments that are swept simultaneously.  The first
    pass starts every segment from ``Q0``; each later pass restarts segment
    ``j`` from the end frame of segment ``j - 1``.  After ``m`` passes the
    first ``m`` segments agree with a plain sequential sweep, and because the
    Gram-Schmidt frame forgets its start exponentially the remaining ones do
    too once the end frames stop moving.

    With ``keep_frames`` the frame after every single step is also returned,
    advancing one matrix at a time from the block start frames.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    mats = np.asarray(mats, dtype=float)
    n, d, _ = mats.shape
    p = Q0.shape[1]
    if n == 0:
        frames = Q0[None].copy() if keep_frames else None
        return SweepResult(Q0.copy(), np.zeros(p), np.zeros((0, p)), np.zeros(p, bool), frames)
    stride = max(1, int(stride))
    C, ls = scaled_chunk_products(mats, stride)
    nb = C.shape[0]
    L = max(1, min(segment_chunks, nb))
    K = -(-nb // L)
    pad = K * L - nb
    if pad:
        C = np.concatenate([C, np.broadcast_to(np.eye(d), (pad, d, d))])
        ls = np.concatenate([ls, np.zeros(pad)])
    C = C.reshape(K, L, d, d)
    ls = ls.reshape(K, L)
    starts = np.broadcast_to(Q0, (K, d, p)).copy()
    prev_end = None
    passes = 0
    for passes in range(1, max(1, min(max_passes, K)) + 1):
        end, inc, dead, bstarts = _chunk_pass(C, ls, starts, rng)
        if prev_end is not None and _frame_gap(end, prev_end) <= 1e-8:
            break
        prev_end = end
        if K == 1:
            break
        starts = np.concatenate([Q0[None], end[:-1]])
    chunk_logs = inc.reshape(K * L, p)[:nb]
    dead_all = dead.any(axis=0)
    logs = chunk_logs.sum(axis=0)
    logs[dead_all] = -np.inf
    frames = None
    if keep_frames:
        frames = np.empty((n + 1, d, p))
        frames[0] = Q0
        cur = bstarts.reshape(K * L, d, p)[:nb].copy()
        for t in range(stride):
            idx = np.arange(nb) * stride + t
            ok = idx < n
            if not ok.any():
                break
            Qn, _ = signed_qr(np.matmul(mats[idx[ok]], cur[ok]))
            cur[ok] = Qn
            frames[idx[ok] + 1] = Qn
    return SweepResult(end[-1], logs, chunk_logs, dead_all, frames, passes)


def batch_rates(chunk_logs: np.ndarray, n: int, batches: int = 20) -> np.ndarray | None:
    """Per-column growth rates over ``batches`` consecutive stretches (batch means)."""
    nb = chunk_logs.shape[0]
    if nb < 2 * batches or not np.isfinite(chunk_logs).all():
        return None
    parts = np.array_split(chunk_logs, batches, axis=0)
    steps = n / nb
    return np.array([part.sum(axis=0) / (len(part) * steps) for part in parts])


def _batch_stderr(chunk_logs: np.ndarray, n: int, batches: int = 20) -> np.ndarray:
    rates = batch_rates(chunk_logs, n, batches)
    if rates is None:
        return np.zeros(chunk_logs.shape[1])
    return rates.std(axis=0, ddof=1) / math.sqrt(batches)


def _segments(n: int, d: int, stride: int) -> list[tuple[int, int]]:
    per = max(stride, (SEGMENT_BYTES // max(1, 8 * d * d)) // stride * stride)
    return [(a, min(n, a + per)) for a in range(0, n, per)]


def lyapunov_estimate(gen: CocycleGenerator, x: SymbolSequence, n: int, stride: int = 50,
                      seed: int = 0, Q0: np.ndarray | None = None, adjoint: bool = False,
                      return_batches: bool = False):
    """Column exponents of a QR sweep over ``n`` steps.

    Returns ``(gammas, stderr, column_gammas)``; ``gammas`` is sorted
    nonincreasing, ``column_gammas`` keeps the Gram-Schmidt column order.
    With ``adjoint`` the transposed cocycle is swept backward from ``f^n x``
    (same singular-value exponents; useful when the adjoint has a known
    invariant vector).  ``return_batches`` appends the batch-mean rates
    ``(batches, d)`` in column order (None if the run is too short).
    """
    d = gen.dimension
    s = gen.safe_stride(stride)
    rng = np.random.default_rng(seed)
    Q = np.eye(d) if Q0 is None else np.asarray(Q0, dtype=float)
    total = np.zeros(Q.shape[1])
    rows = []
    dead = np.zeros(Q.shape[1], dtype=bool)
    segs = _segments(n, d, s)
    if adjoint:
        segs = segs[::-1]
    for a, b in segs:
        mats = gen.matrices_along(x, a, b - a)
        if adjoint:
            mats = np.ascontiguousarray(mats[::-1].transpose(0, 2, 1))
        res = qr_sweep(mats, Q, s, rng=rng)
        Q = res.Q
        total += res.logs
        dead |= res.dead
        rows.append(res.chunk_logs)
    col = total / n
    col[dead] = -np.inf
    chunk_logs = np.concatenate(rows)
    se = _batch_stderr(chunk_logs, n)
    if dead.all():
        warnings.warn("frame collapsed completely; all exponents floored at -inf",
                      DegenerateCocycleWarning, stacklevel=2)
    order = np.argsort(-col, kind="stable")
    out = (floor_exponents(col[order]), se[order], floor_exponents(col))
    if return_batches:
        return out + (batch_rates(chunk_logs, n),)
    return out


def singular_exponents(gen: CocycleGenerator, x: SymbolSequence, n: int, stride: int = 50,
                       return_stderr: bool = False, seed: int = 0):
    """Lyapunov exponents counted with multiplicity from a streaming QR sweep.

    The effective re-orthonormalization stride is capped so that block
    products stay resolvable in double precision.
    """
    if n < 10 * stride:
        raise ValueError("need n >= 10 * stride")
    g, se, _ = lyapunov_estimate(gen, x, n, stride, seed)
    return (g, se) if return_stderr else g


def lyapunov_spectrum(gen: CocycleGenerator, x: SymbolSequence, n: int, stride: int = 50,
                      grouping_gap: float | None = None, seed: int = 0) -> LyapunovSpectrum:
    g, se = singular_exponents(gen, x, n, stride, return_stderr=True, seed=seed)
    return group_spectrum(g, grouping_gap, se)


def directional_exponent(gen: CocycleGenerator, x: SymbolSequence, v, n: int) -> float:
    """Limsup surrogate for ``lambda(x, v)``: max of ``log||A^j v|| / j`` over the last tenth of steps."""
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("v must be nonzero")
    mats = gen.matrices_along(x, 0, n)
    w = v / nv
    acc = math.log(nv)
    best = -math.inf
    start = max(1, n - max(1, n // 10))
    for j in range(n):
        w = mats[j] @ w
        nw = np.linalg.norm(w)
        if nw <= TINY:
            return -math.inf
        acc += math.log(nw)
        w /= nw
        if j + 1 >= start:
            best = max(best, acc / (j + 1))
    return best


# ---------------------------------------------------------------------------
# frames


def _block_bases(Qf: np.ndarray, Wa: np.ndarray, counts) -> tuple[list, np.ndarray]:
    """Oseledets bases from forward and adjoint frames (stacked over positions).

    ``E_i = span(Qf[:, :c_i]) intersected with span(Wa[:, :c_{i-1}])^perp``
    and ``V = span(Wa[:, :c_s])^perp``.
    """
    Qf = np.asarray(Qf)
    Wa = np.asarray(Wa)
    squeeze = Qf.ndim == 2
    if squeeze:
        Qf, Wa = Qf[None], Wa[None]
    E = []
    for i in range(1, len(counts)):
        lo, hi = counts[i - 1], counts[i]
        F = Qf[:, :, :hi]
        if lo == 0:
            E.append(F.copy())
            continue
        G = np.matmul(Wa[:, :, :lo].transpose(0, 2, 1), F)      # (N, lo, hi)
        _, _, Vh = np.linalg.svd(G, full_matrices=True)
        null = Vh[:, lo:, :].transpose(0, 2, 1)                 # (N, hi, hi-lo)
        B = np.matmul(F, null)
        B, _ = np.linalg.qr(B)
        E.append(B)
    V = Wa[:, :, counts[-1]:].copy()
    if squeeze:
        return [e[0] for e in E], V[0]
    return E, V


@dataclass
class OrbitFrames:
    """Oseledets data at consecutive positions ``lo .. hi`` of an orbit.

    ``mats[t]`` is ``A(f^{lo+t} x)``; for a cyclic orbit positions wrap with
    the period.  ``E[i][t]`` and ``V[t]`` are orthonormal bases.
    """

    lo: int
    hi: int
    mats: np.ndarray
    E: list
    V: np.ndarray
    spectrum: "LyapunovSpectrum"
    s: int
    cyclic: bool = False

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def index(self, j: int) -> int:
        if self.cyclic:
            return (j - self.lo) % self.size
        if j < self.lo or j > self.hi:
            raise IndexError(f"position {j} outside frames {self.lo}..{self.hi}")
        return j - self.lo

    def frame_matrix(self, j: int) -> np.ndarray:
        t = self.index(j)
        return np.concatenate([e[t] for e in self.E] + [self.V[t]], axis=1)

    def restricted(self, i: int) -> np.ndarray:
        """One-step maps of block ``i`` (1-based; ``s+1`` is ``V``) in basis coordinates.

        Entry ``t`` maps coordinates at position ``lo+t`` to ``lo+t+1``.
        """
        cache = self.__dict__.setdefault("_restricted", {})
        if i in cache:
            return cache[i]
        B = self.E[i - 1] if i <= self.s else self.V
        N = self.size
        nxt = np.roll(B, -1, axis=0) if self.cyclic else B[1:]
        m = self.mats if self.cyclic else self.mats[:N - 1]
        cur = B if self.cyclic else B[:N - 1]
        R = np.matmul(nxt.transpose(0, 2, 1), np.matmul(m, cur))
        cache[i] = R
        return R

    def equivariance_residual(self) -> float:
        """Largest distance between ``A span(E_i(j))`` and ``span(E_i(j+1))``."""
        worst = 0.0
        N = self.size
        last = N if self.cyclic else N - 1
        for B in self.E:
            if B.shape[2] == 0 or last == 0:
                continue
            img = np.matmul(self.mats[:last], B[:last])
            q, _ = np.linalg.qr(img)
            nxt = np.roll(B, -1, axis=0)[:last]
            diff = q - np.matmul(nxt, np.matmul(nxt.transpose(0, 2, 1), q))
            worst = max(worst, float(np.linalg.norm(diff, ord=2, axis=(1, 2)).max()))
        return worst


@dataclass
class OseledetsFrame:
    """Oseledets bases at one point, optionally backed by frames along its orbit."""

    point: SymbolSequence | None
    s: int
    E_bases: list
    V_basis: np.ndarray
    residuals: dict = field(default_factory=dict)
    orbit: OrbitFrames | None = None
    position: int = 0
    spectrum: LyapunovSpectrum | None = None

    @property
    def dimension(self) -> int:
        return self.V_basis.shape[0]

    @property
    def is_periodic(self) -> bool:
        return self.orbit is not None and self.orbit.cyclic

    def matrix(self) -> np.ndarray:
        return np.concatenate(list(self.E_bases) + [self.V_basis], axis=1)

    def min_block_angle(self) -> float:
        """Smallest principal angle between one block and the span of the others."""
        blocks = list(self.E_bases) + ([self.V_basis] if self.V_basis.shape[1] else [])
        if len(blocks) < 2:
            return math.pi / 2
        worst = math.pi / 2
        for i, B in enumerate(blocks):
            rest = np.concatenate([b for k, b in enumerate(blocks) if k != i], axis=1)
            worst = min(worst, min_principal_angle(B, rest))
        return worst

    def at(self, j: int) -> "OseledetsFrame":
        """Frame at another orbit position (requires orbit data)."""
        if self.orbit is None:
            raise ValueError("frame has no orbit data")
        t = self.orbit.index(j)
        pt = self.point.shift(j - self.position) if self.point is not None else None
        return OseledetsFrame(pt, self.s, [e[t] for e in self.orbit.E], self.orbit.V[t],
                              self.residuals, self.orbit, j, self.spectrum)

    def to_text(self) -> str:
        buf = io.StringIO()
        for i, B in enumerate(self.E_bases, 1):
            buf.write(f"E {i} dim {B.shape[1]}\n")
            np.savetxt(buf, B, fmt="%.17g")
        buf.write(f"V dim {self.V_basis.shape[1]}\n")
        if self.V_basis.shape[1]:
            np.savetxt(buf, self.V_basis, fmt="%.17g")
        return buf.getvalue()

    @staticmethod
    def parse_blocks(text: str) -> tuple[list, np.ndarray]:
        """Read back the bases written by :meth:`to_text`."""
        blocks = []
        cur = None
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] in ("E", "V"):
                cur = {"kind": parts[0], "dim": int(parts[-1]), "rows": []}
                blocks.append(cur)
            else:
                cur["rows"].append([float(v) for v in parts])
        out = []
        d = None
        for b in blocks:
            if b["rows"]:
                d = len(b["rows"])
        for b in blocks:
            M = np.array(b["rows"]) if b["rows"] else np.zeros((d or 0, 0))
            out.append(M.reshape(d, b["dim"]) if d is not None else M)
        return out[:-1], out[-1]


def _random_frame(d: int, rng) -> np.ndarray:
    Q, _ = signed_qr(rng.standard_normal((d, d)))
    return Q


def orbit_frames(gen: CocycleGenerator, x: SymbolSequence, spectrum: LyapunovSpectrum, s: int,
                 lo: int, hi: int, depth: int, stride: int = 50, seed: int = 0) -> OrbitFrames:
    """Oseledets frames of level ``s`` at positions ``lo .. hi`` of ``x``.

    The forward sweep starts at ``lo - depth``; the adjoint sweep starts at
    ``hi + depth``.  The window of ``x`` must cover both ends plus the
    generator radius.
    """
    if s < 1 or s > spectrum.n_groups:
        raise ValueError(f"level {s} needs {s} resolved groups, spectrum has {spectrum.n_groups}")
    d = gen.dimension
    st = gen.safe_stride(stride)
    rng = np.random.default_rng(seed)
    counts = spectrum.offsets()[:s + 1]
    c_s = int(counts[-1])
    # forward: frames at lo-depth .. hi
    fwd = gen.matrices_along(x, lo - depth, depth + (hi - lo))
    head = qr_sweep(fwd[:depth], _random_frame(d, rng), st, rng=rng).Q if depth else np.eye(d)
    Qf = qr_sweep(fwd[depth:], head, st, keep_frames=True, rng=rng).frames
    # adjoint: frames at hi+depth .. lo, built from transposes in reverse order
    mats_all = gen.matrices_along(x, lo, (hi - lo) + depth)
    adj = np.ascontiguousarray(mats_all[::-1].transpose(0, 2, 1))
    tailQ = qr_sweep(adj[:depth], _random_frame(d, rng), st, rng=rng).Q if depth else np.eye(d)
    Wa = qr_sweep(adj[depth:], tailQ, st, keep_frames=True, rng=rng).frames[::-1]
    E, V = _block_bases(Qf, Wa, counts)
    mats = mats_all[:hi - lo + 1]
    return OrbitFrames(lo, hi, np.ascontiguousarray(mats), E, V, spectrum, s, cyclic=False)


def fast_subspaces(gen: CocycleGenerator, x: SymbolSequence, s: int, depth: int,
                   spectrum: LyapunovSpectrum | None = None, halfwidth: int = 0,
                   stride: int = 50, tol: float = 1e-6, seed: int = 0) -> OseledetsFrame:
    """Oseledets frame of level ``s`` at ``x`` by finite-depth pullback.

    Residuals: ``equivariance`` compares ``A(x) E_i(x)`` with the block
    computed independently at ``f(x)``; ``stability`` compares depth ``m``
    with depth ``2m``.  Frames along ``-halfwidth .. halfwidth`` are kept
    for Lyapunov-norm evaluation.
    """
    if spectrum is None:
        a, b = x.bounds
        n = int(min(b - gen.radius, 10 ** 5))
        spectrum = lyapunov_spectrum(gen, x, n, stride)
    if x.is_periodic:
        raise ValueError("use periodic_spectrum for periodic points")
    orb = orbit_frames(gen, x, spectrum, s, -halfwidth, halfwidth, depth, stride, seed)
    t0 = orb.index(0)
    E0 = [e[t0] for e in orb.E]
    V0 = orb.V[t0]
    deep = orbit_frames(gen, x, spectrum, s, 0, 0, 2 * depth, stride, seed + 1)
    x1 = x.shift(1)
    nxt = orbit_frames(gen, x1, spectrum, s, 0, 0, depth, stride, seed + 2)
    A0 = gen.matrices_along(x, 0, 1)[0]
    stab = max([subspace_distance(a, b[0]) for a, b in zip(E0, deep.E)]
               + [subspace_distance(V0, deep.V[0])])
    eqv = 0.0
    for B, Bn in zip(E0, nxt.E):
        img, _ = np.linalg.qr(A0 @ B)
        eqv = max(eqv, subspace_distance(img, Bn[0]))
    residuals = {"equivariance": eqv, "stability": stab, "depth": depth}
    if stab > tol:
        raise ConvergenceError(f"frames moved by {stab:.3g} when depth doubled (tol {tol:g})")
    return OseledetsFrame(x, s, E0, V0, residuals, orb, 0, spectrum)


# ---------------------------------------------------------------------------
# periodic points


def _cycle_mats(gen: CocycleGenerator, word, phase: int = 0) -> np.ndarray:
    w = tuple(word)
    w = w[phase:] + w[:phase]
    return gen.matrices_for_word(w, cyclic=True)


def _eig_moduli(M: np.ndarray) -> tuple[np.ndarray, bool]:
    """Sorted eigenvalue moduli and a defectiveness flag."""
    vals, vecs = np.linalg.eig(M)
    mods = np.sort(np.abs(vals))[::-1]
    defective = False
    if M.shape[0] > 1 and np.isfinite(vecs).all():
        sv = np.linalg.svd(vecs, compute_uv=False)
        defective = bool(sv[-1] < 1e-8 * sv[0])
    return mods, defective


def _return_map(mats: np.ndarray, stride: int):
    """Scaled return map ``(M, logscale)`` when its eigenvalues are resolvable, else None.

    Cycles no longer than the safe stride always qualify.  Longer ones
    qualify while the eigenvalue moduli of the formed product stay within
    ``RETURN_MAP_SPREAD`` of each other; past that the small moduli are
    rounding noise and periodic QR iteration is used instead.
    """
    p = mats.shape[0]
    if p <= stride:
        C, ls = scaled_chunk_products(mats, p)
        return C[0], float(ls[0])
    M, ls = scaled_product(mats, stride)
    if not np.isfinite(ls):
        return None
    mods = np.abs(np.linalg.eigvals(M))
    if mods.min() < RETURN_MAP_SPREAD * mods.max():
        return None
    return M, float(ls)


def periodic_exponents(gen: CocycleGenerator, word, sweeps: int = 60) -> np.ndarray:
    """``gamma_i(p) = log|eig_i(A^p(p))| / p``, sorted nonincreasing.

    Uses the eigenvalues of the scaled return map when they are resolvable
    and periodic QR iteration otherwise.
    """
    mats = _cycle_mats(gen, word)
    p = mats.shape[0]
    d = gen.dimension
    stride = gen.safe_stride(max(p, 1))
    rm = _return_map(mats, stride)
    if rm is not None:
        M, ls = rm
        if not np.isfinite(ls):
            return np.full(d, -np.inf)
        mods, _ = _eig_moduli(M)
        with np.errstate(divide="ignore"):
            g = (np.log(mods) + ls) / p
        g[mods <= TINY * max(mods[0], TINY)] = -np.inf
        return floor_exponents(g)
    return _cycle_iteration(mats, stride, sweeps)[0]


def _cycle_iteration(mats: np.ndarray, stride: int, sweeps: int, tol: float = 1e-11):
    """Periodic QR iteration around a cycle; returns (gammas, final frame)."""
    p, d, _ = mats.shape
    rng = np.random.default_rng(0)
    Q = _random_frame(d, rng)
    prev = None
    col = None
    for _ in range(sweeps):
        res = qr_sweep(mats, Q, stride, rng=rng)
        Q = res.Q
        col = res.logs / p
        col[res.dead] = -np.inf
        if prev is not None:
            fin = np.isfinite(col) & np.isfinite(prev)
            if (np.isfinite(col) == np.isfinite(prev)).all() and \
                    np.all(np.abs(col[fin] - prev[fin]) <= tol * (1 + np.abs(col[fin]))):
                break
        prev = col
    return floor_exponents(np.sort(col)[::-1]), Q


def _spectral_subspace(M: np.ndarray, threshold: float) -> np.ndarray:
    """Orthonormal basis of the invariant subspace for eigenvalues with modulus above ``threshold``."""
    T, Z, sdim = sla.schur(M, output="real", sort=lambda re, im: math.hypot(re, im) > threshold)
    return Z[:, :sdim]


def _group_thresholds(spec: LyapunovSpectrum, s: int, p: int, logscale: float) -> list[float]:
    """Modulus cuts (in the scaled return map) separating group i from group i+1."""
    lam = spec.lambdas
    cuts = []
    for i in range(s):
        upper = lam[i]
        lower = lam[i + 1] if i + 1 < len(lam) else upper - 1.0
        mid = 0.5 * (upper + lower) * p - logscale
        cuts.append(math.exp(max(min(mid, 700.0), -700.0)))
    return cuts


def periodic_spectrum(gen: CocycleGenerator, p: PeriodicPoint, s: int | None = None,
                      grouping_gap: float = PERIODIC_GROUP_GAP, space=None
                      ) -> tuple[LyapunovSpectrum, OseledetsFrame]:
    """Exponents and Oseledets frame (levels ``1..s``) of a periodic point.

    Short cycles take the phase-0 filtrations from real Schur invariant
    subspaces of the return map and of its transpose; long cycles (whose
    return map is too ill-conditioned to form) use periodic QR iteration.
    Frames at the other phases are carried around the cycle.
    """
    word = p.word
    mats = _cycle_mats(gen, word)
    per = mats.shape[0]
    d = gen.dimension
    stride = gen.safe_stride(max(per, 1))
    rm = _return_map(mats, stride)
    direct = rm is not None
    if direct:
        M, logscale = rm
        if np.isfinite(logscale):
            mods, defective = _eig_moduli(M)
            if defective:
                warnings.warn(f"return map of {p.label()} is defective (Jordan blocks)",
                              DefectiveMatrixWarning, stacklevel=2)
            with np.errstate(divide="ignore"):
                g = (np.log(mods) + logscale) / per
            g[mods <= TINY * max(mods[0], TINY)] = -np.inf
        else:
            g = np.full(d, -np.inf)
        gammas = floor_exponents(g)
    else:
        gammas, _ = _cycle_iteration(mats, stride, 60)
    spec = group_spectrum(gammas, grouping_gap)
    s = spec.n_groups if s is None else s
    if s > spec.n_groups:
        raise ValueError(f"level {s} exceeds the {spec.n_groups} finite groups")
    counts = spec.offsets()[:s + 1]
    if direct and np.isfinite(logscale):
        Q0, W0 = _nested_schur_frames(M, spec, s, per, logscale)
    elif direct:
        Q0, W0 = np.eye(d), np.eye(d)
    else:
        Q0, W0 = _periodic_frames_by_iteration(mats, stride, _sweeps_needed(spec, s, per))
    orb = _cycle_frames(mats, Q0, W0, spec, s, stride)
    space = ShiftSpace.full(gen.alphabet_size) if space is None else space
    frame = OseledetsFrame(SymbolSequence.periodic(space, p), s,
                           [e[0] for e in orb.E], orb.V[0],
                           {"equivariance": orb.equivariance_residual()},
                           orb, 0, spec)
    return spec, frame


def _nest(subspaces, d: int) -> np.ndarray:
    """Orthonormal frame whose leading columns span each subspace of a nested list."""
    parts = [S for S in subspaces if S.shape[1]] + [np.eye(d)]
    Z = np.concatenate(parts, axis=1)
    Q = np.zeros((d, 0))
    for col in Z.T:
        if Q.shape[1] == d:
            break
        r = col - Q @ (Q.T @ col)
        r = r - Q @ (Q.T @ r)
        nr = np.linalg.norm(r)
        if nr > 1e-10 * max(1.0, np.linalg.norm(col)):
            Q = np.concatenate([Q, (r / nr)[:, None]], axis=1)
    return Q


def _nested_schur_frames(M, spec, s, per, logscale):
    """Phase-0 nested frames of the return map and of its transpose."""
    d = M.shape[0]
    counts = spec.offsets()[:s + 1]
    cuts = _group_thresholds(spec, s, per, logscale)
    F = [_spectral_subspace(M, c) for c in cuts]
    G = [_spectral_subspace(M.T, c) for c in cuts]
    for i, (Fi, Gi) in enumerate(zip(F, G), 1):
        if Fi.shape[1] != counts[i] or Gi.shape[1] != counts[i]:
            raise ValueError("spectral subspaces do not match the grouping")
    return _nest(F, d), _nest(G, d)


def _sweeps_needed(spec: LyapunovSpectrum, s: int, per: int, cap: int = 2000) -> int:
    """Cycle sweeps for the frame error ``exp(-gap * per * sweeps)`` to reach 1e-14."""
    lam = spec.lambdas
    gaps = [lam[i] - lam[i + 1] for i in range(min(s, len(lam) - 1))]
    gap = min(gaps) if gaps else math.inf
    if not np.isfinite(gap):
        return 8
    return int(min(cap, max(8, math.ceil(33.0 / max(gap * per, 1e-12)) + 2)))


def _converged_sweeps(mats, Q, stride, sweeps, rng, tol=1e-12):
    for _ in range(sweeps):
        Qn = qr_sweep(mats, Q, stride, rng=rng).Q
        done = _frame_gap(Qn, Q) <= tol
        Q = Qn
        if done:
            break
    return Q


def _periodic_frames_by_iteration(mats, stride, sweeps: int = 8):
    """Phase-0 forward and adjoint frames of a long cycle by repeated sweeps."""
    d = mats.shape[1]
    rng = np.random.default_rng(1)
    Q = _converged_sweeps(mats, _random_frame(d, rng), stride, sweeps, rng)
    adj = np.ascontiguousarray(mats[::-1].transpose(0, 2, 1))
    W = _converged_sweeps(adj, _random_frame(d, rng), stride, sweeps, rng)
    return Q, W


def _cycle_frames(mats, Q0, W0, spec, s, stride: int = 1) -> OrbitFrames:
    """Carry phase-0 frames around the cycle and intersect at every phase.

    Forward frames are pushed with QR and adjoint frames pulled back with the
    transposes; both directions are attracting, so this is stable where
    pushing a non-dominant block directly would not be.
    """
    per, d, _ = mats.shape
    Qf = qr_sweep(mats[:per - 1], Q0, stride, keep_frames=True).frames
    adj = np.ascontiguousarray(mats[:0:-1].transpose(0, 2, 1))
    Wa = qr_sweep(adj, W0, stride, keep_frames=True).frames
    # Wa[k] is the frame at phase per - k (mod per)
    Wa = np.concatenate([Wa[:1], Wa[:0:-1]])
    counts = spec.offsets()[:s + 1]
    E, V = _block_bases(Qf, Wa, counts)
    return OrbitFrames(0, per - 1, np.ascontiguousarray(mats), E, V, spec, s, cyclic=True)


# ---------------------------------------------------------------------------
# output


SPECTRUM_HEADER = "source,word_or_seed,i,gamma,lambda_group,multiplicity"


def spectrum_csv_rows(spec: LyapunovSpectrum, source: str, label) -> list[str]:
    from ._linalg import report_value
    out = []
    for src, lab, i, g, lam, mult in spec.to_rows(source, label):
        out.append(f"{src},{lab},{i},{report_value(g)!r},{report_value(lam)!r},{mult}")
    return out
