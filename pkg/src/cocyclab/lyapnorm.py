"""delta-Lyapunov norms of level s.

For ``u = u_1 + ... + u_s + u_{s+1}`` split along ``E_1, ..., E_s, V_{s+1}``

    ||u_i||_{x,i}   = sum_{n in Z} ||A_i^n(x) u_i|| exp(-lambda_i n - delta |n|)
    ||u_{s+1}||_x   = sum_{n >= 0} ||A^n(x) u_{s+1}|| exp(-lambda_tilde n)

and ``||u||_x`` is the sum of the pieces.  On periodic orbits the series are
summed in full (scalar blocks in closed form); on sampled orbits they are
truncated to the frames that are available and a tail bound is reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .oseledets import LyapunovSpectrum, OrbitFrames, OseledetsFrame

SERIES_RTOL = 1e-17
MAX_CYCLIC_TERMS = 200_000


class SingularRestrictionError(ValueError):
    """The cocycle restricted to a fast block is numerically singular."""


class ProjectionError(ValueError):
    """Oseledets blocks are numerically dependent; the splitting is unusable."""


class DivergenceWarning(RuntimeWarning):
    """Partial sums of the slow series grow; lambda_tilde is below a growth rate."""


@dataclass(frozen=True)
class LyapunovNormParams:
    """``window='relative'`` truncates at ``|n| <= truncation``; ``'absolute'``
    uses every orbit position the frames cover, which makes the one-step
    pinching of the norm exact on the covered stretch."""

    delta: float
    s: int
    lambda_tilde: float
    truncation: int = 40
    window: str = "relative"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.s < 1:
            raise ValueError("level s must be at least 1")
        if self.truncation < 1:
            raise ValueError("truncation must be positive")
        if self.window not in ("relative", "absolute"):
            raise ValueError("window must be 'relative' or 'absolute'")

    def check(self, spectrum: LyapunovSpectrum) -> None:
        lam = spectrum.lambdas
        if self.s > len(lam):
            raise ValueError(f"level {self.s} exceeds the {len(lam)} groups of the spectrum")
        lam_s = lam[self.s - 1]
        if not self.lambda_tilde < lam_s:
            raise ValueError("lambda_tilde must lie below lambda_s")
        inside = (lam >= self.lambda_tilde) & (lam < lam_s)
        if inside.any():
            raise ValueError(f"exponent {lam[inside][0]} lies in [lambda_tilde, lambda_s)")

    @classmethod
    def default(cls, spectrum: LyapunovSpectrum, s: int, delta: float,
                truncation: int = 40, window: str = "relative") -> "LyapunovNormParams":
        return cls(float(delta), s, float(spectrum.lambda_tilde(s)), truncation, window)


@dataclass(frozen=True)
class NormEvaluation:
    per_level: np.ndarray
    total: float
    truncation_tail_bound: float
    T: int | None = None


@dataclass(frozen=True)
class ConeSpec:
    level: int
    gamma: float = 0.0

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("cone level must be at least 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class NormEquivalence:
    K_delta: float
    samples: int
    seed: int
    witness: np.ndarray | None = None


# ---------------------------------------------------------------------------
# series engine


def _logsafe(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


class NormEngine:
    """Vectorized Lyapunov-norm evaluation along one orbit's frames."""

    def __init__(self, orbit: OrbitFrames, spectrum: LyapunovSpectrum, params: LyapunovNormParams):
        params.check(spectrum)
        if params.s > orbit.s:
            raise ValueError(f"frames have level {orbit.s}, norm needs level {params.s}")
        self.orbit = orbit
        self.spectrum = spectrum
        self.params = params
        self.s = params.s
        self.lams = [float(v) for v in spectrum.lambdas[:params.s]]
        self._bases = {}
        self._maps = {}
        self._profiles = {}
        self._extremes = {}

    # -- bases and restricted maps -------------------------------------------

    def basis(self, i: int) -> np.ndarray:
        """Stacked orthonormal basis of block ``i`` (``s+1`` is the slow space)."""
        if i in self._bases:
            return self._bases[i]
        orb = self.orbit
        if i <= self.s:
            B = orb.E[i - 1]
        elif self.s == orb.s:
            B = orb.V
        else:
            B = np.concatenate(list(orb.E[self.s:]) + [orb.V], axis=2)
            B, _ = np.linalg.qr(B)
        self._bases[i] = B
        return B

    def maps(self, i: int) -> np.ndarray:
        """Restricted one-step maps of block ``i`` in basis coordinates."""
        if i in self._maps:
            return self._maps[i]
        orb = self.orbit
        B = self.basis(i)
        if orb.cyclic:
            nxt, cur, m = np.roll(B, -1, axis=0), B, orb.mats
        else:
            nxt, cur, m = B[1:], B[:-1], orb.mats[:-1]
        R = np.matmul(nxt.transpose(0, 2, 1), np.matmul(m, cur))
        self._maps[i] = R
        return R

    def decompose(self, U: np.ndarray, positions: np.ndarray) -> tuple[list, float]:
        """Oblique block coordinates of the rows of ``U`` at the given positions."""
        orb = self.orbit
        idx = np.array([orb.index(int(j)) for j in positions])
        blocks = [self.basis(i)[idx] for i in range(1, self.s + 2)]
        F = np.concatenate(blocks, axis=2)
        cond = float(np.linalg.cond(F).max()) if F.size else 1.0
        if not np.isfinite(cond) or cond > 1e12:
            raise ProjectionError(f"Oseledets blocks are numerically dependent (cond {cond:.3g})")
        coef = np.linalg.solve(F, U[..., None])[..., 0]
        out = []
        k0 = 0
        for B in blocks:
            k = B.shape[2]
            out.append(coef[:, k0:k0 + k])
            k0 += k
        return out, cond

    # -- growth extremes for tail bounds ---------------------------------------

    def _extreme_factor(self, i: int, forward: bool, rate: float) -> float:
        """Bound ``sum_{k>=1} term_{n+k} <= factor * term_n`` from empirical growth.

        Uses the largest observed growth over blocks of ``L`` steps; infinite
        if no block length shows net decay.
        """
        key = (i, forward, round(rate, 15))
        if key in self._extremes:
            return self._extremes[key]
        R = self.maps(i)
        if R.shape[0] == 0 or R.shape[1] == 0:
            self._extremes[key] = 0.0
            return 0.0
        if forward:
            step = _logsafe(np.linalg.norm(R, ord=2, axis=(1, 2)))
        else:
            smin = np.linalg.svd(R, compute_uv=False)[:, -1]
            step = -_logsafe(smin)
        if R.shape[1] == 1 and forward:
            step = _logsafe(np.abs(R[:, 0, 0]))
        H = np.concatenate([[0.0], np.cumsum(step - rate)])
        best = math.inf
        N = len(step)
        L = 1
        while L <= min(N, 512):
            win = H[L:] - H[:-L]
            excess = float(win.max())
            if excess < 0:
                partial = 0.0
                for k in range(1, L):
                    partial = max(partial, float((H[k:] - H[:-k]).max()))
                best = min(best, math.exp(partial) * L / (1.0 - math.exp(excess)))
            L *= 2
        self._extremes[key] = best
        return best

    # -- scalar closed forms -----------------------------------------------------

    def _scalar_profile(self, i: int, rate_f: float, rate_b: float, lo_cut, hi_cut):
        """Forward and backward series factors of a one-dimensional block.

        ``F_j = 1 + rho_j F_{j+1}`` and ``B_j = sigma_{j-1} (1 + B_{j-1})``
        with one-step ratios ``rho``, ``sigma``; cyclic orbits solve the
        recursions around the period, sampled orbits stop at the frame ends.
        """
        key = (i, rate_f, rate_b)
        if key in self._profiles:
            return self._profiles[key]
        R = np.abs(self.maps(i)[:, 0, 0])
        N = self.orbit.size
        if np.any(R == 0):
            raise SingularRestrictionError(f"block {i} is annihilated along the orbit")
        logR = np.log(R)
        rho = np.exp(logR - rate_f)           # forward one-step ratio
        sig = np.exp(-logR - rate_b)          # backward one-step ratio
        F = np.empty(N)
        B = np.empty(N)
        if self.orbit.cyclic:
            # forward: F_0 = sum_r prod_{t<r} rho_t + prod(rho) F_0
            logs = np.concatenate([[0.0], np.cumsum(np.log(rho))])
            partial = float(np.exp(logs[:N]).sum())
            F[0] = partial / (1.0 - math.exp(logs[N]))
            for j in range(N - 1, 0, -1):
                F[j] = 1.0 + rho[j] * F[(j + 1) % N]
            # backward: B_j = sum_{n>=1} prod_{t=1..n} sig_{j-t}
            logs_b = np.concatenate([[0.0], np.cumsum(np.log(sig[::-1]))])
            partial_b = float(np.exp(logs_b[1:N + 1]).sum())
            B[0] = partial_b / (1.0 - math.exp(logs_b[N]))
            for j in range(1, N):
                B[j] = sig[j - 1] * (1.0 + B[j - 1])
        else:
            F[N - 1] = 1.0
            for j in range(N - 2, -1, -1):
                F[j] = 1.0 + rho[j] * F[j + 1]
            B[0] = 0.0
            for j in range(1, N):
                B[j] = sig[j - 1] * (1.0 + B[j - 1])
        self._profiles[key] = (F, B)
        return F, B

    # -- generic batched series ----------------------------------------------------

    def _iterate(self, i: int, idx: np.ndarray, C: np.ndarray, rate: float,
                 lengths: np.ndarray, forward: bool):
        """Sum ``||M^n c|| exp(-rate n)`` for ``n = 1 .. lengths`` (or to convergence).

        Returns ``(sums, last_terms, terms_used)``.
        """
        R = self.maps(i)
        N = R.shape[0]
        cyclic = self.orbit.cyclic
        K = C.shape[0]
        nrm = np.linalg.norm(C, axis=1)
        total = np.zeros(K)
        last = nrm.copy()
        used = np.zeros(K, dtype=int)
        with np.errstate(divide="ignore", invalid="ignore"):
            cur = np.where(nrm[:, None] > 0, C / np.where(nrm > 0, nrm, 1)[:, None], 0.0)
        logacc = _logsafe(nrm)
        pos = idx.copy()
        alive = (lengths > 0) & (nrm > 0)
        n = 0
        base = nrm.copy()
        period_sum = np.zeros(K)
        prev_period = np.full(K, np.inf)
        while alive.any():
            n += 1
            a = np.nonzero(alive)[0]
            if forward:
                step = pos[a] % N if cyclic else pos[a]
                v = np.matmul(R[step], cur[a][..., None])[..., 0]
                pos[a] += 1
            else:
                step = (pos[a] - 1) % N if cyclic else pos[a] - 1
                Ms = R[step]
                sv = np.linalg.svd(Ms, compute_uv=False)
                if np.any(sv[:, -1] <= 1e-12 * np.maximum(sv[:, 0], 1e-300)):
                    raise SingularRestrictionError(
                        f"restriction to block {i} is singular along the past")
                v = np.linalg.solve(Ms, cur[a][..., None])[..., 0]
                pos[a] -= 1
            nv = np.linalg.norm(v, axis=1)
            if np.any(nv == 0):
                raise SingularRestrictionError(f"block {i} vector annihilated")
            cur[a] = v / nv[:, None]
            logacc[a] += np.log(nv)
            term = np.exp(logacc[a] - rate * n)
            total[a] += term
            last[a] = term
            used[a] = n
            lengths[a] -= 1
            still = lengths[a] > 0
            if cyclic:
                period_sum[a] += term
                if n % N == 0:
                    growing = period_sum[a] > prev_period[a] * (1 + 1e-12)
                    if np.any(growing) and n >= 4 * N and n > 50:
                        warnings.warn("Lyapunov-norm series is not converging",
                                      DivergenceWarning, stacklevel=3)
                        still &= ~growing
                    prev_period[a] = period_sum[a]
                    period_sum[a] = 0.0
                small = term <= SERIES_RTOL * (total[a] + base[a])
                still &= ~(small & (n >= N))
                still &= n < MAX_CYCLIC_TERMS
            elif n >= 8:
                # later terms are below double-precision resolution of the sum
                still &= term > SERIES_RTOL * (total[a] + base[a])
            alive[a] = still
        return total, last, used

    # -- public pieces -------------------------------------------------------------

    def block_norms(self, i: int, positions, coords) -> tuple[np.ndarray, np.ndarray]:
        """Norms of block-``i`` vectors given by basis coordinates; returns (values, tail bounds)."""
        orb = self.orbit
        positions = np.asarray(positions, dtype=int)
        C = np.asarray(coords, dtype=float).reshape(len(positions), -1)
        idx = np.array([orb.index(int(j)) for j in positions], dtype=int)
        nrm = np.linalg.norm(C, axis=1)
        p = self.params
        N = orb.size
        if i <= self.s:
            lam = self.lams[i - 1]
            rate_f, rate_b = lam + p.delta, -lam + p.delta
            k = C.shape[1]
            if orb.cyclic or p.window == "absolute":
                fwd_len = np.full(len(idx), 10 ** 9) if orb.cyclic else (N - 1) - idx
                back_len = np.full(len(idx), 10 ** 9) if orb.cyclic else idx.copy()
            else:
                fwd_len = np.minimum(p.truncation, (N - 1) - idx)
                back_len = np.minimum(p.truncation, idx)
            if k == 1 and (orb.cyclic or p.window == "absolute"):
                F, B = self._scalar_profile(i, rate_f, rate_b, None, None)
                vals = nrm * (F[idx] + B[idx])
                if orb.cyclic:
                    return vals, np.zeros(len(idx))
                lastf = self._last_scalar(i, idx, fwd_len, rate_f, forward=True) * nrm
                lastb = self._last_scalar(i, idx, back_len, rate_b, forward=False) * nrm
            else:
                sf, lastf, _ = self._iterate(i, idx, C, rate_f, fwd_len.copy(), True)
                sb, lastb, _ = self._iterate(i, idx, C, rate_b, back_len.copy(), False)
                vals = nrm + sf + sb
                if orb.cyclic:
                    return vals, self._cyclic_tail(lastf, rate_f) + self._cyclic_tail(lastb, rate_b)
            tail = (lastf * self._extreme_factor(i, True, rate_f)
                    + lastb * self._extreme_factor(i, False, rate_b))
            return vals, np.where(nrm > 0, tail, 0.0)
        # slow block: forward only, weight exp(-lambda_tilde n)
        rate = p.lambda_tilde
        if orb.cyclic:
            fwd_len = np.full(len(idx), 10 ** 9)
        elif p.window == "absolute":
            fwd_len = (N - 1) - idx
        else:
            fwd_len = np.minimum(p.truncation, (N - 1) - idx)
        if C.shape[1] == 0:
            return np.zeros(len(idx)), np.zeros(len(idx))
        sf, lastf, used = self._iterate(i, idx, C, rate, fwd_len.copy(), True)
        vals = nrm + sf
        if not orb.cyclic and np.any((used >= 10) & (lastf > 10 * nrm)):
            warnings.warn("slow-space series terms grow; lambda_tilde may be below a growth rate",
                          DivergenceWarning, stacklevel=3)
        if orb.cyclic:
            return vals, self._cyclic_tail(lastf, rate)
        tail = lastf * self._extreme_factor(i, True, rate)
        return vals, np.where(nrm > 0, tail, 0.0)

    def _last_scalar(self, i, idx, lengths, rate, forward: bool) -> np.ndarray:
        """Last included term of a scalar series (unit coordinate)."""
        R = np.abs(self.maps(i)[:, 0, 0])
        G = np.concatenate([[0.0], np.cumsum(np.log(R))])
        if forward:
            end = idx + lengths
            return np.exp(G[end] - G[idx] - rate * lengths)
        start = idx - lengths
        return np.exp(-(G[idx] - G[start]) - rate * lengths)

    def _cyclic_tail(self, last: np.ndarray, rate: float) -> np.ndarray:
        # terms past the stopping point decay at least geometrically by exp(-delta)
        r = math.exp(-self.params.delta)
        return last * r / (1.0 - r)

    def norms(self, positions, U: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Per-level norms ``(K, s+1)``, tail bounds ``(K,)`` and projection condition."""
        positions = np.asarray(positions, dtype=int)
        U = np.asarray(U, dtype=float).reshape(len(positions), -1)
        comps, cond = self.decompose(U, positions)
        vals = np.empty((len(positions), self.s + 1))
        tails = np.zeros(len(positions))
        for i in range(1, self.s + 2):
            v, t = self.block_norms(i, positions, comps[i - 1])
            vals[:, i - 1] = v
            tails += t
        return vals, tails, cond

    def components(self, positions, U) -> list:
        """Oblique components as vectors in the ambient space."""
        positions = np.asarray(positions, dtype=int)
        U = np.asarray(U, dtype=float).reshape(len(positions), -1)
        comps, _ = self.decompose(U, positions)
        idx = np.array([self.orbit.index(int(j)) for j in positions])
        return [np.matmul(self.basis(i)[idx], comps[i - 1][..., None])[..., 0]
                for i in range(1, self.s + 2)]


# ---------------------------------------------------------------------------
# single-vector API


def _engine(frame: OseledetsFrame, spectrum: LyapunovSpectrum, params: LyapunovNormParams) -> NormEngine:
    if frame.orbit is None:
        raise ValueError("frame carries no orbit data; build it with fast_subspaces or periodic_spectrum")
    cache = frame.__dict__.setdefault("_engines", {})
    key = (id(spectrum), params)
    if key not in cache:
        cache[key] = NormEngine(frame.orbit, spectrum, params)
    return cache[key]


def _coords_in_block(u, B: np.ndarray, what: str) -> np.ndarray:
    c = B.T @ u
    if np.linalg.norm(u - B @ c) > 1e-8 * max(1.0, np.linalg.norm(u)):
        raise ValueError(f"vector is not in {what}")
    return c


def level_norm(u, frame: OseledetsFrame, spectrum: LyapunovSpectrum,
               params: LyapunovNormParams, i: int, with_tail: bool = False):
    """``||u||_{x,delta,i}`` for ``u`` in ``E_i(x)``."""
    if not 1 <= i <= params.s:
        raise ValueError(f"level {i} outside 1..{params.s}")
    eng = _engine(frame, spectrum, params)
    u = np.asarray(u, dtype=float)
    B = eng.basis(i)[eng.orbit.index(frame.position)]
    c = _coords_in_block(u, B, f"E_{i}")
    v, t = eng.block_norms(i, [frame.position], c[None])
    return (float(v[0]), float(t[0])) if with_tail else float(v[0])


def tail_norm(u, frame: OseledetsFrame, spectrum: LyapunovSpectrum,
              params: LyapunovNormParams, with_tail: bool = False):
    """``||u||_{x,delta,s+1}`` for ``u`` in ``V_{s+1}(x)``."""
    eng = _engine(frame, spectrum, params)
    u = np.asarray(u, dtype=float)
    B = eng.basis(params.s + 1)[eng.orbit.index(frame.position)]
    if B.shape[1] == 0:
        if np.linalg.norm(u) > 0:
            raise ValueError("slow space is trivial")
        return (0.0, 0.0) if with_tail else 0.0
    c = _coords_in_block(u, B, f"V_{params.s + 1}")
    v, t = eng.block_norms(params.s + 1, [frame.position], c[None])
    return (float(v[0]), float(t[0])) if with_tail else float(v[0])


def full_norm(u, frame: OseledetsFrame, spectrum: LyapunovSpectrum,
              params: LyapunovNormParams) -> NormEvaluation:
    eng = _engine(frame, spectrum, params)
    vals, tails, _ = eng.norms([frame.position], np.asarray(u, dtype=float)[None])
    T = None if eng.orbit.cyclic else params.truncation
    return NormEvaluation(vals[0], float(vals[0].sum()), float(tails[0]), T)


def _unit_samples(d: int, samples: int, rng, extra=None) -> np.ndarray:
    U = rng.standard_normal((samples, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    if extra is not None:
        U = np.concatenate([extra, U])
    return U


def _frame_witnesses(frame: OseledetsFrame) -> np.ndarray:
    cols = [B.T for B in frame.E_bases] + [frame.V_basis.T]
    W = np.concatenate([c for c in cols if c.size], axis=0)
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def _refine_max(fun, starts, d: int, iters: int = 400) -> tuple[float, np.ndarray]:
    """Local maximization of a homogeneous ratio over the unit sphere."""
    best, arg = -math.inf, None
    for u0 in starts:
        res = minimize(lambda z: -fun(z / max(np.linalg.norm(z), 1e-300)), u0,
                       method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": iters * d})
        val = -res.fun
        if val > best:
            best, arg = val, res.x / np.linalg.norm(res.x)
    return best, arg


def k_delta(frame: OseledetsFrame, spectrum: LyapunovSpectrum, params: LyapunovNormParams,
            samples: int = 2000, seed: int = 0, refine: int = 3) -> NormEquivalence:
    """Sampled ``K_delta(x) = max ||u||_x`` over unit ``u`` (a lower estimate)."""
    eng = _engine(frame, spectrum, params)
    rng = np.random.default_rng(seed)
    d = frame.dimension
    U = _unit_samples(d, samples, rng, _frame_witnesses(frame))
    vals, _, _ = eng.norms(np.full(len(U), frame.position), U)
    tot = vals.sum(axis=1)
    order = np.argsort(-tot)[:max(1, refine)]

    def fn(z):
        v, _, _ = eng.norms([frame.position], z[None])
        return float(v.sum())

    best, arg = _refine_max(fn, U[order], d)
    if tot.max() >= best:
        best, arg = float(tot.max()), U[int(np.argmax(tot))]
    return NormEquivalence(float(max(1.0, best)), samples, seed, arg)


def operator_lyap_norm(B, frame_x: OseledetsFrame, frame_y: OseledetsFrame,
                       spectrum: LyapunovSpectrum, params: LyapunovNormParams,
                       samples: int = 2000, seed: int = 0, safety: float = 1.5,
                       spectrum_y: LyapunovSpectrum | None = None) -> tuple[float, float]:
    """Bracket for ``||B||_{y<-x}``.

    The lower value maximizes the ratio over sampled directions (with local
    refinement); the upper value is ``safety * K_delta(y) * ||B||``.
    """
    B = np.asarray(B, dtype=float)
    nB = float(np.linalg.norm(B, 2))
    if nB == 0:
        return 0.0, 0.0
    spectrum_y = spectrum if spectrum_y is None else spectrum_y
    ex = _engine(frame_x, spectrum, params)
    ey = _engine(frame_y, spectrum_y, params)
    rng = np.random.default_rng(seed)
    d = frame_x.dimension
    U = _unit_samples(d, samples, rng, _frame_witnesses(frame_x))
    nx = ex.norms(np.full(len(U), frame_x.position), U)[0].sum(axis=1)
    ny = ey.norms(np.full(len(U), frame_y.position), U @ B.T)[0].sum(axis=1)
    ratio = ny / nx
    order = np.argsort(-ratio)[:3]

    def fn(z):
        a = ex.norms([frame_x.position], z[None])[0].sum()
        b = ey.norms([frame_y.position], (B @ z)[None])[0].sum()
        return float(b / a)

    lower, _ = _refine_max(fn, U[order], d)
    lower = max(lower, float(ratio.max()))
    K = k_delta(frame_y, spectrum_y, params, samples, seed + 1).K_delta
    return lower, safety * K * nB


def cone_membership(u, frame: OseledetsFrame, spectrum: LyapunovSpectrum,
                    params: LyapunovNormParams, cone: ConeSpec) -> tuple[bool, float]:
    """Membership in ``C_gamma^h``: ``||u_V||_x <= (1 - gamma) ||u_{E_h}||_x``.

    ``u_V`` collects every component past level ``h``.  Returns the verdict
    and the margin ``(1 - gamma) ||u_{E_h}|| - ||u_V||`` (nonnegative inside).
    """
    if cone.level > params.s:
        raise ValueError("cone level exceeds the norm level")
    eng = _engine(frame, spectrum, params)
    vals, _, _ = eng.norms([frame.position], np.asarray(u, dtype=float)[None])
    margin = cone_margins(vals, cone)[0]
    return bool(margin >= 0), float(margin)


def cone_margins(per_level: np.ndarray, cone: ConeSpec) -> np.ndarray:
    """Vectorized cone margins from per-level norms ``(K, s+1)``."""
    h = cone.level
    e = per_level[:, h - 1]
    v = per_level[:, h:].sum(axis=1)
    return (1.0 - cone.gamma) * e - v


NORM_HEADER = "point,level,value,tail_bound,T,delta,lambda_tilde"


def norm_csv_rows(label: str, ev: NormEvaluation, params: LyapunovNormParams) -> list[str]:
    T = "inf" if ev.T is None else str(ev.T)
    rows = []
    for lvl, val in enumerate(ev.per_level, 1):
        rows.append(f"{label},{lvl},{float(val)!r},{float(ev.truncation_tail_bound)!r},{T},"
                    f"{float(params.delta)!r},{float(params.lambda_tilde)!r}")
    return rows
