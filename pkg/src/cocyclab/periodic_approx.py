"""Periodic approximation of Lyapunov exponents along a typical orbit.

Pipeline: sample ``x``, find the first recurrence time ``n_k`` into the
``1/k`` ball, close ``x_0 .. x_{n_k-1}`` into a periodic point ``p_k`` and
compare ``gamma_i(p_k)`` with a long-run reference ``gamma_i(mu)``.  The
cone lemmas behind the convergence are checked on sampled vectors with
Lyapunov norms built from frames along ``x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import CocycleGenerator, HolderData, derive_seed
from .lyapnorm import ConeSpec, LyapunovNormParams, NormEngine, cone_margins
from .oseledets import (LyapunovSpectrum, OrbitFrames, group_spectrum, lyapunov_estimate,
                        orbit_frames, periodic_exponents, periodic_spectrum)
from .symbolic import (BaseMeasure, PeriodicPoint, ShadowingReport, ShiftSpace, SymbolSequence,
                       close_orbit, first_recurrence, sample_orbit)

DEFAULT_SCHEDULE = (2, 4, 8, 16, 32, 64, 128, 256)
BENCHMARK_SEED = 20240611


class NoRecurrenceError(RuntimeError):
    """No return to the ``1/k`` ball within the search horizon."""


class FrameUnavailableError(ValueError):
    """The sampled window is too short for the requested pullback frames."""


# ---------------------------------------------------------------------------
# delta budget


@dataclass(frozen=True)
class DeltaBudget:
    d_scale: int
    delta0: float
    theta_alpha: float
    min_gap: float

    @property
    def bound(self) -> float:
        return self.delta0 / 0.9

    @property
    def delta(self) -> float:
        """Working ``delta = delta0 / 2``."""
        return 0.5 * self.delta0


def delta_budget(spectrum: LyapunovSpectrum, s: int, holder: HolderData,
                 theta: float) -> DeltaBudget:
    """``delta0 = 0.9 * min(theta*alpha, gaps) / d`` with ``d = 10 prod (d_i + 4)``."""
    l = spectrum.n_groups
    if s < 1 or s > l:
        raise ValueError(f"level {s} outside 1..{l}")
    mult = spectrum.multiplicities
    d_scale = 10 * int(np.prod([mult[i] + 4 for i in range(s)]))
    ta = float(theta * holder.alpha)
    if l >= 2:
        lam = spectrum.lambdas
        gaps = [lam[i] - lam[i + 1] for i in range(min(s, l - 1))]
        min_gap = float(min(gaps))
        bound = min(ta, min_gap) / d_scale
    else:
        min_gap = math.inf
        bound = ta / 4.0
    return DeltaBudget(d_scale, 0.9 * bound, ta, min_gap)


# ---------------------------------------------------------------------------
# reference and runs


@dataclass(frozen=True)
class Horizons:
    """Search horizon for recurrences, reference length and pullback margin."""

    recurrence: int = 1 << 20
    reference: int = 10 ** 6
    margin: int = 2000


@dataclass
class ReferenceData:
    spectrum: LyapunovSpectrum
    n: int
    seed: int
    batches: np.ndarray | None = None     # batch-mean rates, sorted column order

    @property
    def gammas(self) -> np.ndarray:
        return self.spectrum.gammas

    def partial_sum_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Standard error of ``sum_{j<=i} gamma_j(mu)`` and the per-step spread ``sigma_i``.

        ``sigma_i**2`` is the batch-means estimate of the asymptotic variance,
        so an orbit segment of length ``n`` has standard error ``sigma_i/sqrt(n)``.
        """
        d = len(self.gammas)
        if self.batches is None:
            return np.zeros(d), np.zeros(d)
        cum = np.cumsum(self.batches, axis=1)
        B = cum.shape[0]
        sd = cum.std(axis=0, ddof=1)
        se = sd / math.sqrt(B)
        sigma = sd * math.sqrt(self.n / B)
        return se, sigma


def reference_spectrum(gen: CocycleGenerator, space: ShiftSpace, measure: BaseMeasure,
                       n: int = 10 ** 6, seed: int = 0, stride: int = 50) -> ReferenceData:
    """Long-run QR (Kingman) estimate of ``gamma_i(mu)`` on an independent orbit."""
    gen.check_space(space)
    rs = derive_seed(seed, 1)
    x = sample_orbit(space, measure, gen.radius, n + gen.radius, rs)
    g, se, col, batches = lyapunov_estimate(gen, x, n, stride, seed=rs, return_batches=True)
    if batches is not None:
        order = np.argsort(-col, kind="stable")
        batches = batches[:, order]
    return ReferenceData(group_spectrum(g, None, se), n, rs, batches)


@dataclass
class KRecord:
    k: int
    n_k: int
    point: PeriodicPoint
    phase: int
    gammas: np.ndarray
    errors: np.ndarray
    shadow: ShadowingReport = field(repr=False)


@dataclass
class ApproximationRun:
    seed: int
    k_schedule: tuple
    records: list
    reference: ReferenceData
    s: int
    x: SymbolSequence = field(repr=False)
    horizons: Horizons = Horizons()
    _frames: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        """Number of exponents compared: ``d_1 + ... + d_s``."""
        return self.reference.spectrum.count(self.s)

    def errors(self) -> np.ndarray:
        return np.array([r.errors for r in self.records])

    def n_values(self) -> np.ndarray:
        return np.array([r.n_k for r in self.records])

    def record(self, k_index: int) -> KRecord:
        return self.records[k_index]

    def to_json(self) -> str:
        ref = self.reference
        doc = {
            "schema": "cocyclab.approximation_run/1",
            "seed": self.seed,
            "k_schedule": list(self.k_schedule),
            "s": self.s,
            "horizons": {"recurrence": self.horizons.recurrence,
                         "reference": self.horizons.reference,
                         "margin": self.horizons.margin},
            "reference": {"n": ref.n, "seed": ref.seed,
                          "gammas": [float(v) for v in ref.gammas],
                          "stderr": [float(v) for v in ref.spectrum.stderr]
                          if ref.spectrum.stderr is not None else None},
            "records": [{
                "k": r.k, "n_k": r.n_k, "period": r.point.period, "phase": r.phase,
                "word": "".join(map(str, r.point.word)) if r.point.period <= 4096 else None,
                "gammas": [float(v) for v in r.gammas],
                "errors": [float(v) for v in r.errors],
                "C1": r.shadow.C1, "theta": r.shadow.theta,
                "recurrence_distance": r.shadow.recurrence_distance,
            } for r in self.records],
        }
        return json.dumps(doc, indent=1, allow_nan=True)

    def errors_csv(self) -> str:
        lines = [ERRORS_HEADER]
        g_mu = self.reference.gammas
        for r in self.records:
            for i in range(self.m):
                lines.append(f"{r.k},{r.n_k},{i + 1},{float(r.gammas[i])!r},"
                             f"{float(g_mu[i])!r},{float(r.errors[i])!r}")
        return "\n".join(lines) + "\n"


ERRORS_HEADER = "k,n_k,i,gamma_pk,gamma_mu,error"


def run_main_experiment(gen: CocycleGenerator, space: ShiftSpace, measure: BaseMeasure, s: int,
                        k_schedule=DEFAULT_SCHEDULE, horizons: Horizons | None = None,
                        seed: int = 0, reference: ReferenceData | None = None) -> ApproximationRun:
    """Close first recurrences of one sampled orbit and compare periodic spectra.

    ``reference`` may be shared across seeds; otherwise it is computed from
    an independent orbit of length ``horizons.reference``.
    """
    horizons = horizons or Horizons()
    gen.check_space(space)
    if reference is None:
        reference = reference_spectrum(gen, space, measure, horizons.reference, seed)
    spec = reference.spectrum
    if s > spec.n_groups:
        raise ValueError(f"reference resolves {spec.n_groups} groups, level {s} requested")
    m = spec.count(s)
    ks = tuple(int(k) for k in k_schedule)
    if any(b < a for a, b in zip(ks, ks[1:])):
        raise ValueError("k schedule must be nondecreasing")
    margin = horizons.margin + gen.radius
    x = sample_orbit(space, measure, margin, horizons.recurrence + margin, derive_seed(seed, 2))
    records = []
    for k in ks:
        n_k = first_recurrence(x, k, horizons.recurrence)
        if n_k is None:
            raise NoRecurrenceError(f"no return into the 1/{k} ball within {horizons.recurrence} steps")
        point, report = close_orbit(x, n_k)
        g = periodic_exponents(gen, point.word)
        records.append(KRecord(k, n_k, point, report.phase, g, g[:m] - reference.gammas[:m], report))
    return ApproximationRun(seed, ks, records, reference, s, x, horizons)


# ---------------------------------------------------------------------------
# semicontinuity


@dataclass
class SemicontinuityReport:
    k: np.ndarray
    n_k: np.ndarray
    margins: np.ndarray        # (K, m): sum gamma(mu) - sum gamma(p_k)
    tolerance: np.ndarray      # (K, m)
    checked: np.ndarray        # (K,) bool: past the schedule midpoint

    @property
    def violations(self) -> np.ndarray:
        return self.checked[:, None] & (self.margins + self.tolerance < 0)

    @property
    def hard_violations(self) -> int:
        return int(self.violations.sum())


def semicontinuity_check(run: ApproximationRun, tol: float | None = None,
                         sigmas: float = 3.0) -> SemicontinuityReport:
    """Partial sums ``sum_{j<=i} gamma_j(p_k)`` against ``sum_{j<=i} gamma_j(mu) + tol``.

    With ``tol=None`` the tolerance is ``sigmas`` combined standard errors:
    the reference's own and the fluctuation ``sigma_i / sqrt(n_k)`` of a
    length-``n_k`` orbit segment.
    """
    m = run.m
    G = np.array([np.cumsum(r.gammas[:m]) for r in run.records])
    ref = np.cumsum(run.reference.gammas[:m])
    margins = ref[None, :] - G
    n = run.n_values()
    if tol is not None:
        tolerance = np.full_like(margins, float(tol))
    else:
        se, sigma = run.reference.partial_sum_stats()
        tolerance = sigmas * np.sqrt(se[None, :m] ** 2 + sigma[None, :m] ** 2 / n[:, None])
    K = len(run.records)
    checked = np.arange(K) >= K // 2
    return SemicontinuityReport(np.array(run.k_schedule), n, margins, tolerance, checked)


# ---------------------------------------------------------------------------
# frames along the reference orbit


def default_depth(spectrum: LyapunovSpectrum, s: int, cap: int = 5000) -> int:
    lam = spectrum.lambdas
    gaps = [lam[i] - lam[i + 1] for i in range(min(s, len(lam) - 1))]
    if not gaps:
        return 200
    return int(min(cap, 50 + math.ceil(40.0 / max(min(gaps), 1e-9))))


def reference_frames(gen: CocycleGenerator, run: ApproximationRun, k_index: int, s: int,
                     back: int = 0, depth: int | None = None, seed: int = 0) -> OrbitFrames:
    """Oseledets frames of the reference spectrum along ``x`` at ``-back .. n_k``."""
    spec = run.reference.spectrum
    depth = default_depth(spec, s) if depth is None else depth
    key = (k_index, s, back, depth)
    if key in run._frames:
        return run._frames[key]
    n_k = run.records[k_index].n_k
    a, b = run.x.bounds
    if -back - depth - gen.radius < a or n_k + depth + gen.radius > b:
        raise FrameUnavailableError(
            f"frames at -{back}..{n_k} with depth {depth} exceed the sampled window")
    orb = orbit_frames(gen, run.x, spec, s, -back, n_k, depth, seed=derive_seed(seed, 3, k_index))
    run._frames[key] = orb
    return orb


def periodic_mats_along(gen: CocycleGenerator, rec: KRecord) -> np.ndarray:
    """``A(f^j p_k)`` for ``j = 0 .. n_k - 1`` with ``p_k`` aligned to ``x``."""
    mats = gen.matrices_for_word(rec.point.rotation(rec.phase), cyclic=True)
    reps = -(-rec.n_k // len(mats))
    return np.concatenate([mats] * reps)[:rec.n_k] if reps > 1 else mats[:rec.n_k]


@dataclass
class ConeLemmaReport:
    level: int
    k: int
    n_k: int
    samples: int
    checked: int                 # samples not excused by the lower cone
    growth_violations: int
    invariance_violations: int   # images outside C_0 at level h
    fitted_gamma: float
    delta: float
    lambda_h: float

    @property
    def growth_violation_fraction(self) -> float:
        return self.growth_violations / max(1, self.checked)


def _sample_cone(engine: NormEngine, rng, positions, h: int, s: int, d: int):
    """Vectors in ``C^{j,h}_0``: free lower components, ``E_h`` part, scaled tail."""
    K = len(positions)
    idx = positions - engine.orbit.lo
    parts = []
    for i in range(1, s + 2):
        B = engine.basis(i)[idx]
        c = rng.standard_normal((K, B.shape[2]))
        parts.append(np.matmul(B, c[..., None])[..., 0])
    lower = sum(parts[:h - 1]) if h > 1 else np.zeros((K, d))
    e_h = parts[h - 1]
    tail = sum(parts[h:]) if s + 1 > h else np.zeros((K, d))
    ne = engine.norms(positions, e_h)[0][:, h - 1]
    nv = engine.norms(positions, tail)[0][:, h:].sum(axis=1)
    t = rng.random(K)
    scale = np.where(nv > 0, t * ne / np.where(nv > 0, nv, 1.0), 0.0)
    return lower + e_h + tail * scale[:, None]


def verify_cone_lemmas(gen: CocycleGenerator, run: ApproximationRun, h: int,
                       params: LyapunovNormParams, k_index: int = -1, samples: int = 10_000,
                       seed: int = 0, depth: int | None = None) -> ConeLemmaReport:
    """Sampled check of the cone growth and invariance lemmas at level ``h``.

    For ``u`` in ``C^{j,h}_0`` with ``w = A(f^j p_k) u``: growth
    ``||w_{E_h}||_{j+1} >= exp(lambda_h - 2 delta) ||u_{E_h}||_j`` and the
    largest ``gamma`` with every image in ``C^{j+1,h}_gamma``.  For ``h >= 2``
    samples already in ``C^{j,h-1}_0`` are excused (the dichotomy).
    """
    k_index = k_index % len(run.records)
    rec = run.records[k_index]
    s = params.s
    if not 1 <= h <= s:
        raise ValueError("cone level must lie in 1..s")
    spec = run.reference.spectrum
    orb = reference_frames(gen, run, k_index, s, back=0, depth=depth, seed=seed)
    engine = NormEngine(orb, spec, params)
    rng = np.random.default_rng(derive_seed(seed, 4, k_index, h))
    pmats = periodic_mats_along(gen, rec)
    pos = rng.integers(0, rec.n_k, size=samples)
    U = _sample_cone(engine, rng, pos, h, s, gen.dimension)
    W = np.matmul(pmats[pos], U[..., None])[..., 0]
    nu = engine.norms(pos, U)[0]
    nw = engine.norms(pos + 1, W)[0]
    need = np.ones(samples, dtype=bool)
    if h >= 2:
        need = cone_margins(nu, ConeSpec(h - 1)) < 0
    lam_h = float(spec.lambdas[h - 1])
    grow_ok = nw[:, h - 1] >= math.exp(lam_h - 2 * params.delta) * nu[:, h - 1] * (1 - 1e-12)
    ratio = nw[:, h:].sum(axis=1) / np.maximum(nw[:, h - 1], 1e-300)
    gamma_fit = float(1.0 - ratio[need].max()) if need.any() else 1.0
    return ConeLemmaReport(
        h, rec.k, rec.n_k, samples, int(need.sum()),
        int((need & ~grow_ok).sum()), int((need & (ratio > 1.0)).sum()),
        gamma_fit, params.delta, lam_h)


# ---------------------------------------------------------------------------
# cone indices and dimension match


@dataclass
class ConeIndices:
    k: list
    indices: dict          # (k_index, h) -> i_k_h
    minima: dict           # (k_index, h) -> list of minimal margins per i
    periodic_spectra: dict


def _cone_gap_minimum(engine: NormEngine, Vi: np.ndarray, h: int, rng, samples: int) -> float:
    """Smallest ``||u_V|| - ||u_{E_h}||`` over unit ``u`` in ``span(Vi)`` (sampled + refined)."""
    from scipy.optimize import minimize

    if Vi.shape[1] == 0:
        return math.inf
    k = Vi.shape[1]
    C = rng.standard_normal((samples, k))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    if k <= 3:
        C = np.concatenate([C, np.eye(k), -np.eye(k)])
    U = C @ Vi.T
    pos = np.zeros(len(U), dtype=int)
    vals = -cone_margins(engine.norms(pos, U)[0], ConeSpec(h))
    best = float(vals.min())
    if k == 1:
        return best

    def fn(z):
        z = z / max(np.linalg.norm(z), 1e-300)
        return float(-cone_margins(engine.norms([0], (Vi @ z)[None])[0], ConeSpec(h))[0])

    res = minimize(fn, C[int(np.argmin(vals))], method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 100 * k})
    best = min(best, float(res.fun))
    return best


def cone_indices(gen: CocycleGenerator, run: ApproximationRun, params: LyapunovNormParams,
                 levels=None, k_indices=None, samples: int = 2000, seed: int = 0) -> ConeIndices:
    """``i_k_h = max{i : V_i(p_k) meets C^{0,h}_0}`` by a sampling heuristic.

    The intersection test is a nonconvex feasibility problem; sampling can
    only under-report, never over-report, a nonempty intersection.
    """
    levels = range(1, params.s + 1) if levels is None else levels
    k_indices = range(len(run.records)) if k_indices is None else k_indices
    spec = run.reference.spectrum
    back = params.truncation
    indices, minima, pspec = {}, {}, {}
    for ki in k_indices:
        rec = run.records[ki]
        orb = reference_frames(gen, run, ki, params.s, back=back, seed=seed)
        engine = NormEngine(orb, spec, params)
        sp, fr = periodic_spectrum(gen, rec.point)
        pspec[ki] = sp
        at = fr.at(rec.phase)
        blocks = list(at.E_bases) + [at.V_basis]
        rng = np.random.default_rng(derive_seed(seed, 5, ki))
        for h in levels:
            mins = []
            for i in range(1, sp.n_groups + 1):
                Vi = np.concatenate(blocks[i - 1:], axis=1)
                mins.append(_cone_gap_minimum(engine, Vi, h, rng, samples))
            ok = [i for i, v in enumerate(mins, 1) if v <= 0]
            indices[(ki, h)] = max(ok) if ok else 0
            minima[(ki, h)] = mins
    return ConeIndices([run.records[i].k for i in k_indices], indices, minima, pspec)


@dataclass
class DimensionMatchReport:
    rows: list     # (k, h, periodic_dim, reference_dim, match)
    cor47: list    # (k, i, gamma_pk, gamma_mu - 3 delta, margin)

    @property
    def all_match(self) -> bool:
        return all(r[4] for r in self.rows)


def dimension_match_check(run: ApproximationRun, ci: ConeIndices,
                          delta: float | None = None) -> DimensionMatchReport:
    """Compare ``sum_{i <= i_k_h} d_i(p_k)`` with ``d_1(mu) + ... + d_h(mu)``.

    Also tabulates ``gamma_i(p_k) - (gamma_i(mu) - 3 delta)``.
    """
    spec = run.reference.spectrum
    rows, cor = [], []
    for (ki, h), i_kh in sorted(ci.indices.items()):
        sp = ci.periodic_spectra[ki]
        pdim = int(sp.offsets()[i_kh]) if i_kh > 0 else 0
        rdim = spec.count(h)
        rows.append((run.records[ki].k, h, pdim, rdim, pdim == rdim))
    if delta is not None:
        g_mu = run.reference.gammas
        for rec in run.records:
            for i in range(run.m):
                low = g_mu[i] - 3 * delta
                cor.append((rec.k, i + 1, float(rec.gammas[i]), float(low),
                            float(rec.gammas[i] - low)))
    return DimensionMatchReport(rows, cor)


# ---------------------------------------------------------------------------
# benchmark


def benchmark_generator(seed: int = BENCHMARK_SEED, d: int = 3, letters: int = 2) -> CocycleGenerator:
    """Positive random cocycle: entries i.i.d. uniform on (0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    return CocycleGenerator.from_matrices([rng.uniform(0.5, 1.5, (d, d)) for _ in range(letters)])
