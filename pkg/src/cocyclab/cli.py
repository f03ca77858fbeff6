"""Batch experiment runner.

A run is described by a plain-text config of ``key = value`` lines (``#``
starts a comment).  ``command`` picks the experiment, ``seed`` is mandatory.
Every random draw derives from ``derive_seed(seed, command_id, task)`` where
``command_id`` is the position of the command in :data:`COMMANDS`.

Artifacts are written to a staging directory and moved into ``out_dir`` only
when the run succeeds, next to a ``manifest.txt`` echoing the effective
config, library versions, seed and wall time.

Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from .applications import (BudgetError, ConjugacyData, DichotomyData, GrowthBracket,
                           certify_uniform_hyperbolicity, conjugacy_invariance_check,
                           growth_vs_periodic_radius, sacker_sell_estimate, similarity_conjugate)
from .cocycle import CocycleGenerator, derive_seed, holder_constants, lambda_mu_estimate
from .lyapnorm import NORM_HEADER, LyapunovNormParams, full_norm, k_delta, norm_csv_rows
from .oseledets import SPECTRUM_HEADER, lyapunov_spectrum, periodic_spectrum, spectrum_csv_rows
from .periodic_approx import (DEFAULT_SCHEDULE, Horizons, benchmark_generator, cone_indices,
                              delta_budget, dimension_match_check, run_main_experiment,
                              semicontinuity_check, verify_cone_lemmas)
from .symbolic import BaseMeasure, PeriodicPoint, ShiftSpace, enumerate_periodic, sample_orbit
from .transferop import (PiecewiseExpandingMap, exceptional_spectrum_ulam, lasota_yorke_check,
                         transfer_cocycle)

MANIFEST_SCHEMA = "cocyclab.manifest/1"
COMMANDS = ("exponents", "periodic", "approx", "cones", "norms", "sackersell", "bracket",
            "certify", "ulam", "conjugacy")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4

ESTIMATE_HEADER = "quantity,n,replicates,value,stderr,seed"
SEMICONTINUITY_HEADER = "k,n_k,i,margin,tolerance,checked,violation"
CONE_LEMMA_HEADER = ("level,k,n_k,samples,checked,growth_violations,invariance_violations,"
                     "fitted_gamma,delta,lambda_h")
CONE_INDEX_HEADER = "k,level,index,periodic_dim,reference_dim,match"
K_DELTA_HEADER = "point,K_delta,samples,seed"
CONJUGACY_HEADER = "word,deviation"
ULAM_PERIODIC_HEADER = "word,gamma_1,gamma_2"


class ConfigError(ValueError):
    """All problems found in a config; ``errors`` holds ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(_format_error(ln, msg) for ln, msg in self.errors))


def _format_error(line, msg):
    return f"line {line}: {msg}" if line else f"config: {msg}"


# ---------------------------------------------------------------------------
# value parsers


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _bool(text):
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text):
    vals = tuple(int(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _path_list(text):
    vals = tuple(v.strip() for v in text.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _matrix(text):
    rows = [r.split() for r in text.split(";")]
    M = np.array([[float(v) for v in r] for r in rows])
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix written as rows separated by ';'")
    return M


def _measure(text):
    parts = text.split()
    kind = parts[0].lower()
    if kind == "uniform" and len(parts) == 1:
        return ("uniform",)
    if kind == "bernoulli" and len(parts) > 1:
        return ("bernoulli", tuple(float(v) for v in parts[1:]))
    if kind == "markov" and len(parts) > 1:
        return ("markov", _matrix(" ".join(parts[1:])))
    raise ValueError("measure must be 'uniform', 'bernoulli p0 p1 ...' or 'markov <rows>'")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _word(text):
    w = tuple(int(c) for c in text.replace(",", " ").split()) if (" " in text or "," in text) \
        else tuple(int(c) for c in text)
    if not w:
        raise ValueError("empty word")
    return w


# key -> (parser, range check or None, help)
SCHEMA = {
    "command": (_choice(*COMMANDS), None, "experiment to run"),
    "seed": (_int, lambda v: v >= 0, "master seed (mandatory)"),
    "generator": (str, None, "generator file, or 'benchmark' for the built-in 3x3 cocycle"),
    "generator2": (str, None, "second generator for conjugacy (default L A L^-1)"),
    "shift": (str, None, "shift-space file (default full shift)"),
    "measure": (_measure, None, "uniform | bernoulli p0 p1 ... | markov rows"),
    "n": (_int, lambda v: v >= 100, "orbit length"),
    "replicates": (_int, lambda v: v >= 1, "independent replicates"),
    "stride": (_int, lambda v: v >= 1, "QR re-orthonormalization stride"),
    "k_schedule": (_int_list, lambda v: all(k >= 1 for k in v), "recurrence scales"),
    "max_period": (_int, lambda v: 1 <= v <= 24, "largest period enumerated"),
    "delta": (_float, lambda v: v > 0, "Lyapunov-norm slack"),
    "T": (_int, lambda v: v >= 1, "series truncation"),
    "tolerance": (_float, lambda v: v > 0, "numeric tolerance"),
    "s": (_int, lambda v: v >= 1, "number of fast blocks"),
    "window": (_choice("relative", "absolute"), None, "Lyapunov-norm window mode"),
    "clustering_eps": (_float, lambda v: v > 0, "Sacker-Sell clustering gap"),
    "n_max": (_int, lambda v: 1 <= v <= 64, "longest word in the bracket"),
    "budget": (_int, lambda v: v >= 1, "brute-force word budget"),
    "prune": (_bool, None, "norm-bound pruning in the bracket"),
    "projection": (_matrix, None, "constant dichotomy projection"),
    "point": (_word, None, "periodic word for norms"),
    "vectors": (_int, lambda v: v >= 1, "random vectors for norms"),
    "samples": (_int, lambda v: v >= 1, "sampled vectors"),
    "maps": (_path_list, None, "comma-separated map files for ulam"),
    "bins": (_int, lambda v: v >= 2, "Ulam bins"),
    "reference_n": (_int, lambda v: v >= 1000, "reference orbit length"),
    "recurrence_horizon": (_int, lambda v: v >= 1, "recurrence search horizon"),
    "conjugator": (_matrix, None, "constant conjugating matrix L"),
    "out_dir": (str, None, "output directory"),
}

DEFAULTS = {
    "shift": None, "measure": ("uniform",), "n": 100_000, "replicates": 4, "stride": 50,
    "k_schedule": DEFAULT_SCHEDULE, "max_period": 8, "delta": None, "T": 40,
    "tolerance": 1e-8, "s": 1, "window": None, "clustering_eps": 0.1, "n_max": 16,
    "budget": 1 << 20, "prune": True, "projection": None, "point": (0,), "vectors": 100,
    "samples": 10_000, "maps": None, "bins": 128, "reference_n": 10 ** 6,
    "recurrence_horizon": 1 << 20, "conjugator": None, "generator": None,
    "generator2": None, "out_dir": "out",
}

# per-command overrides of the defaults above
COMMAND_DEFAULTS = {
    "ulam": {"n": 20_000, "max_period": 1},
    "norms": {"delta": 0.1, "window": "relative"},
    "cones": {"window": "absolute"},
    "certify": {"delta": 1e-3},
}

REQUIRED = {
    "ulam": ("maps",),
    "certify": ("generator", "projection"),
    "conjugacy": ("generator", "conjugator"),
}

PATH_KEYS = ("generator", "generator2", "shift")


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    generator: str | None = None
    generator2: str | None = None
    shift: str | None = None
    measure: tuple = ("uniform",)
    n: int = 100_000
    replicates: int = 4
    stride: int = 50
    k_schedule: tuple = DEFAULT_SCHEDULE
    max_period: int = 8
    delta: float | None = None
    T: int = 40
    tolerance: float = 1e-8
    s: int = 1
    window: str | None = None
    clustering_eps: float = 0.1
    n_max: int = 16
    budget: int = 1 << 20
    prune: bool = True
    projection: np.ndarray | None = None
    point: tuple = (0,)
    vectors: int = 100
    samples: int = 10_000
    maps: tuple | None = None
    bins: int = 128
    reference_n: int = 10 ** 6
    recurrence_horizon: int = 1 << 20
    conjugator: np.ndarray | None = None
    out_dir: str = "out"
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def task_seed(self, *task) -> int:
        return derive_seed(self.seed, COMMANDS.index(self.command), *task)

    def echo(self) -> list[str]:
        """``key = value`` lines of the effective config, in schema order."""
        out = []
        for key in SCHEMA:
            out.append(f"config.{key} = {_render(getattr(self, key))}")
        return out


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, np.ndarray):
        return "; ".join(" ".join(repr(float(a)) for a in row) for row in v)
    if isinstance(v, tuple):
        return " ".join(str(a) if not isinstance(a, np.ndarray) else _render(a) for a in v)
    return str(v)


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse config text; raises :class:`ConfigError` listing every problem found."""
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    errors = []
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {line!r}"))
            continue
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        if key in values:
            errors.append((lineno, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue
        parser, check, _ = SCHEMA[key]
        try:
            parsed = parser(val)
        except ValueError as exc:
            errors.append((lineno, f"{key}: type mismatch ({exc})"))
            continue
        if check is not None and not check(parsed):
            errors.append((lineno, f"{key}: value {val!r} out of range"))
            continue
        values[key], lines[key] = parsed, lineno

    for key in ("command", "seed"):
        if key not in values:
            errors.append((None, f"missing mandatory field {key!r}"))
    cmd = values.get("command")
    if cmd is not None:
        needed = REQUIRED.get(cmd, ("generator",))
        for key in needed:
            if key not in values:
                errors.append((None, f"missing mandatory field {key!r} for command {cmd!r}"))
    for key in PATH_KEYS:
        if key in values and not (key == "generator" and values[key] == "benchmark"):
            p = Path(values[key])
            p = p if p.is_absolute() else base / p
            if not p.is_file():
                errors.append((lines[key], f"{key}: file {values[key]!r} does not exist"))
    for m in values.get("maps") or ():
        p = Path(m) if Path(m).is_absolute() else base / m
        if not p.is_file():
            errors.append((lines["maps"], f"maps: file {m!r} does not exist"))
    if errors:
        raise ConfigError(errors)

    merged = dict(DEFAULTS)
    merged.update(COMMAND_DEFAULTS.get(cmd, {}))
    merged.update(values)
    return ExperimentConfig(**merged, base_dir=base)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent.resolve())


# ---------------------------------------------------------------------------
# inputs


@dataclass
class Inputs:
    gen: CocycleGenerator | None
    space: ShiftSpace
    measure: BaseMeasure
    maps: list | None = None
    gen2: CocycleGenerator | None = None


def _build_measure(spec: tuple, k: int) -> BaseMeasure:
    if spec[0] == "uniform":
        return BaseMeasure.bernoulli(np.full(k, 1.0 / k))
    if spec[0] == "bernoulli":
        return BaseMeasure.bernoulli(spec[1])
    return BaseMeasure.markov(spec[1])


def load_inputs(cfg: ExperimentConfig) -> Inputs:
    """Read every referenced file; any failure here is a config error."""
    errors = []
    gen = gen2 = maps = None
    try:
        if cfg.generator == "benchmark":
            gen = benchmark_generator()
        elif cfg.generator is not None:
            gen = CocycleGenerator.load(cfg.resolve(cfg.generator))
        if cfg.generator2 is not None:
            gen2 = CocycleGenerator.load(cfg.resolve(cfg.generator2))
    except (ValueError, KeyError, OSError) as exc:
        errors.append((None, f"generator: {exc}"))
    try:
        if cfg.maps is not None:
            maps = [PiecewiseExpandingMap.load(cfg.resolve(m)) for m in cfg.maps]
    except (ValueError, OSError) as exc:
        errors.append((None, f"maps: {exc}"))
    if errors:
        raise ConfigError(errors)

    k = gen.alphabet_size if gen is not None else len(maps)
    try:
        space = ShiftSpace.load(cfg.resolve(cfg.shift)) if cfg.shift else ShiftSpace.full(k)
        if gen is not None:
            gen.check_space(space)
        measure = _build_measure(cfg.measure, space.alphabet_size)
        measure.check_support(space)
    except (ValueError, OSError) as exc:
        raise ConfigError([(None, str(exc))]) from None
    return Inputs(gen, space, measure, maps, gen2)


# ---------------------------------------------------------------------------
# subcommands: each returns {filename: text}


def _csv(header: str, rows) -> str:
    return "\n".join([header, *rows]) + "\n"


def _json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def run_exponents(cfg: ExperimentConfig, inp: Inputs) -> dict:
    gen, space, measure = inp.gen, inp.space, inp.measure
    est = lambda_mu_estimate(gen, space, measure, cfg.n, cfg.replicates, cfg.task_seed(0), cfg.stride)
    r = gen.radius
    x = sample_orbit(space, measure, r, cfg.n + r, cfg.task_seed(1))
    spec = lyapunov_spectrum(gen, x, cfg.n, cfg.stride, seed=cfg.task_seed(2))
    rows = [f"lambda_mu,{cfg.n},{cfg.replicates},{est.lambda_mu!r},{est.lambda_mu_stderr!r},{cfg.seed}"]
    se = spec.stderr if spec.stderr is not None else np.zeros(len(spec.gammas))
    for i, (g, e) in enumerate(zip(spec.gammas, se), 1):
        rows.append(f"gamma_{i},{cfg.n},1,{float(g)!r},{float(e)!r},{cfg.seed}")
    return {"estimates.csv": _csv(ESTIMATE_HEADER, rows),
            "spectrum.csv": _csv(SPECTRUM_HEADER, spectrum_csv_rows(spec, "orbit", cfg.seed))}


def run_periodic(cfg: ExperimentConfig, inp: Inputs) -> dict:
    rows = []
    for p in enumerate_periodic(inp.space, cfg.max_period):
        spec, _ = periodic_spectrum(inp.gen, p)
        rows.extend(spectrum_csv_rows(spec, "periodic", p.label()))
    return {"spectrum.csv": _csv(SPECTRUM_HEADER, rows)}


def _approx_run(cfg: ExperimentConfig, inp: Inputs):
    horizons = Horizons(recurrence=cfg.recurrence_horizon, reference=cfg.reference_n)
    return run_main_experiment(inp.gen, inp.space, inp.measure, cfg.s, cfg.k_schedule,
                               horizons, seed=cfg.task_seed(0))


def run_approx(cfg: ExperimentConfig, inp: Inputs) -> dict:
    run = _approx_run(cfg, inp)
    sc = semicontinuity_check(run)
    rows = []
    for a, (k, n_k) in enumerate(zip(sc.k, sc.n_k)):
        for i in range(sc.margins.shape[1]):
            rows.append(f"{int(k)},{int(n_k)},{i + 1},{float(sc.margins[a, i])!r},"
                        f"{float(sc.tolerance[a, i])!r},{int(sc.checked[a])},"
                        f"{int(sc.violations[a, i])}")
    return {"run.json": run.to_json() + "\n", "errors.csv": run.errors_csv(),
            "semicontinuity.csv": _csv(SEMICONTINUITY_HEADER, rows)}


def run_cones(cfg: ExperimentConfig, inp: Inputs) -> dict:
    gen = inp.gen
    run = _approx_run(cfg, inp)
    spec = run.reference.spectrum
    delta = cfg.delta
    if delta is None:
        theta = inp.space.closing_constants().theta
        delta = delta_budget(spec, cfg.s, holder_constants(gen, inp.space), theta).delta
    params = LyapunovNormParams(delta, cfg.s, spec.lambda_tilde(cfg.s), cfg.T, cfg.window)
    lemma_rows = []
    for h in range(1, cfg.s + 1):
        rep = verify_cone_lemmas(gen, run, h, params, samples=cfg.samples, seed=cfg.task_seed(1))
        lemma_rows.append(",".join(str(v) if not isinstance(v, float) else repr(v)
                                   for v in dataclasses.astuple(rep)))
    last = len(run.records) - 1
    ci = cone_indices(gen, run, params, k_indices=[last], seed=cfg.task_seed(2))
    dm = dimension_match_check(run, ci, params.delta)
    idx_rows = []
    for (k, h, pdim, rdim, ok), ((_, _), i_kh) in zip(dm.rows, sorted(ci.indices.items())):
        idx_rows.append(f"{k},{h},{i_kh},{pdim},{rdim},{int(ok)}")
    return {"cone_lemmas.csv": _csv(CONE_LEMMA_HEADER, lemma_rows),
            "cone_indices.csv": _csv(CONE_INDEX_HEADER, idx_rows),
            "errors.csv": run.errors_csv()}


def run_norms(cfg: ExperimentConfig, inp: Inputs) -> dict:
    point, _ = PeriodicPoint.from_word(cfg.point)
    if not inp.space.admissible(point.word, cyclic=True):
        raise ValueError(f"word {point.label()} is not admissible")
    spec, frame = periodic_spectrum(inp.gen, point)
    s = min(cfg.s, spec.n_groups)
    params = LyapunovNormParams.default(spec, s, cfg.delta, cfg.T, cfg.window)
    rng = np.random.default_rng(cfg.task_seed(0))
    U = rng.standard_normal((cfg.vectors, inp.gen.dimension))
    rows = []
    for j, u in enumerate(U):
        rows.extend(norm_csv_rows(f"{point.label()}/v{j}", full_norm(u, frame, spec, params), params))
    ke = k_delta(frame, spec, params, samples=min(cfg.samples, 2000), seed=cfg.task_seed(1))
    krow = f"{point.label()},{ke.K_delta!r},{ke.samples},{ke.seed}"
    return {"norms.csv": _csv(NORM_HEADER, rows), "k_delta.csv": _csv(K_DELTA_HEADER, [krow])}


def run_sackersell(cfg: ExperimentConfig, inp: Inputs) -> dict:
    rep = sacker_sell_estimate(inp.gen, inp.space, cfg.max_period, cfg.clustering_eps)
    return {"sacker_sell.csv": rep.to_csv()}


def run_bracket(cfg: ExperimentConfig, inp: Inputs) -> dict:
    upper, lower = growth_vs_periodic_radius(inp.gen, inp.space, cfg.n_max, cfg.max_period,
                                             cfg.budget, cfg.prune)
    br = GrowthBracket(np.arange(1, cfg.n_max + 1), np.array(upper), lower, cfg.prune)
    return {"bracket.csv": br.to_csv()}


def run_certify(cfg: ExperimentConfig, inp: Inputs) -> dict:
    P = cfg.projection
    if P.shape[0] != inp.gen.dimension:
        raise ValueError("projection dimension does not match the generator")
    dich = DichotomyData.constant(P, inp.gen.alphabet_size)
    cert = certify_uniform_hyperbolicity(inp.gen, inp.space, dich, cfg.delta,
                                         cfg.max_period, cfg.tolerance)
    return {"certificate.json": _json(dataclasses.asdict(cert))}


def run_ulam(cfg: ExperimentConfig, inp: Inputs) -> dict:
    ly = lasota_yorke_check(inp.maps, inp.measure)
    gen = transfer_cocycle(inp.maps, cfg.bins)
    rep = exceptional_spectrum_ulam(gen, inp.measure, cfg.n, cfg.max_period, seed=cfg.task_seed(0))
    rows = [f"lambda_1,{rep.n},1,{rep.lambda1!r},,{cfg.seed}",
            f"lambda_2,{rep.n},1,{rep.lambda2!r},,{cfg.seed}"]
    prow = [f"{''.join(map(str, w))},{g1!r},{g2!r}" for w, (g1, g2) in rep.periodic.items()]
    doc = dataclasses.asdict(ly) | {"bins": cfg.bins}
    return {"lasota_yorke.json": _json(doc), "estimates.csv": _csv(ESTIMATE_HEADER, rows),
            "ulam_periodic.csv": _csv(ULAM_PERIODIC_HEADER, prow)}


def run_conjugacy(cfg: ExperimentConfig, inp: Inputs) -> dict:
    L = cfg.conjugator
    if L.shape[0] != inp.gen.dimension:
        raise ValueError("conjugator dimension does not match the generator")
    gen2 = inp.gen2 if inp.gen2 is not None else similarity_conjugate(inp.gen, L)
    conj = ConjugacyData(lambda w: w, {(): L})
    rep = conjugacy_invariance_check(inp.gen, gen2, conj, cfg.max_period, inp.space,
                                     tol=cfg.tolerance)
    rows = [f"{''.join(map(str, w))},{d!r}" for w, d in rep.deviations.items()]
    doc = {"max_deviation": rep.max_deviation, "flagged": rep.flagged, "commutes": rep.commutes,
           "min_abs_exponent": rep.min_abs_exponent, "L_condition": rep.L_condition}
    return {"conjugacy.csv": _csv(CONJUGACY_HEADER, rows), "conjugacy.json": _json(doc)}


HANDLERS = {
    "exponents": run_exponents, "periodic": run_periodic, "approx": run_approx,
    "cones": run_cones, "norms": run_norms, "sackersell": run_sackersell,
    "bracket": run_bracket, "certify": run_certify, "ulam": run_ulam,
    "conjugacy": run_conjugacy,
}


# ---------------------------------------------------------------------------
# dispatch


def _versions() -> list[str]:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return [f"version.cocyclab = {own}", f"version.numpy = {np.__version__}",
            f"version.scipy = {scipy.__version__}", f"version.python = {platform.python_version()}"]


def manifest_text(cfg: ExperimentConfig, files, wall: float, status: str) -> str:
    lines = [f"schema = {MANIFEST_SCHEMA}", f"command = {cfg.command}", f"seed = {cfg.seed}",
             f"status = {status}", *cfg.echo(), *_versions(),
             f"artifacts = {' '.join(sorted(files))}",
             f"wall_time_s = {wall:.3f}",
             f"timestamp = {datetime.now(timezone.utc).isoformat(timespec='seconds')}"]
    return "\n".join(lines) + "\n"


def dispatch(cfg: ExperimentConfig, out_dir=None, threads: int | None = None) -> int:
    """Run ``cfg`` and move its artifacts into the output directory.

    Returns the exit status; nothing is left in ``out_dir`` on failure.
    """
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.out_dir)
    try:
        inputs = load_inputs(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        with threadpool_limits(limits=threads):
            files = HANDLERS[cfg.command](cfg, inputs)
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except Exception as exc:  # any module error is a numeric failure of the run
        print(f"{cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - t0
    files["manifest.txt"] = manifest_text(cfg, files, wall, "ok")

    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        for name in files:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cocyclab", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--out-dir", help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    args = ap.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        ap.error("--threads must be positive")
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if args.seed < 0:
            print("config: seed must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        cfg.seed = args.seed
    return dispatch(cfg, args.out_dir, args.threads)


if __name__ == "__main__":
    sys.exit(main())
