import numpy as np
import pytest

from cocyclab.cli import (EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, ConfigError, main, parse_config)
from cocyclab.cocycle import CocycleGenerator

GEN = CocycleGenerator.from_matrices([np.diag([2.0, 0.5]), [[1.0, 1.0], [0.0, 1.0]]])


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "gen.txt").write_text(GEN.to_text())
    return tmp_path


def _run(workdir, body, *extra):
    cfg = workdir / "run.cfg"
    cfg.write_text(body)
    out = workdir / "out"
    return main(["--config", str(cfg), "--out-dir", str(out), *extra]), out


def _strip_volatile(text):
    return "\n".join(l for l in text.splitlines()
                     if not l.startswith(("wall_time_s", "timestamp")))


def test_parse_defaults_and_command_overrides(workdir):
    cfg = parse_config("command = norms\nseed = 3\ngenerator = gen.txt\n", workdir)
    assert cfg.delta == 0.1 and cfg.window == "relative" and cfg.T == 40
    cfg = parse_config("command = ulam\nseed = 0\nmaps = m.txt\n".replace("m.txt", "gen.txt"), workdir)
    assert cfg.n == 20_000 and cfg.max_period == 1


def test_parse_reports_every_error_with_lines(workdir):
    with pytest.raises(ConfigError) as info:
        parse_config("command = approx\nn = ten\nfoo = 1\ngenerator = gen.txt\n", workdir)
    errs = info.value.errors
    assert (2, ) == tuple(e[0] for e in errs if "type mismatch" in e[1])
    assert any(e[0] == 3 and "unknown key" in e[1] for e in errs)
    assert any("'seed'" in e[1] for e in errs)


def test_parse_missing_file_and_range(workdir):
    with pytest.raises(ConfigError) as info:
        parse_config("command = exponents\nseed = -1\ngenerator = nope.txt\n", workdir)
    msgs = [m for _, m in info.value.errors]
    assert any("out of range" in m for m in msgs) and any("does not exist" in m for m in msgs)


def test_invalid_generator_exits_2_without_artifacts(workdir):
    (workdir / "bad.txt").write_text("dim 2\nradius 0\n0 1 2 3\n")
    code, out = _run(workdir, "command = exponents\nseed = 0\ngenerator = bad.txt\n")
    assert code == EXIT_CONFIG
    assert not out.exists() or not any(out.iterdir())


def test_exponents_headers(workdir):
    code, out = _run(workdir, "command = exponents\nseed = 1\ngenerator = gen.txt\nn = 2000\n"
                              "replicates = 2\n")
    assert code == EXIT_OK
    est = (out / "estimates.csv").read_text().splitlines()
    assert est[0] == "quantity,n,replicates,value,stderr,seed"
    assert est[1].startswith("lambda_mu,2000,2,")
    manifest = (out / "manifest.txt").read_text()
    assert "schema = cocyclab.manifest/1" in manifest and "seed = 1" in manifest


def test_approx_deterministic_and_seed_override(workdir):
    body = ("command = approx\nseed = 5\ngenerator = gen.txt\nreference_n = 5000\n"
            "k_schedule = 2,4,8\nrecurrence_horizon = 65536\n")
    code, out = _run(workdir, body)
    assert code == EXIT_OK
    first = {p.name: p.read_text() for p in out.iterdir()}
    assert first["errors.csv"].splitlines()[0] == "k,n_k,i,gamma_pk,gamma_mu,error"
    assert first["semicontinuity.csv"].splitlines()[0] == "k,n_k,i,margin,tolerance,checked,violation"
    code, out = _run(workdir, body)
    second = {p.name: p.read_text() for p in out.iterdir()}
    assert first.keys() == second.keys()
    for name in first:
        assert _strip_volatile(first[name]) == _strip_volatile(second[name]), name
    code, out = _run(workdir, body, "--seed", "6")
    assert code == EXIT_OK
    assert "seed = 6" in (out / "manifest.txt").read_text()
    assert (out / "errors.csv").read_text() != first["errors.csv"]


def test_bracket_budget_exit_4(workdir):
    code, out = _run(workdir, "command = bracket\nseed = 0\ngenerator = gen.txt\nn_max = 14\n"
                              "budget = 50\nprune = false\n")
    assert code == EXIT_BUDGET
    assert not (out / "bracket.csv").exists()


def test_periodic_and_sackersell(workdir):
    code, out = _run(workdir, "command = periodic\nseed = 0\ngenerator = gen.txt\nmax_period = 3\n")
    assert code == EXIT_OK and (out / "spectrum.csv").exists()
    code, out = _run(workdir, "command = sackersell\nseed = 0\ngenerator = gen.txt\nmax_period = 6\n")
    assert code == EXIT_OK
    assert (out / "sacker_sell.csv").read_text().startswith("a_i,b_i,support_count")


def test_ulam_command(workdir):
    (workdir / "t3.txt").write_text("branch 0 0.3333333333333333 3 0\n"
                                    "branch 0.3333333333333333 0.6666666666666666 3 -1\n"
                                    "branch 0.6666666666666666 1 3 -2\n")
    code, out = _run(workdir, "command = ulam\nseed = 0\nmaps = t3.txt,t3.txt\nbins = 32\nn = 2000\n")
    assert code == EXIT_OK
    assert (out / "ulam_periodic.csv").read_text().startswith("word,gamma_1,gamma_2")
