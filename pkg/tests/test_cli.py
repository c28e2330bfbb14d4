import subprocess
import sys

import pytest

from mpirtik.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("problem.n = 32\nnoise.mu_percent = 3\nsolver.method = air\nsolver.alpha2 = 1e-3\n")
    return p


def test_run_and_report(tmp_path, cfg, capsys):
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "table3.csv").exists()
    assert main(["report", "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "sRRE" in capsys.readouterr().out


def test_strict_divergence(tmp_path, cfg):
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--strict"]) == EXIT_DIVERGED


def test_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("solver.alpha2 = -1\nsolver.nope = 2\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 1" in err and "line 2" in err


def test_filters_needs_refinement_method(tmp_path, cfg):
    assert main(["filters", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_filters_pipeline(tmp_path):
    c = tmp_path / "f.cfg"
    c.write_text("problem.n = 32\nsolver.triples = (2,2,2)\n")
    assert main(["filters", "--config", str(c), "--out", str(tmp_path / "o")]) == EXIT_OK
    out = tmp_path / "o"
    assert (out / "table2.csv").exists() and not (out / "table3.csv").exists()
    assert any((out / "filters").glob("*_diff.csv"))


def test_io_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == EXIT_IO
    assert main(["report", "--out", str(tmp_path / "nothing")]) == EXIT_IO


def test_gen_and_seed_override(tmp_path, cfg):
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "p1")]) == EXIT_OK
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "p2"), "--seed", "5"]) == EXIT_OK
    assert (tmp_path / "p1" / "A.txt").read_text() == (tmp_path / "p2" / "A.txt").read_text()
    assert (tmp_path / "p1" / "b.txt").read_text() != (tmp_path / "p2" / "b.txt").read_text()


def test_module_entry_point(tmp_path, cfg):
    r = subprocess.run([sys.executable, "-m", "mpirtik", "run", "--config", str(cfg), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_OK, r.stderr
