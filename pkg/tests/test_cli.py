import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from shelab.cli import main
from shelab.config import EXPERIMENT_KEYS, SCHEMA
from shelab.io import read_table
from shelab.lattice import LatticeDomain, kernel_matrix

SIM = """
[model]
beta = 0.5
[domain]
epsilon = 0.125
[domain.initial]
kind = "indicator"
[solver]
dt = 0.002
t_end = 0.05
[noise]
seed = 3
replicas = 3
[output]
record_every = 5
"""


@pytest.fixture
def cfg_file(tmp_path):
    def make(text=SIM, name="run.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return make


def test_osgood_quadratic(capsys):
    assert main(["osgood"]) == 0
    out = capsys.readouterr().out
    assert "dyadic sum verdict: convergent" in out
    t_line = next(line for line in out.splitlines() if line.startswith("T*(1)"))
    assert abs(float(t_line.split("=")[1]) - 1.0) <= 1e-9


def test_osgood_divergent_and_params(capsys, tmp_path):
    assert main(["osgood", "--drift", "linear"]) == 0
    assert "verdict: divergent" in capsys.readouterr().out
    assert main(["osgood", "--drift", "power", "--param", "p=3", "--c", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    t_line = next(line for line in out.splitlines() if line.startswith("T*(2)"))
    assert abs(float(t_line.split("=")[1]) - 0.125) <= 1e-9
    assert (tmp_path / "osgood.tsv").exists() and (tmp_path / "manifest.json").exists()
    assert main(["osgood", "--param", "p"]) == 1


def test_simulate_twice_byte_identical(cfg_file, tmp_path):
    cfg = cfg_file()
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", cfg, "--out", str(a)]) == 0
    assert main(["simulate", cfg, "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.json")
    assert {"summary.tsv", "replicas.tsv", "trajectory.tsv", "config.toml"} <= set(names)
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_outputs_start_with_digest_and_manifest_matches(cfg_file, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", cfg_file(), "--out", str(out), "--seed", "8"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert list(man)[0] == "config_digest" and man["seed"] == 8
    for name in man["files"]:
        first = (out / name).read_text().splitlines()[0]
        assert first == f"# config_digest: {man['config_digest']}"
    meta, cols, rows = read_table(out / "replicas.tsv")
    assert meta["seed"] == "8" and cols[0] == "replica" and len(rows) == 3


def test_seed_override_changes_digest(cfg_file, tmp_path):
    main(["simulate", cfg_file(), "--out", str(tmp_path / "a")])
    main(["simulate", cfg_file(), "--out", str(tmp_path / "b"), "--seed", "4"])
    da = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_digest"]
    db = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_digest"]
    assert da != db


def test_compare_with_unsupported_profile_exits_1(cfg_file, tmp_path, capsys):
    text = SIM.replace('kind = "indicator"', 'kind = "constant"')
    assert main(["compare", cfg_file(text), "--kind", "line", "--out", str(tmp_path / "c")]) == 1
    assert "hypothesis violated" in capsys.readouterr().err
    assert not (tmp_path / "c").exists()


def test_compare_boundary_runs(cfg_file, tmp_path, capsys):
    assert main(["compare", cfg_file(), "--kind", "boundary", "--out", str(tmp_path / "c")]) == 0
    assert "ordering_claim" in capsys.readouterr().out


def test_config_errors_exit_1(cfg_file, capsys):
    bad = SIM.replace("dt = 0.002", "dt = 0.015625") + "[experiment]\nwindow_a = 0.6\n"
    assert main(["simulate", cfg_file(bad)]) == 1
    err = capsys.readouterr().err
    assert "[stability]" in err and "[window-range]" in err
    assert main(["simulate", "/nonexistent.toml"]) == 1
    assert main(["frobnicate"]) == 1


def test_resource_error_exits_2(tmp_path):
    assert main(["kernel-dump", "--epsilon", str(1 / 5000), "--boundary", "periodic", "--t", "0.01",
                 "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("cmd,exps", [
    ("simulate", ["simulate"]),
    ("compare", ["line_vs_dirichlet", "boundary"]),
    ("convergence", ["epsilon_convergence"]),
    ("mc", list(EXPERIMENT_KEYS)),
])
def test_help_lists_consumed_keys(cmd, exps, capsys):
    assert main([cmd, "--help"]) == 0
    out = capsys.readouterr().out
    for sec in ("model", "domain", "solver", "noise", "output"):
        for key in SCHEMA[sec]:
            assert key in out, (cmd, key)
    for e in exps:
        for key in EXPERIMENT_KEYS[e]:
            assert key in out, (cmd, key)


def test_kernel_dump_matches_kernel_matrix(tmp_path):
    assert main(["kernel-dump", "--epsilon", "0.25", "--boundary", "periodic", "--t", "0.02",
                 "--out", str(tmp_path)]) == 0
    meta, cols, rows = read_table(tmp_path / "kernel.tsv")
    assert cols == ["t", "i", "j", "value"]
    K = kernel_matrix(0.02, LatticeDomain.unit_interval(0.25, "periodic")).entries
    for t, i, j, v in rows:
        assert float(t) == 0.02 and float(v) == K[int(i), int(j)]
    assert len(rows) == 16


def test_kernel_dump_bessel_is_free_walk(tmp_path):
    from shelab.lattice import walk_kernel

    assert main(["kernel-dump", "--epsilon", "0.25", "--t", "0.05", "--method", "bessel",
                 "--out", str(tmp_path)]) == 0
    _, _, rows = read_table(tmp_path / "kernel.tsv")
    vals = {(int(i), int(j)): float(v) for _, i, j, v in rows}
    assert vals[(1, 3)] == walk_kernel(0.05, 0.25, 2)
    assert np.isclose(vals[(2, 2)], walk_kernel(0.05, 0.25, 0), rtol=0, atol=0)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "shelab", "osgood", "--drift", "xlog"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0 and "convergent" in res.stdout
