import csv
import io
import json
import subprocess
import sys

import pytest

from conftest import fixture_dataset
from datascope import cli, verify
from datascope.io import read_dataset, write_dataset


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def cartpole(tmp_path_factory):
    """Synthetic files with CartPole-scale unique counts and average returns."""
    root = tmp_path_factory.mktemp("cartpole")
    specs = {"random": (55916, 22.23), "replay": (95384, 208.05), "expert": (1000, 500.0)}
    return {k: write_dataset(fixture_dataset(u, g, n_traj=200, env="cartpole", scheme=k),
                             root / f"{k}.jsonl") for k, (u, g) in specs.items()}


def test_characterize_reference_numbers(capsys, cartpole):
    code, out, _ = run(capsys, "characterize", cartpole["random"], cartpole["replay"],
                       "--ref", cartpole["replay"], "--min-data", cartpole["random"],
                       "--expert-data", cartpole["expert"])
    assert code == 0
    random, replay = json.loads(out)
    assert random["tq"] == pytest.approx(0.0, abs=1e-4)
    assert random["saco"] == pytest.approx(0.58622, abs=1e-4)
    assert random["lsaco"] == pytest.approx(0.95343, abs=1e-4)
    assert replay["tq"] == pytest.approx(0.38893, abs=1e-4)


def test_characterize_hll_within_two_percent(capsys, cartpole):
    args = ["characterize", cartpole["random"], "--ref", cartpole["replay"],
            "--min-return", 22.23, "--expert-return", 500, "--format", "csv"]
    _, exact, _ = run(capsys, *args)
    _, approx, _ = run(capsys, *args, "--counter", "hll:14")
    e = next(csv.DictReader(io.StringIO(exact)))
    h = next(csv.DictReader(io.StringIO(approx)))
    assert abs(float(h["unique_sa"]) - 55916) / 55916 <= 0.02
    assert abs(float(h["saco"]) - float(e["saco"])) <= 0.02 * float(e["saco"]) * 2


def test_characterize_needs_references(capsys, cartpole):
    with pytest.raises(SystemExit):
        cli.main(["characterize", str(cartpole["random"]), "--ref", str(cartpole["replay"])])


def test_generate_train_shift(capsys, tmp_path):
    paths = {}
    for scheme in ("random", "expert"):
        paths[scheme] = tmp_path / f"{scheme}.jsonl"
        code, out, _ = run(capsys, "generate", "--env", "grid5", "--scheme", scheme,
                           "--n", 1500, "--out", paths[scheme], "--seed", 2)
        assert code == 0 and json.loads(out)["n"] == 1500
    assert len(read_dataset(paths["expert"])) == 1500

    code, out, _ = run(capsys, "train", "--data", paths["expert"], "--algo", "bc",
                       "--iters", 40, "--out", tmp_path / "bc.json")
    assert code == 0
    rec = json.loads(out)
    assert rec["omega"] == pytest.approx(1.0) and rec["env"] == "grid5"
    assert json.loads((tmp_path / "bc.json").read_text())["algo"] == "bc"

    code, out, _ = run(capsys, "shift", "--a", paths["random"], "--b", paths["expert"])
    assert code == 0
    assert json.loads(out)["flags"]["policy"]


def test_generate_is_reproducible(capsys, tmp_path):
    for name in ("a", "b"):
        run(capsys, "generate", "--env", "chain8", "--scheme", "noisy", "--n", 400,
            "--out", tmp_path / f"{name}.jsonl", "--seed", 9)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


@pytest.mark.parametrize("line, lineno", [
    ('{"ep":0,"t":1,"s":1,"a":0,"r":0.0}', 2),
    ("garbage", 2),
])
def test_malformed_input_exit_2(capsys, tmp_path, line, lineno):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"ep":0,"t":0,"s":0,"a":0,"r":0.0,"sn":1,"d":false}\n' + line + "\n")
    code, _, err = run(capsys, "characterize", bad, "--ref", bad,
                       "--min-return", 0, "--expert-return", 1)
    assert code == 2
    assert f"line {lineno}" in err


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", tmp_path / "nope.jsonl", "--algo", "bc")
    assert code == 2 and "error" in err


def test_incomparable_shift_exit_2(capsys, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.write_text('{"ep":0,"t":0,"s":0,"a":0,"r":0.0,"sn":1,"d":true}\n')
    b.write_text('{"ep":0,"t":0,"s":2,"a":1,"r":0.0,"sn":3,"d":true}\n')
    code, _, err = run(capsys, "shift", "--a", a, "--b", b)
    assert code == 2 and "incomparable" in err


def test_sweep_partial_failure_exit_4(capsys, tmp_path):
    code, _, err = run(capsys, "sweep", "--envs", "chain8", "nope", "--schemes", "random",
                       "--algos", "bc", "--dataset-seeds", 1, "--run-seeds", 1, "--n", 200,
                       "--iters", 20, "--out-dir", tmp_path)
    assert code == 4 and "failed" in err
    assert (tmp_path / "results.csv").exists()


def test_sweep_then_correlate(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "--envs", "chain8", "--algos", "bc", "--dataset-seeds", 2,
                     "--run-seeds", 1, "--n", 300, "--iters", 20, "--out-dir", tmp_path)
    assert code == 0
    code, out, _ = run(capsys, "correlate", tmp_path / "results.csv", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0].startswith("x,y,n")
    assert out == (tmp_path / "correlations.csv").read_text()


def test_verify_theory(capsys):
    code, out, _ = run(capsys, "verify-theory", "--n", 10)
    assert code == 0
    assert all(line.startswith("PASS") for line in out.splitlines())


def test_verify_theory_failure_exit_3(capsys, monkeypatch):
    failing = [verify.CheckResult("x", False, 1.0, 1e-10, 1)]
    monkeypatch.setattr(verify, "run_all", lambda n, seed: failing)
    code, out, _ = run(capsys, "verify-theory")
    assert code == 3 and out.startswith("FAIL")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "datascope", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "characterize" in proc.stdout
