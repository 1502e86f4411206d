import math

import pytest

from datascope.io import read_dataset
from datascope.sweep import RESULT_FIELDS, SweepSpec, correlations, read_results, run_sweep

SMALL = SweepSpec(envs=("chain8",), dataset_seeds=2, run_seeds=2, algorithms=("bc", "qlearn"),
                  n_samples=500, iterations=40)


@pytest.fixture(scope="module")
def small():
    return run_sweep(SMALL)


def test_row_count(small):
    assert SMALL.n_runs == 1 * 5 * 2 * 2 * 2
    assert len(small.rows) == SMALL.n_runs
    assert small.n_failed == 0


def test_default_grid_size():
    assert SweepSpec().n_runs == 3 * 5 * 3 * 6 * 3


def test_rows_have_all_fields(small):
    for row in small.rows:
        assert set(RESULT_FIELDS) <= set(row)
        assert row["status"] == "ok"
        assert math.isfinite(row["omega"])


def test_replay_saco_is_one(small):
    for row in small.rows:
        if row["scheme"] == "replay":
            assert row["saco"] == 1.0


def test_csv_round_trip(small):
    back = read_results(small.to_csv())
    assert len(back) == len(small.rows)
    assert back[0]["algo"] == small.rows[0]["algo"]
    assert back[0]["omega"] == pytest.approx(small.rows[0]["omega"])


def test_correlations_from_csv_match(small):
    again = correlations(read_results(small.to_csv()), ("bc", "qlearn"))
    for a, b in zip(again.rows, small.table.rows):
        assert a.x == b.x and a.y == b.y
        if a.spearman_rho is not None:
            assert a.spearman_rho == pytest.approx(b.spearman_rho)


def test_deterministic(small):
    assert run_sweep(SMALL).to_csv() == small.to_csv()


def test_outputs_written(tmp_path):
    spec = SweepSpec(envs=("chain8",), schemes=("random", "replay"), dataset_seeds=1,
                     run_seeds=1, algorithms=("bc",), n_samples=300, iterations=20,
                     output_dir=str(tmp_path))
    run_sweep(spec)
    assert (tmp_path / "results.csv").exists() and (tmp_path / "correlations.csv").exists()
    ds = read_dataset(tmp_path / "datasets" / "chain8_random_0.jsonl")
    assert len(ds) == 300


def test_failed_dataset_group_is_recorded():
    spec = SweepSpec(envs=("nope",), schemes=("random",), dataset_seeds=1, run_seeds=1,
                     algorithms=("bc",), n_samples=100, iterations=20)
    res = run_sweep(spec)
    assert res.n_failed == len(res.rows) >= 1
    assert res.rows[0]["status"].startswith("failed")


def test_bad_results_text():
    with pytest.raises((ValueError, KeyError)):
        read_results("env,scheme\nx,y\n")
