import json

import numpy as np
import pytest

from datascope._validation import DataFormatError
from datascope.core import PolicyTable, sample_transitions
from datascope.envs import make_env
from datascope.io import dumps, format_line, manifest_path, parse_lines, read_dataset, write_dataset

GOOD = '{"ep":0,"t":0,"s":0,"a":1,"r":0.5,"sn":1,"d":false}'

MALFORMED = {
    "not json": ("{oops", 2),
    "missing field": ('{"ep":0,"t":1,"s":1,"a":0,"r":0.0,"sn":2}', 2),
    "negative id": ('{"ep":0,"t":1,"s":-1,"a":0,"r":0.0,"sn":2,"d":false}', 2),
    "string reward": ('{"ep":0,"t":1,"s":1,"a":0,"r":"x","sn":2,"d":false}', 2),
    "skipped step": ('{"ep":0,"t":3,"s":1,"a":0,"r":0.0,"sn":2,"d":false}', 2),
    "broken stitching": ('{"ep":0,"t":1,"s":7,"a":0,"r":0.0,"sn":2,"d":false}', 2),
    "bool as int": ('{"ep":0,"t":1,"s":1,"a":true,"r":0.0,"sn":2,"d":false}', 2),
}


def test_format_line_is_canonical():
    assert format_line(0, 0, 0, 1, 0.5, 1, False) == GOOD
    assert format_line(3, 2, 5, 0, -1, 6, True).endswith('"r":-1.0,"sn":6,"d":true}')


def test_manifest_path():
    assert manifest_path("dir/noisy_3.jsonl").name == "noisy_3.manifest.json"


@pytest.mark.parametrize("case", sorted(MALFORMED))
def test_malformed_lines_report_line_number(case):
    line, lineno = MALFORMED[case]
    with pytest.raises(DataFormatError, match=f"^line {lineno}:"):
        parse_lines([GOOD, line])


def test_terminal_then_continue():
    first = GOOD.replace('"d":false', '"d":true')
    second = '{"ep":0,"t":1,"s":1,"a":0,"r":0.0,"sn":2,"d":false}'
    with pytest.raises(DataFormatError, match="line 2"):
        parse_lines([first, second])


def test_non_contiguous_episode():
    lines = [GOOD, '{"ep":1,"t":0,"s":0,"a":0,"r":0.0,"sn":1,"d":true}',
             '{"ep":0,"t":1,"s":1,"a":0,"r":0.0,"sn":2,"d":false}']
    with pytest.raises(DataFormatError, match="line 3"):
        parse_lines(lines)


def test_manifest_count_mismatch(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text(GOOD + "\n")
    manifest_path(path).write_text(json.dumps({"n": 2, "n_states": 2, "n_actions": 2}))
    with pytest.raises(DataFormatError, match="n=2"):
        read_dataset(path)


def test_blank_lines_are_skipped():
    ds = parse_lines([GOOD, "", "  "])
    assert len(ds) == 1


def test_round_trip_byte_identical(tmp_path, rng):
    mdp = make_env("grid5-slip")
    ds = sample_transitions(mdp, PolicyTable.uniform(mdp.n_states, 4), 100_000, rng,
                            env="grid5-slip", scheme="random", seed=1)
    first = write_dataset(ds, tmp_path / "a.jsonl")
    back = read_dataset(first)
    assert back == ds
    second = write_dataset(back, tmp_path / "b.jsonl")
    assert first.read_bytes() == second.read_bytes()
    assert manifest_path(first).read_bytes() == manifest_path(second).read_bytes()


def test_awkward_floats_survive(tmp_path):
    lines = ['{"ep":0,"t":0,"s":0,"a":0,"r":0.1,"sn":1,"d":false}',
             '{"ep":0,"t":1,"s":1,"a":0,"r":1e-300,"sn":2,"d":false}',
             '{"ep":0,"t":2,"s":2,"a":0,"r":-123456.789,"sn":3,"d":true}']
    ds = parse_lines(lines)
    np.testing.assert_array_equal(parse_lines(dumps(ds).splitlines()).r, ds.r)
