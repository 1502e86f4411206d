import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datascope.core import Dataset
from datascope.sketch import (
    CardinalitySketch,
    exact_unique_count,
    hash_key,
    hash_pairs,
    hll_count,
    hll_estimate,
    hll_insert,
    hll_merge,
    parse_key,
    sa_key,
)


def flat_dataset(states, actions):
    n = len(states)
    return Dataset.from_arrays(np.arange(n), np.zeros(n, int), states, actions,
                               np.zeros(n), states, np.zeros(n, bool))


def test_key_round_trip():
    assert parse_key(sa_key(12, 3)) == (12, 3)


def test_frozen_hashes():
    assert hash_key(sa_key(0, 0)) == 0x960C83304086AB74
    assert hash_key(sa_key(7, 3)) == 0x3DD27997BA5926E8


def test_vector_and_scalar_hash_agree():
    s, a = np.array([0, 5, 99]), np.array([1, 0, 2])
    assert [int(h) for h in hash_pairs(s, a)] == [hash_key(sa_key(x, y)) for x, y in zip(s, a)]


def test_empty_sketch_is_zero():
    assert CardinalitySketch().estimate() == 0.0


def test_duplicates_do_not_count():
    sk = CardinalitySketch()
    for _ in range(100):
        hll_insert(sk, sa_key(4, 2))
    assert hll_estimate(sk) == pytest.approx(1.0, abs=0.01)


def test_frozen_estimates():
    sk = CardinalitySketch().update(np.arange(1000), np.zeros(1000, int))
    assert sk.estimate() == pytest.approx(998.8372483110273, rel=1e-12)
    sk = CardinalitySketch().update(np.arange(100_000), np.zeros(100_000, int))
    assert sk.estimate() == pytest.approx(99420.14388050637, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 5)), max_size=300),
       st.integers(1, 299))
def test_merge_equals_single_stream(pairs, cut):
    s = np.array([p[0] for p in pairs], dtype=np.int64)
    a = np.array([p[1] for p in pairs], dtype=np.int64)
    whole = CardinalitySketch(p=10).update(s, a)
    left = CardinalitySketch(p=10).update(s[:cut], a[:cut])
    right = CardinalitySketch(p=10).update(s[cut:], a[cut:])
    assert hll_merge(left, right) == whole
    assert hll_merge(right, left) == whole


def test_merge_is_idempotent():
    sk = CardinalitySketch().update(np.arange(50), np.ones(50, int))
    assert sk.merge(sk) == sk


def test_incompatible_merge():
    with pytest.raises(ValueError):
        CardinalitySketch(p=12).merge(CardinalitySketch(p=14))
    with pytest.raises(ValueError):
        CardinalitySketch(seed=1).merge(CardinalitySketch(seed=2))


def test_serialization_round_trip():
    sk = CardinalitySketch(p=8, seed=99).update(np.arange(300), np.zeros(300, int))
    back = CardinalitySketch.from_bytes(sk.to_bytes())
    assert back == sk and back.estimate() == sk.estimate()
    with pytest.raises(ValueError):
        CardinalitySketch.from_bytes(b"XXXX" + sk.to_bytes()[4:])
    with pytest.raises(ValueError):
        CardinalitySketch.from_bytes(sk.to_bytes()[:-1])


def test_precision_bounds():
    for p in (3, 19):
        with pytest.raises(ValueError):
            CardinalitySketch(p=p)


def test_dataset_counts_and_shards(rng):
    s = rng.integers(0, 3000, 20_000)
    a = rng.integers(0, 4, 20_000)
    ds = flat_dataset(s, a)
    exact = exact_unique_count(ds)
    assert exact == len(set(zip(s.tolist(), a.tolist())))
    one = hll_count(ds)
    assert abs(one - exact) / exact <= 0.02
    assert hll_count(ds, shards=7) == one


def test_exact_count_empty():
    assert exact_unique_count(Dataset.empty()) == 0
