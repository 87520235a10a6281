import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from annakv.lattice import (
    CodecError,
    LwwCell,
    SimClock,
    Stamper,
    Timestamp,
    decode_cell,
    dominates,
    encode_cell,
    merge,
    merge_all,
)


def cell(clock, node, op, payload=b"v"):
    return LwwCell(Timestamp(clock, node, op), payload)


timestamps = st.builds(
    Timestamp,
    st.integers(0, 50),
    st.integers(0, 4),
    st.integers(0, 4),
)
cells = st.builds(LwwCell, timestamps, st.binary(max_size=8))


def test_greater_clock_wins():
    a, b = cell(7, 2, 0, b"y"), cell(5, 1, 0, b"x")
    assert merge(a, b) == a
    assert merge(b, a) == a


def test_merge_is_idempotent_on_one_cell():
    a = cell(3, 1, 1)
    assert merge(a, a) is a


def test_node_seq_breaks_clock_ties():
    a, b = cell(5, 1, 0, b"x"), cell(5, 2, 0, b"y")
    assert merge(a, b) == b


def test_dominates_examples():
    assert dominates(cell(7, 2, 0), cell(5, 1, 0))
    a = cell(4, 4, 4)
    assert dominates(a, cell(4, 4, 4, b"other"))
    assert not dominates(cell(5, 1, 0), cell(5, 1, 1))


@given(cells, cells)
def test_dominates_matches_merge(a, b):
    assert (merge(a, b) is a) == dominates(a, b)


@given(cells, cells, cells)
def test_merge_associative_commutative(a, b, c):
    assert merge(a, merge(b, c)).ts == merge(merge(a, b), c).ts
    assert merge(a, b).ts == merge(b, a).ts
    assert merge(a, a) == a


@given(st.lists(cells, min_size=1, max_size=30))
def test_merge_result_is_an_input(cs):
    out = merge_all(cs)
    assert any(out is c for c in cs)
    assert out.ts == max(c.ts for c in cs)


def test_thousand_cells_any_order_same_result():
    rng = random.Random(7)
    # distinct timestamps so the winner is unique
    stamps = rng.sample(range(10**6), 1000)
    cs = [cell(s, rng.randrange(8), rng.randrange(8), str(s).encode()) for s in stamps]
    expected = max(cs, key=lambda c: c.ts)
    for _ in range(20):
        rng.shuffle(cs)
        assert merge_all(cs) == expected
        # a random binary-tree parenthesisation
        work = list(cs)
        while len(work) > 1:
            i = rng.randrange(len(work) - 1)
            work[i : i + 2] = [merge(work[i], work[i + 1])]
        assert work[0] == expected


@settings(max_examples=200)
@given(st.lists(cells, min_size=1, max_size=20), st.randoms())
def test_gossip_replay_with_duplicates(msgs, rnd):
    replay = msgs + [rnd.choice(msgs) for _ in range(len(msgs))]
    rnd.shuffle(replay)
    clean = sorted(set(msgs), key=lambda c: (c.ts, c.payload))
    assert merge_all(replay).ts == merge_all(clean).ts


def test_stamper_is_strictly_increasing_under_frozen_clock():
    s = Stamper(3, SimClock(100))
    seen = [s.stamp() for _ in range(5)]
    assert all(x < y for x, y in itertools.pairwise(seen))
    assert {t.node_seq for t in seen} == {3}


@given(cells)
def test_cell_codec_round_trip(c):
    assert decode_cell(encode_cell(c)) == c


def test_cell_codec_layout():
    raw = encode_cell(cell(1, 2, 3, b"ab"))
    assert raw == bytes.fromhex("0000000000000001" "00000002" "00000003" "00000002") + b"ab"
    with pytest.raises(CodecError):
        decode_cell(raw[:-1])


def test_tombstone_is_empty_payload():
    assert cell(1, 1, 1, b"").is_tombstone
    assert not cell(1, 1, 1, b"x").is_tombstone
