import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccs.analysis_approx import AllocationSpec, ptree_bound
from ccs.gf2 import BitMatrix, BitVector
from ccs.treecode import (
    ParityProfile,
    TreeCodebook,
    check_parity_stage,
    encode,
    encode_many,
    message_fragments,
    tree_decode,
)

FULL_PROFILE = ParityProfile.from_parity(15, (6, 8, 8, 8, 8, 8, 8, 8, 13, 15))


def small_code():
    p = ParityProfile(3, (3, 1), (0, 2))
    return TreeCodebook(p, {(0, 1): BitMatrix.ones(3, 2)})


def test_profile_invariants():
    assert FULL_PROFILE.B == 75 and FULL_PROFILE.n == 11 and FULL_PROFILE.M == 165
    assert sum(FULL_PROFILE.l) == FULL_PROFILE.M - FULL_PROFILE.B
    with pytest.raises(ValueError):
        ParityProfile(3, (2, 3), (1, 0))
    with pytest.raises(ValueError):
        ParityProfile(3, (3, 1), (0, 1))
    with pytest.raises(ValueError):
        ParityProfile.from_parity(3, (4,))


def test_codebook_shapes_checked():
    p = ParityProfile(3, (3, 1), (0, 2))
    with pytest.raises(ValueError):
        TreeCodebook(p, {(0, 1): BitMatrix.ones(2, 2)})
    code = TreeCodebook.sample(FULL_PROFILE, 0)
    assert code.generator(3, 9).shape == (FULL_PROFILE.m[3], FULL_PROFILE.l[9])


def test_encode_hand_example():
    cw = encode(BitVector.from_str("1011"), small_code())
    assert [str(f) for f in cw.fragments] == ["101", "100"]


def test_encode_zero_message():
    code = TreeCodebook.sample(FULL_PROFILE, 3)
    cw = encode(BitVector.zeros(75), code)
    assert all(f.value == 0 and f.length == 15 for f in cw.fragments)


def test_encode_single_fragment():
    p = ParityProfile(5, (5,), (0,))
    code = TreeCodebook.sample(p, 1)
    w = BitVector.from_str("10110")
    assert encode(w, code).fragments == (w,)


def test_encode_length_mismatch():
    with pytest.raises(ValueError):
        encode(BitVector.zeros(4), TreeCodebook.sample(FULL_PROFILE, 0))


def test_encode_many_matches_encode():
    code = TreeCodebook.sample(FULL_PROFILE, 5)
    rnd = random.Random(5)
    msgs = [rnd.getrandbits(75) for _ in range(20)]
    batch = encode_many(message_fragments(msgs, FULL_PROFILE), code)
    for row, w in zip(batch, msgs):
        assert tuple(int(x) for x in row) == encode(BitVector(w, 75), code).as_ints()


def test_check_parity_valid_and_flipped():
    code = small_code()
    cw = encode(BitVector.from_str("1011"), code)
    assert check_parity_stage(list(cw.fragments), code, 1)
    bad = [cw.fragments[0], BitVector.from_str("101")]
    assert not check_parity_stage(bad, code, 1)
    with pytest.raises(ValueError):
        check_parity_stage(list(cw.fragments), code, 0)
    with pytest.raises(ValueError):
        check_parity_stage(list(cw.fragments), code, 2)


def test_check_parity_every_stage_of_codeword():
    code = TreeCodebook.sample(FULL_PROFILE, 9)
    cw = encode(BitVector(random.Random(1).getrandbits(75), 75), code)
    assert all(check_parity_stage(list(cw.fragments), code, j) for j in range(1, 11))


def test_check_parity_vacuous_stage():
    p = ParityProfile.from_parity(4, (0, 2))
    code = TreeCodebook.sample(p, 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        path = [int(x) for x in rng.integers(0, 16, 3)]
        assert check_parity_stage(path, code, 1)


def test_decode_single_message():
    code = TreeCodebook.sample(FULL_PROFILE, 11)
    w = random.Random(2).getrandbits(75)
    cw = encode(BitVector(w, 75), code)
    res = tree_decode([[f] for f in cw.fragments], code)
    assert res.messages == {w}
    assert res.stats.failed_roots == 0


def _lists_for(msgs, code):
    coded = encode_many(message_fragments(msgs, code.profile), code)
    return [coded[:, j] for j in range(code.profile.n)]


def test_decode_order_independent():
    code = TreeCodebook.sample(FULL_PROFILE, 12)
    rnd = random.Random(3)
    msgs = [rnd.getrandbits(75) for _ in range(30)]
    lists = _lists_for(msgs, code)
    shuffled = [np.random.default_rng(j).permutation(x) for j, x in enumerate(lists)]
    a, b = tree_decode(lists, code), tree_decode(shuffled, code)
    assert a.messages == b.messages
    assert a.stats.survivors == b.stats.survivors


def test_decode_five_messages_matches_bound():
    # noiseless lists with K = 5: per-root failure rate should sit below E[L~_10]
    rnd = random.Random(4)
    draws, failures, roots = 1000, 0, 0
    for d in range(draws):
        code = TreeCodebook.sample(FULL_PROFILE, 1000 + d)
        msgs = [rnd.getrandbits(75) for _ in range(5)]
        res = tree_decode(_lists_for(msgs, code), code)
        roots += res.stats.roots
        failures += sum(1 for w in msgs if w not in res.messages)
    bound = ptree_bound(AllocationSpec(5, FULL_PROFILE.parity))
    rate = failures / (5 * draws)
    sigma = np.sqrt(max(bound * (1 - bound), 1e-12) / (5 * draws))
    assert rate <= bound + 3 * sigma
    assert roots == 5 * draws


def test_planted_collision_fails_only_that_root():
    # two messages share fragments 0..2 and both complete valid paths from the same root
    p = ParityProfile.from_parity(8, (4, 4, 4))
    code = TreeCodebook.sample(p, 21)
    rnd = random.Random(5)
    base = rnd.getrandbits(p.B)
    twin = base ^ 0b0101  # differs only in the last information fragment
    other = rnd.getrandbits(p.B)
    while other >> (p.B - 8) == base >> (p.B - 8):
        other = rnd.getrandbits(p.B)
    res = tree_decode(_lists_for([base, twin, other], code), code)
    assert base not in res.messages and twin not in res.messages
    assert other in res.messages
    assert res.stats.ambiguous_roots == 1


def test_stats_accounting():
    code = TreeCodebook.sample(FULL_PROFILE, 13)
    rnd = random.Random(6)
    msgs = [rnd.getrandbits(75) for _ in range(50)]
    res = tree_decode(_lists_for(msgs, code), code)
    st_ = res.stats
    assert st_.parity_checks == sum(c * l for c, l in zip(st_.children, FULL_PROFILE.l))
    assert all(st_.nodes_visited >= s for s in st_.survivors)
    assert st_.children[1] == st_.survivors[0] * 50


def test_zero_parity_stage_fans_out():
    p = ParityProfile.from_parity(6, (0, 6))
    code = TreeCodebook.sample(p, 1)
    rnd = random.Random(7)
    msgs = [rnd.getrandbits(p.B) for _ in range(4)]
    res = tree_decode(_lists_for(msgs, code), code)
    assert res.stats.survivors[1] == 16
    assert res.stats.parity_checks == 16 * 4 * 6


def test_duplicate_entries_collapse():
    code = small_code()
    cw = encode(BitVector.from_str("1011"), code).as_ints()
    res = tree_decode([[cw[0], cw[0]], [cw[1], cw[1]]], code)
    assert res.messages == {0b1011}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_transmitted_messages_with_unique_paths_are_recovered(K, seed):
    p = ParityProfile.from_parity(10, (3, 5, 10))
    code = TreeCodebook.sample(p, seed)
    rnd = random.Random(seed)
    msgs = [rnd.getrandbits(p.B) for _ in range(K)]
    res = tree_decode(_lists_for(msgs, code), code)
    for root, count in res.root_survivors.items():
        if count == 1:
            assert res.messages
    assert res.messages <= set(msgs) | set(res.paths)
    for w in res.messages:
        assert all(check_parity_stage(list(res.paths[w]), code, j) for j in range(1, p.n))
