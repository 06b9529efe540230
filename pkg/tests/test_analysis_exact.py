from fractions import Fraction

import pytest

from ccs.analysis_approx import AllocationSpec, expected_surviving_approx
from ccs.analysis_exact import (
    PatternSeq,
    bell,
    class_size,
    enumerate_patterns,
    event_probability,
    expected_surviving_by_patterns,
    expected_surviving_exact,
    pattern_pgf,
    pgf_eval,
    stirling2,
    surviving_profile_exact,
)
from oracles import surviving_paths_exhaustive


def test_patterns_of_length_three():
    got = [p.entries for p in enumerate_patterns(3)]
    assert got == [(1, 1, 1), (1, 1, 3), (1, 2, 1), (1, 2, 2), (1, 2, 3)]


def test_pattern_counts_are_bell_numbers():
    assert bell(4) == 15
    for j in range(1, 8):
        pats = list(enumerate_patterns(j))
        assert len(pats) == len(set(p.entries for p in pats)) == bell(j)


def test_bell_is_sum_of_stirling():
    known = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975, 678570, 4213597]
    assert [bell(j) for j in range(13)] == known
    assert stirling2(5, 2) == 15 and stirling2(4, 0) == 0


def test_invalid_patterns_rejected():
    for bad in [(2,), (1, 3), (1, 2, 4), ()]:
        with pytest.raises(ValueError):
            PatternSeq(bad)


def test_class_size_examples():
    assert class_size(PatternSeq((1, 1, 1)), 7) == 1
    assert class_size(PatternSeq((1, 2, 3)), 4) == 6
    with pytest.raises(ValueError):
        class_size(PatternSeq((1, 2, 3)), 2)


def test_class_sizes_cover_all_paths():
    for j in range(1, 7):
        total = sum(class_size(p, 5) for p in enumerate_patterns(j) if p.d <= 5)
        assert total == 5 ** (j - 1)


def test_event_probability_repeat_then_new():
    s, m = PatternSeq((1, 1, 3)), (2, 1, 1)
    assert event_probability(s, {2}, m) == 7 / 8
    assert event_probability(s, set(), m) == 1 / 8
    assert event_probability(s, {1}, m) == 0.0
    assert event_probability(s, {1, 2}, m) == 0.0


def test_event_probability_shared_level():
    s, m = PatternSeq((1, 2, 2)), (2, 1, 1)
    assert event_probability(s, {1, 2}, m) == 3 / 4
    assert event_probability(s, set(), m) == 1 / 4
    assert event_probability(s, {1}, m) == 0.0
    assert event_probability(s, {2}, m) == 0.0


def test_event_probability_rejects_bad_subset():
    with pytest.raises(ValueError):
        event_probability(PatternSeq((1, 2)), {0}, (1, 1))


def test_pgf_examples():
    assert pgf_eval(pattern_pgf(PatternSeq((1, 1, 3)), (2, 1, 1), (0, 5, 3)), 0.5) == 15 / 64
    assert pgf_eval(pattern_pgf(PatternSeq((1, 2, 2)), (2, 1, 1), (0, 1, 1)), 0.5) == 7 / 16


def test_pgf_masses_sum_to_one():
    m, l = (2, 1, 3, 1), (0, 2, 1, 3)
    for s in enumerate_patterns(4):
        assert pgf_eval(pattern_pgf(s, m, l), 1.0) == pytest.approx(1.0, abs=1e-12)


def test_single_candidate_gives_zero():
    assert surviving_profile_exact(1, (2, 2, 2), (0, 1, 1)) == [0.0, 0.0]
    assert expected_surviving_exact(3, (1, 1), (0, 1), 1) == 0.0


def test_dfs_matches_pattern_sum():
    for K, m, l in [(3, (1, 0, 0), (0, 1, 1)), (2, (3, 2, 2), (0, 1, 1)), (4, (2, 1, 1, 2), (0, 1, 2, 1))]:
        for j in range(2, len(m) + 1):
            assert expected_surviving_exact(K, m, l, j) == pytest.approx(expected_surviving_by_patterns(K, m, l, j), rel=1e-12)


# exhaustive-oracle values, frozen (E[L] + 1 including the true path)
FROZEN = [
    (3, (1, 0, 0), (0, 1, 1), [Fraction(5, 2), Fraction(51, 8)]),
    (4, (1, 0, 0, 0), (0, 1, 1, 1), [Fraction(13, 4), Fraction(43, 4), Fraction(1157, 32)]),
    (2, (3, 2, 2), (0, 1, 1), [Fraction(25, 16), Fraction(283, 128)]),
    (2, (2, 1, 1, 1), (0, 1, 1, 1), [Fraction(13, 8), Fraction(79, 32), Fraction(459, 128)]),
]


@pytest.mark.parametrize("K,m,l,expect", FROZEN)
def test_frozen_oracle_values(K, m, l, expect):
    got = surviving_profile_exact(K, m, l)
    assert [g + 1 for g in got] == [float(e) for e in expect]


def test_live_oracle_small():
    K, m, l = 3, (2, 1, 1), (0, 1, 1)
    oracle = [float(x) - 1 for x in surviving_paths_exhaustive(K, m, l)]
    assert surviving_profile_exact(K, m, l) == pytest.approx(oracle, abs=1e-12)


def test_large_info_converges_to_approx():
    l = (3, 5, 2, 4)
    exact = surviving_profile_exact(7, (40,) * 5, (0,) + l)
    approx = expected_surviving_approx(AllocationSpec(7, l))
    assert all(abs(a - b) <= 1e-6 for a, b in zip(exact, approx))


def test_exact_nonnegative():
    for K in (2, 5):
        assert all(x >= 0 for x in surviving_profile_exact(K, (3, 2, 1, 2), (0, 1, 2, 1)))
