import math

import numpy as np
import pytest

from ccs.analysis_approx import (
    AllocationSpec,
    BoundParams,
    asymptotic_bound,
    expected_complexity_checks,
    expected_complexity_nodes,
    expected_surviving_approx,
    expected_surviving_recursive,
    pe_compose,
    pe_union_bound,
    ptree_bound,
    random_spec,
)
from oracles import approx_recursion

UNIFORM9 = AllocationSpec(200, (9,) * 10)


def test_uniform_table_values():
    assert ptree_bound(UNIFORM9) == pytest.approx(0.6378, abs=1e-4)
    assert expected_complexity_nodes(UNIFORM9) == pytest.approx(3066, abs=1)


def test_two_stage_hand_value():
    assert expected_surviving_approx(AllocationSpec(2, (1, 1))) == [0.5, 1.0]


def test_single_candidate_has_no_survivors():
    assert expected_surviving_approx(AllocationSpec(1, (0, 3))) == [0.0, 0.0]


def test_checks_equal_l_times_nodes_for_uniform():
    assert expected_complexity_checks(UNIFORM9) == pytest.approx(9 * expected_complexity_nodes(UNIFORM9), rel=1e-12)
    assert expected_complexity_checks(UNIFORM9) == pytest.approx(27594, abs=9)


def test_closed_form_matches_recursion_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        spec = random_spec(rng)
        a = expected_surviving_approx(spec)
        b = expected_surviving_recursive(spec)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_closed_form_matches_exact_fraction_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        spec = random_spec(rng, max_n=8, max_J=12, max_K=60)
        exact = [float(x) for x in approx_recursion(spec.K, spec.l)]
        assert np.allclose(expected_surviving_approx(spec), exact, rtol=1e-12, atol=0)


def test_huge_parity_does_not_underflow_to_nan():
    e = expected_surviving_approx(AllocationSpec(1000, (2000, 2000)))
    assert all(math.isfinite(x) and x >= 0 for x in e)


def test_more_parity_never_increases_survivors():
    rng = np.random.default_rng(2)
    for _ in range(200):
        spec = random_spec(rng, max_J=15)
        j = int(rng.integers(0, len(spec.l)))
        bumped = list(spec.l)
        bumped[j] += 1
        a = expected_surviving_approx(spec)
        b = expected_surviving_approx(AllocationSpec(spec.K, tuple(bumped)))
        assert all(y <= x * (1 + 1e-12) for x, y in zip(a, b))


def test_pe_compose_examples():
    assert pe_compose(0.1, 0.01, 2) == pytest.approx(0.11791, abs=1e-12)
    assert pe_compose(0.0, 0.0, 5) == 0.0
    assert pe_compose(1.0, 0.3, 5) == 1.0
    with pytest.raises(ValueError):
        pe_compose(1.2, 0.0, 1)
    with pytest.raises(ValueError):
        pe_compose(0.1, -0.1, 1)


def test_union_bound_dominates_composition():
    rng = np.random.default_rng(3)
    for _ in range(500):
        pt, pc = rng.random(2)
        n = int(rng.integers(1, 20))
        assert pe_union_bound(pt, pc, n) >= pe_compose(pt, pc, n) - 1e-15


def test_asymptotic_uniform():
    assert asymptotic_bound("uniform", BoundParams(100, l=9)) == pytest.approx(100 / 412)
    with pytest.raises(ValueError):
        asymptotic_bound("uniform", BoundParams(600, l=9))


def test_asymptotic_trailing():
    # 16^-2 + 1/(16 - 1)
    b = asymptotic_bound("trailing", BoundParams(16, n=4, delta=2, c1=2))
    assert b == pytest.approx(1 / 256 + 1 / 15, abs=1e-12)
    assert b == pytest.approx(0.070568, abs=1e-5)
    with pytest.raises(ValueError):
        asymptotic_bound("other", BoundParams(16))


def test_spec_validation():
    with pytest.raises(ValueError):
        AllocationSpec(0, (1,))
    with pytest.raises(ValueError):
        AllocationSpec(2, (-1,))
    with pytest.raises(ValueError):
        AllocationSpec(2, (16,), J=15)
