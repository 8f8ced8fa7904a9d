"""Oblivious primitives: constant-shape selects, swaps, and the sorting network."""

import itertools

import numpy as np
import pytest

from pyramid_oram.core import InvalidParameterError
from pyramid_oram.oprim import (
    SortItem,
    batcher_sort,
    comparator_schedule,
    cond_select,
    cond_swap,
    sort_key,
    sort_network_perm,
)

# comparator counts from the textbook odd-even recurrence
# S(1) = 0, S(n) = 2 S(n/2) + M(n); M(2) = 1, M(n) = 2 M(n/2) + n/2 - 1
COMPARATOR_COUNTS = {2: 1, 4: 5, 8: 19, 16: 63, 32: 191}


def _merge_count(n: int) -> int:
    if n == 2:
        return 1
    return 2 * _merge_count(n // 2) + n // 2 - 1


def _sort_count(n: int) -> int:
    if n == 1:
        return 0
    return 2 * _sort_count(n // 2) + _merge_count(n)


def test_cond_select_exhaustive():
    for flag in (0, 1, True, False):
        for a in (0, 1, 7, 2**62):
            for b in (0, 3, 2**40):
                want = a if flag else b
                assert cond_select(flag, a, b) == want


def test_cond_swap_exhaustive():
    for flag in (0, 1):
        values = [5, 9]
        cond_swap(flag, values, 0, 1)
        assert values == ([9, 5] if flag else [5, 9])


def test_sort_key_orders_class_before_tiebreak():
    low = sort_key(0, (1 << 64) - 1)
    high = sort_key(1, 0)
    assert low < high
    a = sort_key(1, 4)
    b = sort_key(1, 8)
    assert a < b


def test_sort_key_array_matches_scalar():
    cls = np.array([0, 1, 2, 1], dtype=np.uint64)
    tie = np.array([7, (1 << 63) + 5, 0, 12], dtype=np.uint64)
    vec = sort_key(cls, tie)
    for i in range(4):
        assert int(vec[i]) == sort_key(int(cls[i]), int(tie[i]))


def test_comparator_counts_match_recurrence():
    for n, count in COMPARATOR_COUNTS.items():
        assert _sort_count(n) == count, "frozen table disagrees with recurrence"
        assert len(comparator_schedule(n)) == count
        assert all(i < j for i, j in comparator_schedule(n))


def test_comparator_schedule_is_fixed():
    assert comparator_schedule(8) is comparator_schedule(8)
    with pytest.raises(InvalidParameterError):
        comparator_schedule(6)


# the packed key keeps tiebreak bits 2..63, so tests space values by 4
def test_batcher_sorts_every_permutation_of_eight():
    for perm in itertools.permutations(range(8)):
        items = [SortItem(0, value << 2, payload_ref=value) for value in perm]
        batcher_sort(items)
        assert [item.payload_ref for item in items] == sorted(perm), f"failed on {perm}"


def test_batcher_sorts_non_power_of_two_sizes():
    gen = np.random.Generator(np.random.PCG64(8))
    for size in (1, 2, 3, 5, 6, 7, 9, 12):
        for _ in range(40):
            keys = gen.integers(0, 50, size=size)
            items = [SortItem(int(k) % 3, int(k) << 2, payload_ref=i)
                     for i, k in enumerate(keys)]
            want = sorted((item.sort_class, item.tiebreak) for item in items)
            batcher_sort(items)
            got = [(item.sort_class, item.tiebreak) for item in items]
            assert got == want


def test_batcher_class_dominates_tiebreak():
    items = [
        SortItem(2, 0),
        SortItem(0, (1 << 62) - 1),
        SortItem(1, 5 << 2),
    ]
    batcher_sort(items)
    assert [item.sort_class for item in items] == [0, 1, 2]


def test_batcher_exchange_hook_sees_fixed_schedule():
    touched = []
    items = [SortItem(0, v << 2) for v in (3, 1, 2, 0)]
    batcher_sort(items, on_exchange=lambda i, j, flag: touched.append((i, j)))
    assert tuple(touched) == comparator_schedule(4)


def test_sort_network_perm_matches_python_sort():
    gen = np.random.Generator(np.random.PCG64(21))
    for _ in range(30):
        keys = gen.integers(0, 1 << 63, size=(5, 8), dtype=np.uint64)
        perm = sort_network_perm(keys)
        sorted_rows = np.take_along_axis(keys, perm, axis=1)
        for row in range(5):
            assert sorted_rows[row].tolist() == sorted(keys[row].tolist())


def test_sort_network_perm_is_a_permutation():
    keys = np.zeros((3, 16), dtype=np.uint64)  # all ties
    perm = sort_network_perm(keys)
    for row in perm:
        assert sorted(row.tolist()) == list(range(16))
