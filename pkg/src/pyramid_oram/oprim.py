"""Data-independent selection, swap, and sorting-network primitives.

Control flow here never branches on slot contents: selections are computed
with mask arithmetic and sorting uses Batcher's odd-even mergesort, whose
compare-exchange schedule is a function of the input length alone.  The
repartition step of the routing network sorts 2c slots by a (class, tiebreak)
key; packing both into one 64-bit word keeps the comparator a single compare.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import InvalidParameterError, is_power_of_two

# Sort key layout: class in the top 2 bits, tiebreak below.  Tiebreaks are
# 64-bit draws; the low 62 bits that survive the shift keep collisions at
# ~2^-60 per pair, and a collision just falls back to slot order.
_CLASS_SHIFT = 62
_TIE_SHIFT = 2

# Padding entries sort into the middle class so they never displace an
# element bound for a specific side.
_PAD_CLASS = 1
_PAD_TIEBREAK = 1 << 63


@dataclass
class SortItem:
    """Sortable wrapper: 2-bit class, 64-bit random tiebreak, opaque payload ref."""

    sort_class: int
    tiebreak: int
    payload_ref: object = None


def cond_select(flag, a: int, b: int) -> int:
    """a if flag else b, computed with mask arithmetic (no data branch)."""
    f = int(bool(flag))
    return (a & -f) | (b & (f - 1))


def cond_swap(flag, values, i: int, j: int) -> None:
    """Exchange values[i] and values[j] iff flag; both cells are always touched."""
    f = -int(bool(flag))
    d = (values[i] ^ values[j]) & f
    values[i] ^= d
    values[j] ^= d


def sort_key(sort_class, tiebreak):
    """Pack (class, tiebreak) into one comparable word; works on ints and arrays."""
    if isinstance(sort_class, np.ndarray):
        return (sort_class.astype(np.uint64) << np.uint64(_CLASS_SHIFT)) | (
            tiebreak >> np.uint64(_TIE_SHIFT)
        )
    return (sort_class << _CLASS_SHIFT) | (tiebreak >> _TIE_SHIFT)


@functools.cache
def comparator_schedule(m: int) -> tuple[tuple[int, int], ...]:
    """Compare-exchange pairs of the odd-even mergesort network for size m.

    m must be a power of two; the schedule depends only on m.
    """
    if not is_power_of_two(m):
        raise InvalidParameterError("comparator schedule is defined for powers of two")

    def merge(lo: int, hi: int, r: int):
        step = r * 2
        if step < hi - lo:
            yield from merge(lo, hi, step)
            yield from merge(lo + r, hi, step)
            yield from ((i, i + r) for i in range(lo + r, hi - r, step))
        else:
            yield (lo, lo + r)

    def sort(lo: int, hi: int):
        if hi - lo >= 1:
            mid = lo + (hi - lo) // 2
            yield from sort(lo, mid)
            yield from sort(mid + 1, hi)
            yield from merge(lo, hi, 1)

    return tuple(sort(0, m - 1)) if m > 1 else ()


def batcher_sort(items: list[SortItem],
                 on_exchange: Callable[[int, int, bool], None] | None = None) -> None:
    """Sort items in place by (sort_class, tiebreak) with a fixed comparator net.

    Non-power-of-two lengths are padded internally with middle-class sentinels;
    sentinels are dropped before writing back, and dropping entries from a
    sorted sequence leaves it sorted.  on_exchange, if given, is called for
    every compare-exchange with (i, j, swapped) in schedule order.
    """
    m = len(items)
    if m <= 1:
        return
    size = 1 << (m - 1).bit_length()
    padded = list(items) + [
        SortItem(_PAD_CLASS, _PAD_TIEBREAK) for _ in range(size - m)
    ]
    keys = [sort_key(it.sort_class, it.tiebreak) for it in padded]
    perm = list(range(size))
    for i, j in comparator_schedule(size):
        flag = keys[i] > keys[j]
        cond_swap(flag, keys, i, j)
        cond_swap(flag, perm, i, j)
        if on_exchange is not None:
            on_exchange(i, j, bool(flag))
    items[:] = [padded[p] for p in perm if p < m]


def sort_network_perm(skey: np.ndarray) -> np.ndarray:
    """Row-wise sorting permutation via the comparator network, vectorized.

    skey is (rows, m) uint64 with m a power of two; returns perm (rows, m)
    such that skey[r, perm[r]] is sorted.  Every row runs the same schedule,
    so the work done is independent of the data.
    """
    rows, m = skey.shape
    work = skey.copy()
    perm = np.broadcast_to(np.arange(m, dtype=np.int64), (rows, m)).copy()
    for i, j in comparator_schedule(m):
        ki = work[:, i].copy()
        kj = work[:, j]
        swap = ki > kj
        work[:, i] = np.where(swap, kj, ki)
        work[:, j] = np.where(swap, ki, kj)
        pi = perm[:, i].copy()
        pj = perm[:, j]
        perm[:, i] = np.where(swap, pj, pi)
        perm[:, j] = np.where(swap, pi, pj)
    return perm
