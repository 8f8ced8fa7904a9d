"""Probabilistic routing network: log2(n) stages of oblivious bucket repartition.

Stage s pairs up the buckets whose indices differ only in bit s-1 and
repartitions each pair: slots tagged for routing move to the pair side matching
bit s-1 of their destination, untagged slots float.  When more than c slots
compete for one side, a uniformly random c of them win and the rest are
retagged false (they stay wherever they land and are no longer routed).  After
stage s every tagged slot agrees with its destination on the lowest s bits, so
after all stages it sits exactly in its destination bucket.

A repartition reads both buckets, sorts the 2c slots by (side-class, random
tiebreak) on a fixed comparator network, retags the misplaced, and writes both
buckets back.  The pair schedule is a function of n alone: (n/2)*log2(n)
repartitions, pairs in ascending order of the lower index.

route() is the vectorized path (all pairs of a stage at once); repartition()
and route_reference() are the slot-at-a-time reference.  Both draw tiebreaks
in the same row-major order, so under one seed they are bit-identical, which
the suite asserts.  Write-backs here permute contents between cells, so they
bypass the per-cell lifecycle transition checker by design.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import InvalidParameterError, Rng, Slot, _require, is_power_of_two
from .oprim import SortItem, batcher_sort, sort_key, sort_network_perm
from .trace import TraceOp, TraceRecorder, table_region

_PAD_KEY = np.uint64(sort_key(1, 1 << 63))


@dataclass(frozen=True)
class RoutingSlot:
    """A slot plus its cached destination bucket for the current table."""

    slot: Slot
    dest: int


@dataclass
class RouteStats:
    """Per-route instrumentation: repartition count and per-stage spills."""

    repartitions: int
    stage_spills: list[int]
    stage_live: list[int]

    @property
    def total_spilled(self) -> int:
        return sum(self.stage_spills)


def stage_count(n: int) -> int:
    _require(is_power_of_two(n), "table size must be a power of two")
    return n.bit_length() - 1


def stage_pairs(n: int, stage: int) -> list[tuple[int, int]]:
    """Bucket pairs of one stage, ascending by lower index.

    Stage s (1-based) pairs indices differing exactly in bit s-1.
    """
    _require(1 <= stage <= stage_count(n), "stage out of range")
    bit = stage - 1
    idx = np.arange(n)
    lows = idx[(idx >> bit) & 1 == 0]
    return [(int(lo), int(lo | (1 << bit))) for lo in lows]


def repartition(bucket_a: list[RoutingSlot], bucket_b: list[RoutingSlot],
                bit_position: int, rng: Rng,
                ) -> tuple[list[RoutingSlot], list[RoutingSlot], int]:
    """Reference single-pair repartition on bit `bit_position` (1-based).

    Returns the new (bucket_a, bucket_b, spill_count).  Tagged slots whose
    destination bit is 0 end up in bucket_a, bit 1 in bucket_b; excess
    competitors (uniformly chosen via the random tiebreaks) are retagged false.
    """
    c = len(bucket_a)
    _require(c == len(bucket_b), "bucket capacity mismatch")
    _require(bit_position >= 1, "bit positions are 1-based")
    combined = list(bucket_a) + list(bucket_b)
    ties = rng.bits64(2 * c)
    shift = bit_position - 1
    items = []
    for pos, rs in enumerate(combined):
        bit = (rs.dest >> shift) & 1
        klass = 1 + int(rs.slot.tag) * (2 * bit - 1)
        items.append(SortItem(klass, int(ties[pos]), payload_ref=pos))
    batcher_sort(items)
    out: list[RoutingSlot] = []
    spills = 0
    for pos_out, item in enumerate(items):
        rs = combined[item.payload_ref]
        side = 1 if pos_out >= c else 0
        bit = (rs.dest >> shift) & 1
        if rs.slot.tag and bit != side:
            rs = RoutingSlot(replace(rs.slot, tag=False), rs.dest)
            spills += 1
        out.append(rs)
    return out[:c], out[c:], spills


def _invalidate(table) -> None:
    # routing scatters slots, so any prefix-fill fast path is stale after it
    invalidate = getattr(table, "invalidate_prefix", None)
    if invalidate is not None:
        invalidate()


def _stage_perm(cls_rows: np.ndarray, tie_rows: np.ndarray) -> np.ndarray:
    """Sorting permutation for (rows, 2c) class/tiebreak arrays, with padding."""
    rows, m = cls_rows.shape
    skey = sort_key(cls_rows.astype(np.uint64), tie_rows)
    size = 1 << (m - 1).bit_length()
    if size != m:
        pad = np.full((rows, size - m), _PAD_KEY, dtype=np.uint64)
        skey = np.concatenate([skey, pad], axis=1)
    perm = sort_network_perm(skey)
    if size != m:
        keep = np.argsort(~(perm < m), axis=1, kind="stable")[:, :m]
        perm = np.take_along_axis(perm, keep, axis=1)
    return perm


def route(table, dests: np.ndarray, rng: Rng,
          recorder: TraceRecorder | None = None,
          region: int | None = None) -> RouteStats:
    """Route every tagged slot of `table` toward its destination, in place.

    `dests` is an (n, c) destination array that travels with the slots (it is
    permuted in place alongside them).  Consumes one 64-bit tiebreak per slot
    per stage, in pair order, regardless of contents.
    """
    n, c = table.n, table.c
    dests = np.asarray(dests, dtype=np.int64)
    if dests.shape != (n, c):
        raise InvalidParameterError("dests must be shaped (n, c)")
    if region is None:
        region = table_region(0, 0)
    _invalidate(table)
    m = 2 * c
    side = np.concatenate([np.zeros(c, np.int64), np.ones(c, np.int64)])
    stage_spills: list[int] = []
    stage_live: list[int] = []
    repartitions = 0
    for stage in range(1, stage_count(n) + 1):
        bit = stage - 1
        idx = np.arange(n)
        lows = idx[(idx >> bit) & 1 == 0]
        highs = lows | (1 << bit)
        stage_live.append(int(table.tag.sum()))

        key_r = np.concatenate([table.key[lows], table.key[highs]], axis=1)
        state_r = np.concatenate([table.state[lows], table.state[highs]], axis=1)
        tag_r = np.concatenate([table.tag[lows], table.tag[highs]], axis=1)
        pay_r = np.concatenate([table.payload[lows], table.payload[highs]], axis=1)
        dest_r = np.concatenate([dests[lows], dests[highs]], axis=1)

        ties = rng.bits64((n // 2, m))
        destbit = (dest_r >> bit) & 1
        cls = 1 + tag_r.astype(np.int64) * (2 * destbit - 1)
        perm = _stage_perm(cls, ties)

        key_r = np.take_along_axis(key_r, perm, axis=1)
        state_r = np.take_along_axis(state_r, perm, axis=1)
        tag_r = np.take_along_axis(tag_r, perm, axis=1)
        dest_r = np.take_along_axis(dest_r, perm, axis=1)
        pay_r = np.take_along_axis(pay_r, perm[:, :, None], axis=1)

        misplaced = tag_r & (((dest_r >> bit) & 1) != side)
        tag_r = tag_r & ~misplaced
        stage_spills.append(int(misplaced.sum()))
        repartitions += n // 2

        table.key[lows], table.key[highs] = key_r[:, :c], key_r[:, c:]
        table.state[lows], table.state[highs] = state_r[:, :c], state_r[:, c:]
        table.tag[lows], table.tag[highs] = tag_r[:, :c], tag_r[:, c:]
        table.payload[lows], table.payload[highs] = pay_r[:, :c], pay_r[:, c:]
        dests[lows], dests[highs] = dest_r[:, :c], dest_r[:, c:]

        if recorder is not None:
            recorder.record_block(
                region, np.column_stack([lows, highs]).ravel(), TraceOp.READ_WRITE
            )
    return RouteStats(repartitions, stage_spills, stage_live)


def route_reference(table, dests: np.ndarray, rng: Rng,
                    recorder: TraceRecorder | None = None,
                    region: int | None = None) -> RouteStats:
    """Slot-at-a-time route; bit-identical to route() under the same seed."""
    n, c = table.n, table.c
    dests = np.asarray(dests, dtype=np.int64)
    if region is None:
        region = table_region(0, 0)
    _invalidate(table)
    stage_spills: list[int] = []
    stage_live: list[int] = []
    repartitions = 0
    for stage in range(1, stage_count(n) + 1):
        stage_live.append(int(table.tag.sum()))
        spilled = 0
        for lo, hi in stage_pairs(n, stage):
            bucket_a = [
                RoutingSlot(table.get((lo, s)), int(dests[lo, s])) for s in range(c)
            ]
            bucket_b = [
                RoutingSlot(table.get((hi, s)), int(dests[hi, s])) for s in range(c)
            ]
            new_a, new_b, spills = repartition(bucket_a, bucket_b, stage, rng)
            for s in range(c):
                _write_routing_slot(table, dests, lo, s, new_a[s])
                _write_routing_slot(table, dests, hi, s, new_b[s])
            spilled += spills
            repartitions += 1
            if recorder is not None:
                recorder.record(region, lo, TraceOp.READ_WRITE)
                recorder.record(region, hi, TraceOp.READ_WRITE)
        stage_spills.append(spilled)
    return RouteStats(repartitions, stage_spills, stage_live)


def _write_routing_slot(table, dests, b: int, s: int, rs: RoutingSlot) -> None:
    # direct write: routing moves contents between cells, which is not a
    # lifecycle transition of any one cell
    table.key[b, s] = rs.slot.key
    table.state[b, s] = rs.slot.state
    table.tag[b, s] = rs.slot.tag
    table.payload[b, s] = np.frombuffer(rs.slot.payload, dtype=np.uint8)
    dests[b, s] = rs.dest


def route_census(tag: np.ndarray, dest: np.ndarray, rng: Rng,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Batched-trials routing for statistics: tag/dest only, no slot contents.

    tag and dest are (trials, n, c); both evolve in place exactly as route()
    would evolve a table's tag/dest fields (class assignment never reads keys
    or payloads).  Returns (spills, live), each (trials, stages).
    """
    trials, n, c = tag.shape
    _require(is_power_of_two(n), "table size must be a power of two")
    m = 2 * c
    side = np.concatenate([np.zeros(c, np.int64), np.ones(c, np.int64)])
    stages = stage_count(n)
    spills = np.zeros((trials, stages), dtype=np.int64)
    live = np.zeros((trials, stages), dtype=np.int64)
    for stage in range(1, stages + 1):
        bit = stage - 1
        idx = np.arange(n)
        lows = idx[(idx >> bit) & 1 == 0]
        highs = lows | (1 << bit)
        live[:, bit] = tag.sum(axis=(1, 2))

        tag_r = np.concatenate([tag[:, lows], tag[:, highs]], axis=2)
        dest_r = np.concatenate([dest[:, lows], dest[:, highs]], axis=2)
        rows = trials * (n // 2)
        tag_r = tag_r.reshape(rows, m)
        dest_r = dest_r.reshape(rows, m)

        ties = rng.bits64((trials, n // 2, m)).reshape(rows, m)
        destbit = (dest_r >> bit) & 1
        cls = 1 + tag_r.astype(np.int64) * (2 * destbit - 1)
        perm = _stage_perm(cls, ties)

        tag_r = np.take_along_axis(tag_r, perm, axis=1)
        dest_r = np.take_along_axis(dest_r, perm, axis=1)
        misplaced = tag_r & (((dest_r >> bit) & 1) != side)
        tag_r = tag_r & ~misplaced
        spills[:, bit] = misplaced.reshape(trials, n // 2, m).sum(axis=(1, 2))

        tag_r = tag_r.reshape(trials, n // 2, m)
        dest_r = dest_r.reshape(trials, n // 2, m)
        tag[:, lows], tag[:, highs] = tag_r[:, :, :c], tag_r[:, :, c:]
        dest[:, lows], dest[:, highs] = dest_r[:, :, :c], dest_r[:, :, c:]
    return spills, live
