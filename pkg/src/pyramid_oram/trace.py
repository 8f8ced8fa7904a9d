"""Access-trace capture and the obliviousness test surface.

A trace is the adversary's view: the sequence of (region, index, op) touches at
bucket granularity.  Regions identify a structure (the L0 append log, or one
table of one level); indices are bucket/slot positions inside the region.

Obliviousness is tested in two parts.  The *shape* of a trace (indices erased)
must be exactly equal between a real run and a simulator fed only public
parameters.  The erased indices must in turn be indistinguishable from uniform,
which is checked with Pearson chi-square at a conservative significance.

The recorder stores events in columnar numpy chunks so that recording a full
rebuild (millions of events) costs a few array appends, not millions of Python
objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np
from scipy import stats

from .core import InsufficientDataError, InvalidParameterError, Rng

L0_REGION = 0


class TraceOp(IntEnum):
    READ = 0
    WRITE = 1
    READ_WRITE = 2


class TraceEvent(NamedTuple):
    region: int
    index: int
    op: int


def table_region(level: int, table_index: int) -> int:
    """Region id of table `table_index` at `level` (L0 is region 0)."""
    if not (0 <= level < 1 << 16 and 0 <= table_index < 1 << 8):
        raise InvalidParameterError("region fields out of range")
    return (1 << 24) | (level << 8) | table_index


def region_level(region: int) -> int:
    return (region >> 8) & 0xFFFF


def region_table(region: int) -> int:
    return region & 0xFF


def is_table_region(region: int) -> bool:
    return bool(region >> 24)


class TraceRecorder:
    """Append-only event log; disabled recorders are no-ops.

    Events live in columnar chunks (region int32, index int64, op uint8).
    position() marks a point in the stream so callers can slice per-operation
    windows out of a long recording.
    """

    __slots__ = ("enabled", "_chunks", "_count")

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._chunks: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def position(self) -> int:
        return self._count

    def record(self, region: int, index: int, op: int) -> None:
        if not self.enabled:
            return
        self._chunks.append(
            (
                np.array([region], dtype=np.int32),
                np.array([index], dtype=np.int64),
                np.array([op], dtype=np.uint8),
            )
        )
        self._count += 1

    def record_block(self, region: int, indices, op: int) -> None:
        """Many events in one region, in the given index order."""
        if not self.enabled:
            return
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        self._chunks.append(
            (
                np.full(idx.size, region, dtype=np.int32),
                idx,
                np.full(idx.size, op, dtype=np.uint8),
            )
        )
        self._count += idx.size

    def record_tiled(self, regions, index_matrix, op: int) -> None:
        """Row-major events over a (rows, len(regions)) index matrix.

        Row r expands to events (regions[0], M[r,0]), (regions[1], M[r,1]), ...
        which is the per-slot "touch each table in order" pattern.
        """
        if not self.enabled:
            return
        m = np.asarray(index_matrix, dtype=np.int64)
        if m.ndim != 2 or m.shape[1] != len(regions):
            raise InvalidParameterError("index matrix does not match region list")
        self._chunks.append(
            (
                np.tile(np.asarray(regions, dtype=np.int32), m.shape[0]),
                m.reshape(-1),
                np.full(m.size, op, dtype=np.uint8),
            )
        )
        self._count += m.size

    def clear(self) -> None:
        self._chunks = []
        self._count = 0

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._chunks:
            return (
                np.empty(0, dtype=np.int32),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.uint8),
            )
        regions = np.concatenate([c[0] for c in self._chunks])
        indices = np.concatenate([c[1] for c in self._chunks])
        ops = np.concatenate([c[2] for c in self._chunks])
        self._chunks = [(regions, indices, ops)]
        return regions, indices, ops

    def events(self) -> list[TraceEvent]:
        regions, indices, ops = self.to_arrays()
        return [
            TraceEvent(int(r), int(i), int(o))
            for r, i, o in zip(regions, indices, ops)
        ]

    def shape_projection(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """(m, 2) array of (region, op) with indices erased; the comparable shape."""
        regions, _, ops = self.to_arrays()
        sl = slice(start, stop)
        return np.column_stack(
            (regions[sl].astype(np.int64), ops[sl].astype(np.int64))
        )

    def index_histogram(self, region: int, n: int) -> np.ndarray:
        """Counts of indices 0..n-1 recorded for one region."""
        regions, indices, _ = self.to_arrays()
        sel = indices[regions == region]
        if sel.size and (sel.min() < 0 or sel.max() >= n):
            raise InvalidParameterError("recorded index outside [0, n)")
        return np.bincount(sel, minlength=n)

    def regions_present(self) -> list[int]:
        regions, _, _ = self.to_arrays()
        return sorted(int(r) for r in np.unique(regions))

    def write_csv(self, path) -> None:
        """Line-delimited `region,index,op` export."""
        regions, indices, ops = self.to_arrays()
        with open(path, "w", newline="") as fh:
            for r, i, o in zip(regions, indices, ops):
                fh.write(f"{r},{i},{o}\n")


def shape(recorder: TraceRecorder) -> np.ndarray:
    return recorder.shape_projection()


def shapes_equal(a: TraceRecorder | np.ndarray, b: TraceRecorder | np.ndarray) -> bool:
    pa = a.shape_projection() if isinstance(a, TraceRecorder) else a
    pb = b.shape_projection() if isinstance(b, TraceRecorder) else b
    return pa.shape == pb.shape and bool((pa == pb).all())


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    critical_value: float
    significance: float
    passed: bool


def chi_square_uniform(counts, significance: float = 0.001) -> ChiSquareResult:
    """Pearson chi-square of observed counts against the uniform distribution.

    Requires at least 5 expected observations per cell (total >= 5 * cells);
    below that the test is not meaningful and InsufficientDataError is raised.
    """
    if not 0.0 < significance < 1.0:
        raise InvalidParameterError("significance must be in (0, 1)")
    obs = np.asarray(counts, dtype=np.float64)
    if obs.ndim != 1 or obs.size < 2:
        raise InvalidParameterError("need a 1-d vector of at least 2 counts")
    total = obs.sum()
    if total < 5 * obs.size:
        raise InsufficientDataError(
            f"{int(total)} samples over {obs.size} cells; need >= {5 * obs.size}"
        )
    statistic, p_value = stats.chisquare(obs)
    dof = obs.size - 1
    critical = float(stats.chi2.ppf(1.0 - significance, dof))
    return ChiSquareResult(
        statistic=float(statistic),
        dof=dof,
        p_value=float(p_value),
        critical_value=critical,
        significance=significance,
        passed=bool(statistic <= critical),
    )


# --- simulators -------------------------------------------------------------
#
# Each simulator runs the real machinery on dummy input, so "the simulator's
# trace" is by construction what a run that holds no data would emit.  The
# obliviousness tests assert real traces have exactly these shapes.


def sim_build(num_slots: int, n: int, k: int, c: int, rng: Rng,
              payload_size: int = 8) -> TraceRecorder:
    """Trace of an oblivious build fed nothing but dummies."""
    from .core import HashFamily, SlotArray, SlotState
    from .ozht import oblivious_build

    recorder = TraceRecorder()
    elems = SlotArray(num_slots, payload_size)
    elems.state.fill(SlotState.DUMMY)
    fam = HashFamily(seed=int(rng.bits64()) & 0x7FFFFFFFFFFFFFFF)
    oblivious_build(elems, n, k, c, fam, rng, recorder=recorder)
    return recorder


def sim_search(n: int, k: int, c: int, rng: Rng, payload_size: int = 8) -> TraceRecorder:
    """Trace of one search that looks for nothing (k random buckets)."""
    from .core import HashFamily
    from .zht import Zht

    recorder = TraceRecorder()
    z = Zht(n, k, c, HashFamily(seed=0), level_id=0, payload_size=payload_size)
    z.dummy_search(rng, recorder=recorder)
    return recorder


def sim_throw(m: int, n: int, k: int, c: int, rng: Rng,
              payload_size: int = 8) -> TraceRecorder:
    """Trace of throwing m slots that are all dummies (k random touches each)."""
    from .core import HashFamily, SlotArray, SlotState
    from .zht import Zht

    recorder = TraceRecorder()
    z = Zht(n, k, c, HashFamily(seed=0), level_id=0, payload_size=payload_size)
    elems = SlotArray(m, payload_size)
    elems.state.fill(SlotState.DUMMY)
    z.throw(elems, "random", rng, recorder=recorder)
    return recorder
