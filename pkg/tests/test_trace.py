"""Trace recording, shape comparison, and the uniformity test helper."""

import numpy as np
import pytest

from pyramid_oram.core import InsufficientDataError, InvalidParameterError, Rng
from pyramid_oram.ozht import build_access_count
from pyramid_oram.trace import (
    L0_REGION,
    TraceEvent,
    TraceOp,
    TraceRecorder,
    chi_square_uniform,
    is_table_region,
    region_level,
    region_table,
    shapes_equal,
    sim_build,
    sim_search,
    sim_throw,
    table_region,
)


def test_region_packing_roundtrip():
    for level in (0, 1, 7, 40, 65535):
        for table in (0, 1, 3, 255):
            region = table_region(level, table)
            assert region_level(region) == level
            assert region_table(region) == table
            assert is_table_region(region)
    assert not is_table_region(L0_REGION)


def test_region_fields_validated():
    with pytest.raises(InvalidParameterError):
        table_region(-1, 0)
    with pytest.raises(InvalidParameterError):
        table_region(0, 256)
    with pytest.raises(InvalidParameterError):
        table_region(1 << 16, 0)


def test_regions_are_distinct():
    seen = {L0_REGION}
    for level in range(4):
        for table in range(4):
            region = table_region(level, table)
            assert region not in seen
            seen.add(region)


def test_record_preserves_order():
    rec = TraceRecorder()
    rec.record(L0_REGION, 3, TraceOp.READ)
    rec.record(table_region(1, 0), 7, TraceOp.WRITE)
    rec.record(L0_REGION, 3, TraceOp.READ_WRITE)
    assert len(rec) == 3
    assert rec.events() == [
        TraceEvent(L0_REGION, 3, TraceOp.READ),
        TraceEvent(table_region(1, 0), 7, TraceOp.WRITE),
        TraceEvent(L0_REGION, 3, TraceOp.READ_WRITE),
    ]


def test_record_block_expands_in_index_order():
    rec = TraceRecorder()
    rec.record_block(5, [4, 1, 9], TraceOp.READ)
    assert [e.index for e in rec.events()] == [4, 1, 9]
    assert {e.region for e in rec.events()} == {5}


def test_record_tiled_is_row_major_per_slot():
    rec = TraceRecorder()
    regions = [10, 11, 12]
    matrix = np.array([[0, 1, 2], [3, 4, 5]])
    rec.record_tiled(regions, matrix, TraceOp.READ_WRITE)
    got = [(e.region, e.index) for e in rec.events()]
    assert got == [(10, 0), (11, 1), (12, 2), (10, 3), (11, 4), (12, 5)]


def test_record_tiled_shape_mismatch_raises():
    rec = TraceRecorder()
    with pytest.raises(InvalidParameterError):
        rec.record_tiled([1, 2], np.zeros((3, 3), dtype=np.int64), TraceOp.READ)


def test_disabled_recorder_is_noop():
    rec = TraceRecorder(enabled=False)
    rec.record(1, 2, TraceOp.READ)
    rec.record_block(1, [1, 2], TraceOp.READ)
    rec.record_tiled([1], np.zeros((2, 1), dtype=np.int64), TraceOp.READ)
    assert len(rec) == 0
    assert rec.shape_projection().shape == (0, 2)


def test_position_slices_windows():
    rec = TraceRecorder()
    rec.record(1, 0, TraceOp.READ)
    mark = rec.position()
    rec.record(2, 1, TraceOp.WRITE)
    rec.record(3, 2, TraceOp.WRITE)
    window = rec.shape_projection(mark, rec.position())
    assert window.tolist() == [[2, TraceOp.WRITE], [3, TraceOp.WRITE]]


def test_shape_projection_erases_indices():
    a = TraceRecorder()
    b = TraceRecorder()
    a.record(7, 0, TraceOp.READ)
    b.record(7, 5, TraceOp.READ)
    assert shapes_equal(a, b)
    assert a.shape_projection().tolist() == [[7, TraceOp.READ]]


def test_shapes_differ_on_region_op_or_length():
    base = TraceRecorder()
    base.record(7, 0, TraceOp.READ)

    other = TraceRecorder()
    other.record(8, 0, TraceOp.READ)
    assert not shapes_equal(base, other)

    other = TraceRecorder()
    other.record(7, 0, TraceOp.WRITE)
    assert not shapes_equal(base, other)

    other = TraceRecorder()
    other.record(7, 0, TraceOp.READ)
    other.record(7, 0, TraceOp.READ)
    assert not shapes_equal(base, other)


def test_index_histogram_counts_one_region():
    rec = TraceRecorder()
    rec.record_block(4, [0, 2, 2, 3], TraceOp.READ)
    rec.record_block(5, [1, 1], TraceOp.READ)
    assert rec.index_histogram(4, 5).tolist() == [1, 0, 2, 1, 0]
    assert rec.index_histogram(5, 2).tolist() == [0, 2]
    with pytest.raises(InvalidParameterError):
        rec.index_histogram(4, 3)  # index 3 recorded, n too small


def test_regions_present_sorted():
    rec = TraceRecorder()
    rec.record(9, 0, TraceOp.READ)
    rec.record(2, 0, TraceOp.READ)
    rec.record(9, 1, TraceOp.READ)
    assert rec.regions_present() == [2, 9]


def test_write_csv(tmp_path):
    rec = TraceRecorder()
    rec.record(1, 2, TraceOp.READ)
    rec.record(3, 4, TraceOp.READ_WRITE)
    out = tmp_path / "trace.csv"
    rec.write_csv(out)
    assert out.read_text() == "1,2,0\n3,4,2\n"


def test_clear_resets():
    rec = TraceRecorder()
    rec.record(1, 2, TraceOp.READ)
    rec.clear()
    assert len(rec) == 0
    assert rec.events() == []


def test_chi_square_accepts_uniform_counts():
    gen = np.random.Generator(np.random.PCG64(3))
    counts = np.bincount(gen.integers(0, 64, size=64 * 200), minlength=64)
    result = chi_square_uniform(counts)
    assert result.passed
    assert result.dof == 63
    assert result.statistic <= result.critical_value


def test_chi_square_rejects_skewed_counts():
    counts = np.full(16, 100)
    counts[0] = 400
    result = chi_square_uniform(counts)
    assert not result.passed
    assert result.p_value < 0.001


def test_chi_square_input_validation():
    with pytest.raises(InsufficientDataError):
        chi_square_uniform(np.ones(10))  # 10 samples over 10 cells
    with pytest.raises(InvalidParameterError):
        chi_square_uniform(np.array([5.0]))
    with pytest.raises(InvalidParameterError):
        chi_square_uniform(np.full(4, 100), significance=0.0)
    with pytest.raises(InvalidParameterError):
        chi_square_uniform(np.full(4, 100), significance=1.0)


def test_sim_search_touches_one_bucket_per_table():
    for k in (1, 2, 4):
        rec = sim_search(32, k, 2, Rng(11, (k,)))
        events = rec.events()
        assert len(events) == k
        assert [region_table(e.region) for e in events] == list(range(k))


def test_sim_throw_touches_k_buckets_per_slot():
    rec = sim_throw(12, 16, 3, 2, Rng(13, ()))
    assert len(rec) == 12 * 3
    proj = rec.shape_projection()
    # every slot touches tables 0..k-1 in order
    assert proj[:, 0].reshape(12, 3).tolist() == [
        [table_region(0, 0), table_region(0, 1), table_region(0, 2)]
    ] * 12


def test_sim_build_trace_length_matches_formula():
    for n, k, c in ((16, 1, 2), (16, 2, 2), (8, 3, 4)):
        m_total = n * c * k  # a full-size input batch
        rec = sim_build(m_total, n, k, c, Rng(17, (n, k, c)))
        assert len(rec) == build_access_count(m_total, n, k, c)
