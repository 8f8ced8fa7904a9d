"""Command line front end: benchmarks, verification, and statistics.

Subcommands:

  bench   run a synthetic workload, emit per-access CSV and a summary JSON
  verify  run the same store next to a plain dict and compare every result
  zht     Monte Carlo throw-spill statistics for one table shape
  prn     per-routing-stage spill statistics with a paired throw baseline
  bounds  the closed-form bounds at one parameter point
  trace   run a workload with recorders on and dump the access trace

All randomness is seeded (flag --seed, falling back to the PYRAMID_ORAM_SEED
environment variable, then 0), and with --no-timing the outputs of bench are
byte-for-byte reproducible.  Summaries go to stdout as JSON and are validated
against the schemas below before printing.  Exit codes: 0 success, 1 a
verification found a divergence, 2 bad parameters or usage, 3 a runtime
failure (capacity exhausted or a build failed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import jsonschema
import numpy as np

from .analysis import (
    bounds_report,
    bucket_overflow_prob_bound_exact,
    cost_model,
    expected_spill_bound,
    expected_spill_bound_exact,
    mc_prn_stage_spill,
    mc_throw_spill,
)
from .core import (
    BuildFailedError,
    CapacityExceededError,
    InsufficientDataError,
    InvalidParameterError,
    SlotState,
)
from .pyramid import PyramidConfig, PyramidOram
from .trace import TraceRecorder

RUN_VERSION = 1
_WORKLOAD_STREAM = 9

_WORKLOADS = ("uniform", "sequential", "zipf", "replay")

_RUN_SCHEMA = {
    "type": "object",
    "required": ["version", "capacity", "first_level_size", "payload_size",
                 "seed", "ops", "workload", "zipf_theta", "key_space",
                 "read_fraction", "preload", "replay_file"],
    "properties": {
        "version": {"const": RUN_VERSION},
        "capacity": {"type": "integer", "minimum": 2},
        "first_level_size": {"type": "integer", "minimum": 2},
        "payload_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "ops": {"type": "integer", "minimum": 0},
        "workload": {"enum": list(_WORKLOADS)},
        "zipf_theta": {"type": "number", "minimum": 0},
        "key_space": {"type": "integer", "minimum": 1},
        "read_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "preload": {"type": "number", "minimum": 0, "maximum": 1},
        "replay_file": {"type": ["string", "null"]},
    },
}

_BENCH_SCHEMA = {
    "type": "object",
    "required": ["version", "run", "ops", "found", "rebuilds",
                 "online_buckets_total", "total_buckets_total",
                 "online_min_seen", "online_max_seen", "wall_ns_total",
                 "cost_model"],
}

_VERIFY_SCHEMA = {
    "type": "object",
    "required": ["version", "ok", "ops", "checked_keys", "fault_injected",
                 "divergence"],
}

_TRACE_SCHEMA = {
    "type": "object",
    "required": ["version", "ops", "online_events", "build_events",
                 "online_shape_sha256", "build_shape_sha256"],
}

_STATS_SCHEMA = {"type": "object", "required": ["version"]}


def _default_seed() -> int:
    return int(os.environ.get("PYRAMID_ORAM_SEED", "0"))


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one bench/verify/trace run."""

    capacity: int
    first_level_size: int
    payload_size: int
    seed: int
    ops: int
    workload: str
    zipf_theta: float
    key_space: int
    read_fraction: float
    preload: float
    replay_file: str | None = None

    def __post_init__(self):
        if self.workload not in _WORKLOADS:
            raise InvalidParameterError(f"unknown workload {self.workload!r}")
        if self.workload == "replay" and not self.replay_file:
            raise InvalidParameterError("replay workload needs --replay-file")
        if not 0 <= self.read_fraction <= 1:
            raise InvalidParameterError("read_fraction must be in [0, 1]")
        if not 0 <= self.preload <= 1:
            raise InvalidParameterError("preload must be in [0, 1]")
        if self.zipf_theta < 0:
            raise InvalidParameterError("zipf_theta must be non-negative")
        if self.ops < 0:
            raise InvalidParameterError("ops must be non-negative")
        if self.key_space < 1:
            raise InvalidParameterError("key_space must be at least 1")

    def to_json(self) -> dict:
        return {"version": RUN_VERSION, **asdict(self)}

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        if data.get("version") != RUN_VERSION:
            raise InvalidParameterError(
                f"unsupported run config version {data.get('version')!r}"
            )
        fields = {key: value for key, value in data.items() if key != "version"}
        return cls(**fields)

    def store_config(self) -> PyramidConfig:
        return PyramidConfig(
            capacity=self.capacity,
            first_level_size=self.first_level_size,
            payload_size=self.payload_size,
            seed=self.seed,
        )


def make_value(key: int, salt: int, size: int) -> bytes:
    """Deterministic payload bytes for (key, salt); any size."""
    out = bytearray()
    block = 0
    while len(out) < size:
        digest = hashlib.blake2b(
            f"{key}:{salt}:{block}".encode(), digest_size=64
        ).digest()
        out.extend(digest)
        block += 1
    return bytes(out[:size])


def generate_workload(run: RunConfig) -> list[tuple[str, int]]:
    """The (op, key) sequence for a run; a pure function of the run config."""
    if run.workload == "replay":
        return _load_replay(run.replay_file)
    gen = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([run.seed, _WORKLOAD_STREAM]))
    )
    n = run.ops
    if run.workload == "sequential":
        keys = np.arange(n, dtype=np.int64) % run.key_space
    elif run.workload == "uniform":
        keys = gen.integers(0, run.key_space, size=n, dtype=np.int64)
    else:
        ranks = np.arange(1, run.key_space + 1, dtype=np.float64)
        weights = ranks ** -run.zipf_theta
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        keys = np.searchsorted(cdf, gen.random(n), side="right").astype(np.int64)
        keys = np.minimum(keys, run.key_space - 1)
    reads = gen.random(n) < run.read_fraction
    return [
        ("read" if reads[i] else "write", int(keys[i])) for i in range(n)
    ]


def _load_replay(path: str) -> list[tuple[str, int]]:
    ops = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2 or row[0].strip() not in ("read", "write"):
                raise InvalidParameterError(
                    f"{path}:{line_no}: expected 'read,<key>' or 'write,<key>'"
                )
            ops.append((row[0].strip(), int(row[1])))
    return ops


def _preload_items(run: RunConfig) -> list[tuple[int, bytes]]:
    count = int(run.preload * run.key_space)
    return [
        (key, make_value(key, -1, run.payload_size)) for key in range(count)
    ]


def _emit(obj: dict, schema: dict) -> None:
    jsonschema.validate(obj, schema)
    print(json.dumps(obj, indent=2, sort_keys=True))


def _run_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            run = RunConfig.from_json(json.load(fh))
    else:
        run = RunConfig(
            capacity=args.capacity,
            first_level_size=args.first_level_size,
            payload_size=args.payload_size,
            seed=args.seed,
            ops=args.ops,
            workload=args.workload,
            zipf_theta=args.zipf_theta,
            key_space=args.key_space if args.key_space else args.capacity,
            read_fraction=args.read_fraction,
            preload=args.preload,
            replay_file=args.replay_file,
        )
    jsonschema.validate(run.to_json(), _RUN_SCHEMA)
    if getattr(args, "dump_config", None):
        with open(args.dump_config, "w") as fh:
            json.dump(run.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return run


# -- bench ---------------------------------------------------------------------


def cmd_bench(args) -> int:
    run = _run_from_args(args)
    oram = PyramidOram(run.store_config())
    items = _preload_items(run)
    if items:
        oram.bulk_load(items)
    workload = generate_workload(run)
    timing = not args.no_timing

    rows = []
    found_count = 0
    rebuilds = 0
    online_total = 0
    total_total = 0
    wall_total = 0
    for i, (op, key) in enumerate(workload):
        value = make_value(key, i, run.payload_size) if op == "write" else None
        start = time.perf_counter_ns() if timing else 0
        _, rec = oram.access_with_record(op, key, value)
        wall = time.perf_counter_ns() - start if timing else 0
        rows.append((rec.op_index, int(rec.found), rec.rebuilt_level,
                     rec.online_buckets, rec.total_buckets, wall))
        found_count += int(rec.found)
        rebuilds += int(rec.rebuilt_level >= 1)
        online_total += rec.online_buckets
        total_total += rec.total_buckets
        wall_total += wall

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["op_index", "found", "rebuilt_level",
                             "online_buckets", "total_buckets", "wall_ns"])
            writer.writerows(rows)
    if args.cdf:
        totals = sorted(row[4] for row in rows)
        with open(args.cdf, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["total_buckets", "cum_fraction"])
            for i, total in enumerate(totals):
                writer.writerow([total, f"{(i + 1) / len(totals):.6f}"])

    model = cost_model(run.capacity, run.first_level_size)
    summary = {
        "version": RUN_VERSION,
        "run": run.to_json(),
        "ops": len(rows),
        "found": found_count,
        "rebuilds": rebuilds,
        "online_buckets_total": online_total,
        "total_buckets_total": total_total,
        "online_min_seen": min((row[3] for row in rows), default=0),
        "online_max_seen": max((row[3] for row in rows), default=0),
        "wall_ns_total": wall_total,
        "cost_model": model.to_dict(),
    }
    _emit(summary, _BENCH_SCHEMA)
    return 0


# -- verify ----------------------------------------------------------------------


def _flip_one_payload_bit(oram: PyramidOram) -> bool:
    """Corrupt the first real slot of the deepest occupied level (or the log)."""
    for j in range(oram.num_levels, 0, -1):
        level = oram.levels[j]
        if level is None:
            continue
        for tbl in level.tables:
            rows = np.argwhere(tbl.state == SlotState.REAL)
            if rows.size:
                b, s = (int(x) for x in rows[0])
                tbl.payload[b, s, 0] ^= 1
                return True
    rows = np.flatnonzero(oram.level0.state == SlotState.REAL)
    if rows.size:
        oram.level0.payload[int(rows[0]), 0] ^= 1
        return True
    return False


def cmd_verify(args) -> int:
    run = _run_from_args(args)
    oram = PyramidOram(run.store_config())
    reference: dict[int, bytes] = {}
    items = _preload_items(run)
    if items:
        oram.bulk_load(items)
        reference.update(items)
    workload = generate_workload(run)

    divergence = None
    for i, (op, key) in enumerate(workload):
        expected = reference.get(key)
        if op == "write":
            value = make_value(key, i, run.payload_size)
            got = oram.write(key, value)
            reference[key] = value
        else:
            got = oram.read(key)
        if got != expected:
            divergence = {
                "phase": "workload", "op_index": i, "op": op, "key": key,
                "expected": expected.hex() if expected else None,
                "got": got.hex() if got else None,
            }
            break

    fault_injected = False
    if divergence is None and args.inject_fault:
        fault_injected = _flip_one_payload_bit(oram)
    if divergence is None:
        for key in sorted(reference):
            got = oram.read(key)
            if got != reference[key]:
                divergence = {
                    "phase": "sweep", "op_index": None, "op": "read", "key": key,
                    "expected": reference[key].hex(),
                    "got": got.hex() if got else None,
                }
                break

    summary = {
        "version": RUN_VERSION,
        "ok": divergence is None,
        "ops": len(workload),
        "checked_keys": len(reference),
        "fault_injected": fault_injected,
        "divergence": divergence,
    }
    _emit(summary, _VERIFY_SCHEMA)
    return 0 if divergence is None else 1


# -- trace -----------------------------------------------------------------------


def cmd_trace(args) -> int:
    run = _run_from_args(args)
    recorder = TraceRecorder(True)
    build_recorder = TraceRecorder(True)
    oram = PyramidOram(run.store_config(), recorder, build_recorder)
    items = _preload_items(run)
    if items:
        oram.bulk_load(items)
    workload = generate_workload(run)
    for i, (op, key) in enumerate(workload):
        value = make_value(key, i, run.payload_size) if op == "write" else None
        oram.access(op, key, value)

    if args.out:
        recorder.write_csv(args.out)
    if args.build_out:
        build_recorder.write_csv(args.build_out)
    summary = {
        "version": RUN_VERSION,
        "ops": len(workload),
        "online_events": len(recorder),
        "build_events": len(build_recorder),
        "online_shape_sha256": hashlib.sha256(
            recorder.shape_projection().tobytes()
        ).hexdigest(),
        "build_shape_sha256": hashlib.sha256(
            build_recorder.shape_projection().tobytes()
        ).hexdigest(),
    }
    _emit(summary, _TRACE_SCHEMA)
    return 0


# -- statistics ------------------------------------------------------------------


def cmd_zht(args) -> int:
    stats = mc_throw_spill(args.m, args.n, args.c, args.trials, args.seed,
                           workers=args.workers)
    bound = expected_spill_bound(args.m, args.n, args.c)
    out = {
        "version": RUN_VERSION,
        "m": args.m, "n": args.n, "c": args.c,
        "stats": stats.to_dict(),
        "expected_spill_bound": bound,
        "within_bound": stats.mean <= bound,
    }
    _emit(out, _STATS_SCHEMA)
    return 0


def cmd_prn(args) -> int:
    report = mc_prn_stage_spill(args.n, args.c, args.load, args.trials, args.seed)
    out = {"version": RUN_VERSION, **report.to_dict()}
    _emit(out, _STATS_SCHEMA)
    return 0


def cmd_bounds(args) -> int:
    report = bounds_report(args.m, args.n, args.c, args.k)
    out = {
        "version": RUN_VERSION,
        **report.to_dict(),
        "overflow_prob_exact": str(
            bucket_overflow_prob_bound_exact(args.m, args.n, args.c)
        ),
        "expected_spill_exact": str(
            expected_spill_bound_exact(args.m, args.n, args.c)
        ),
    }
    _emit(out, _STATS_SCHEMA)
    return 0


# -- wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyramid-oram",
        description="Oblivious key-value store: benchmarks, checks, statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    store = argparse.ArgumentParser(add_help=False)
    store.add_argument("--capacity", type=int, default=4096,
                       help="stored key capacity N (power of two)")
    store.add_argument("--first-level-size", type=int, default=64,
                       help="append log size p (power of two)")
    store.add_argument("--payload-size", type=int, default=56)
    store.add_argument("--seed", type=int, default=_default_seed())

    work = argparse.ArgumentParser(add_help=False)
    work.add_argument("--ops", type=int, default=1024)
    work.add_argument("--workload", choices=_WORKLOADS, default="uniform")
    work.add_argument("--zipf-theta", type=float, default=0.99)
    work.add_argument("--key-space", type=int, default=None,
                      help="distinct keys (default: capacity)")
    work.add_argument("--read-fraction", type=float, default=0.5)
    work.add_argument("--preload", type=float, default=0.0,
                      help="fraction of the key space bulk-loaded up front")
    work.add_argument("--replay-file", default=None,
                      help="CSV of op,key lines for --workload replay")
    work.add_argument("--config", default=None,
                      help="JSON run config (overrides the flags above)")
    work.add_argument("--dump-config", default=None,
                      help="write the effective run config as JSON")

    bench = sub.add_parser("bench", parents=[store, work],
                           help="run a workload and summarize costs")
    bench.add_argument("--csv", default=None, help="per-access CSV path")
    bench.add_argument("--cdf", default=None,
                       help="cumulative cost distribution CSV path")
    bench.add_argument("--no-timing", action="store_true",
                       help="write wall_ns as 0 for reproducible bytes")
    bench.set_defaults(func=cmd_bench)

    verify = sub.add_parser("verify", parents=[store, work],
                            help="compare against an in-memory reference")
    verify.add_argument("--inject-fault", action="store_true",
                        help="flip one stored bit; verification must fail")
    verify.set_defaults(func=cmd_verify)

    trace = sub.add_parser("trace", parents=[store, work],
                           help="record and dump the bucket access trace")
    trace.add_argument("--out", default=None, help="online trace CSV path")
    trace.add_argument("--build-out", default=None, help="rebuild trace CSV path")
    trace.set_defaults(func=cmd_trace)

    zht = sub.add_parser("zht", help="Monte Carlo throw-spill statistics")
    zht.add_argument("--m", type=int, required=True)
    zht.add_argument("--n", type=int, required=True)
    zht.add_argument("--c", type=int, required=True)
    zht.add_argument("--trials", type=int, default=10_000)
    zht.add_argument("--seed", type=int, default=_default_seed())
    zht.add_argument("--workers", type=int, default=1)
    zht.set_defaults(func=cmd_zht)

    prn = sub.add_parser("prn", help="per-stage routing spill statistics")
    prn.add_argument("--n", type=int, required=True)
    prn.add_argument("--c", type=int, required=True)
    prn.add_argument("--load", type=int, required=True)
    prn.add_argument("--trials", type=int, default=10_000)
    prn.add_argument("--seed", type=int, default=_default_seed())
    prn.set_defaults(func=cmd_prn)

    bounds = sub.add_parser("bounds", help="closed-form bounds at one point")
    bounds.add_argument("--m", type=int, required=True)
    bounds.add_argument("--n", type=int, required=True)
    bounds.add_argument("--c", type=int, required=True)
    bounds.add_argument("--k", type=int, default=4)
    bounds.set_defaults(func=cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (InvalidParameterError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BuildFailedError, CapacityExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
