"""Closed-form bounds and the Monte Carlo experiments that check them.

The randomized pieces of the structure admit simple binomial-tail bounds:

  * a fixed bucket receives >= c of m thrown elements with probability at
    most C(m, c) / n^c;
  * the expected count of elements a throw cannot place (its spill) is at
    most C(m, c+1) / n^c;
  * one repartition stage spills no more, in expectation, than a fresh throw
    of the same number of elements, so the per-stage bound above applies
    stage by stage;
  * a k-table build fails only if some bucket overflows in every table,
    giving the union bound n * (C(n, c) / n^c)^k at full load.

Each bound has an exact rational path (Fraction arithmetic) and a log-gamma
float path; the suite requires them to agree to ten significant digits.  The
mc_* functions estimate the corresponding empirical quantities with seeded,
chunked substreams so runs reproduce exactly, serial or parallel.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .core import HashFamily, Rng, SlotArray, SlotState, _require, is_power_of_two
from .ozht import build_access_count, oblivious_build
from .prn import route_census, stage_count
from .pyramid import PyramidConfig

_THROW_STREAM = 1
_CENSUS_STREAM = 2
_DECAY_STREAM = 3
_CHUNK = 256

_AUTO_EXACT_LIMIT = 10_000


# -- analytic bounds ---------------------------------------------------------


def bucket_overflow_prob_bound_exact(m: int, n: int, c: int) -> Fraction:
    """C(m, c) / n^c as an exact rational; 0 when fewer than c are thrown.

    An upper bound on the probability that one fixed bucket out of n receives
    c or more of m uniformly thrown elements.  Not clamped: values above 1
    are vacuous but still exact.
    """
    _require(m >= 0 and n >= 1 and c >= 1, "bad bound parameters")
    if m < c:
        return Fraction(0)
    return Fraction(math.comb(m, c), n**c)


def expected_spill_bound_exact(m: int, n: int, c: int) -> Fraction:
    """C(m, c+1) / n^c exactly: a bound on the mean spill of one throw."""
    _require(m >= 0 and n >= 1 and c >= 1, "bad bound parameters")
    if m <= c:
        return Fraction(0)
    return Fraction(math.comb(m, c + 1), n**c)


def _log_comb(m: int, j: int) -> float:
    # The lower index here is a bucket size, always small, so the falling
    # factorial as a short log sum keeps ~1e-14 relative accuracy at any m;
    # the three-term log-gamma form loses digits to cancellation as m grows.
    if j <= 64:
        return sum(math.log(m - i) for i in range(j)) - math.lgamma(j + 1)
    return math.lgamma(m + 1) - math.lgamma(j + 1) - math.lgamma(m - j + 1)


def bucket_overflow_prob_bound(m: int, n: int, c: int, method: str = "auto") -> float:
    """Float view of bucket_overflow_prob_bound_exact.

    method "exact" evaluates the rational and converts once; "float" stays in
    log space throughout (no big integers); "auto" picks exact for small m.
    """
    _require(method in ("auto", "exact", "float"), "unknown method")
    if method == "auto":
        method = "exact" if m <= _AUTO_EXACT_LIMIT else "float"
    if method == "exact":
        return float(bucket_overflow_prob_bound_exact(m, n, c))
    _require(m >= 0 and n >= 1 and c >= 1, "bad bound parameters")
    if m < c:
        return 0.0
    return math.exp(_log_comb(m, c) - c * math.log(n))


def expected_spill_bound(m: int, n: int, c: int, method: str = "auto") -> float:
    """Float view of expected_spill_bound_exact; same method switch."""
    _require(method in ("auto", "exact", "float"), "unknown method")
    if method == "auto":
        method = "exact" if m <= _AUTO_EXACT_LIMIT else "float"
    if method == "exact":
        return float(expected_spill_bound_exact(m, n, c))
    _require(m >= 0 and n >= 1 and c >= 1, "bad bound parameters")
    if m <= c:
        return 0.0
    return math.exp(_log_comb(m, c + 1) - c * math.log(n))


def zigzag_failure_union_bound(n: int, k: int, c: int) -> float:
    """Union bound on build failure at full load: n * (C(n, c)/n^c)^k, <= 1."""
    _require(n >= 1 and k >= 1 and c >= 1, "bad bound parameters")
    per_bucket = bucket_overflow_prob_bound_exact(n, n, c)
    return float(min(Fraction(1), n * per_bucket**k))


@dataclass(frozen=True)
class BoundReport:
    """The bounds above evaluated at one parameter point."""

    m: int
    n: int
    c: int
    k: int
    overflow_prob_bound: float
    expected_spill_bound: float
    failure_union_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def bounds_report(m: int, n: int, c: int, k: int) -> BoundReport:
    return BoundReport(
        m=m, n=n, c=c, k=k,
        overflow_prob_bound=bucket_overflow_prob_bound(m, n, c),
        expected_spill_bound=expected_spill_bound(m, n, c),
        failure_union_bound=zigzag_failure_union_bound(n, k, c),
    )


# -- Monte Carlo: throw spill -------------------------------------------------


@dataclass(frozen=True)
class SpillStats:
    trials: int
    mean: float
    stderr: float
    max_spill: int

    def to_dict(self) -> dict:
        return asdict(self)


def _throw_spill_chunk(args) -> np.ndarray:
    seed, chunk_id, count, m, n, c = args
    rng = Rng(seed, (_THROW_STREAM, chunk_id))
    draws = rng.buckets(n, (count, m))
    offsets = (np.arange(count) * n)[:, None]
    counts = np.bincount(
        (draws + offsets).ravel(), minlength=count * n
    ).reshape(count, n)
    over = counts - c
    np.maximum(over, 0, out=over)
    return over.sum(axis=1)


def mc_throw_spill(m: int, n: int, c: int, trials: int, seed: int,
                   workers: int = 1) -> SpillStats:
    """Empirical spill of throwing m elements into n buckets of c slots.

    Trials run in fixed chunks with per-chunk substreams, so the estimate is
    identical for any worker count.
    """
    _require(is_power_of_two(n), "n must be a power of two")
    _require(m >= 0 and c >= 1 and trials >= 2, "need at least two trials")
    jobs = []
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        jobs.append((seed, len(jobs), count, m, n, c))
        done += count
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_throw_spill_chunk, jobs))
    else:
        parts = [_throw_spill_chunk(job) for job in jobs]
    spills = np.concatenate(parts)
    return SpillStats(
        trials=trials,
        mean=float(spills.mean()),
        stderr=float(spills.std(ddof=1) / math.sqrt(trials)),
        max_spill=int(spills.max()),
    )


# -- Monte Carlo: per-stage routing spill --------------------------------------


@dataclass(frozen=True)
class StageSpillReport:
    """Per-stage routing spill next to a paired fresh-throw baseline.

    stage_live_mean[s] is the mean count of still-routed elements entering
    stage s; comparisons against a fresh throw are made at that load.
    """

    n: int
    c: int
    load: int
    trials: int
    stage_mean: tuple[float, ...]
    stage_stderr: tuple[float, ...]
    stage_live_mean: tuple[float, ...]
    throw: SpillStats
    input_overflow_mean: float

    def to_dict(self) -> dict:
        data = asdict(self)
        data["throw"] = self.throw.to_dict()
        return data


def mc_prn_stage_spill(n: int, c: int, load: int, trials: int, seed: int,
                       block: int = 512) -> StageSpillReport:
    """Spill per routing stage when `load` tagged elements start at random slots.

    Each trial throws `load` elements into the table (first-fit per bucket;
    the rare input overflow is dropped and counted), draws uniform
    destinations, and routes.  The paired mc_throw_spill run at the same load
    is the per-stage comparison baseline.
    """
    _require(is_power_of_two(n) and n >= 2, "n must be a power of two >= 2")
    _require(1 <= load <= n * c, "load must fit the table")
    _require(trials >= 2, "need at least two trials")
    stages = stage_count(n)
    spill_parts = []
    live_parts = []
    overflow_total = 0
    done = 0
    block_id = 0
    while done < trials:
        count = min(block, trials - done)
        rng = Rng(seed, (_CENSUS_STREAM, block_id))
        draws = rng.buckets(n, (count, load))

        ti = np.repeat(np.arange(count), load)
        bucket = draws.ravel()
        group = ti * n + bucket
        order = np.argsort(group, kind="stable")
        sorted_group = group[order]
        is_start = np.r_[True, sorted_group[1:] != sorted_group[:-1]]
        start_pos = np.maximum.accumulate(
            np.where(is_start, np.arange(sorted_group.size), 0)
        )
        rank = np.empty_like(start_pos)
        rank[order] = np.arange(sorted_group.size) - start_pos

        fits = rank < c
        overflow_total += int((~fits).sum())
        tag = np.zeros((count, n, c), dtype=bool)
        tag[ti[fits], bucket[fits], rank[fits]] = True
        dest = rng.buckets(n, (count, n, c))
        spills, live = route_census(tag, dest, rng)
        spill_parts.append(spills)
        live_parts.append(live)
        done += count
        block_id += 1
    spills = np.concatenate(spill_parts)
    live = np.concatenate(live_parts)
    throw = mc_throw_spill(load, n, c, trials, seed)
    return StageSpillReport(
        n=n, c=c, load=load, trials=trials,
        stage_mean=tuple(float(x) for x in spills.mean(axis=0)),
        stage_stderr=tuple(
            float(x) for x in spills.std(axis=0, ddof=1) / math.sqrt(trials)
        ),
        stage_live_mean=tuple(float(x) for x in live.mean(axis=0)),
        throw=throw,
        input_overflow_mean=overflow_total / trials,
    )


# -- Monte Carlo: arrival decay across tables ----------------------------------


@dataclass(frozen=True)
class DecayReport:
    """How many elements reach each table over repeated full-load builds."""

    n: int
    k: int
    c: int
    trials: int
    failures: int
    monotone: bool
    mean_arrivals: tuple[float, ...]
    max_arrivals: tuple[int, ...]
    max_occupancy: tuple[int, ...]
    arrival_bound_table3: float

    def to_dict(self) -> dict:
        return asdict(self)


def decay_check(n: int, c: int, k: int, trials: int, seed: int) -> DecayReport:
    """Build full-load tables repeatedly and record per-table arrivals.

    Requires n >= 1024: the n/(2e) third-table bound quoted in the report is
    asymptotic and misleading at toy sizes.  Each trial uses its own hash
    epoch and substream.
    """
    _require(is_power_of_two(n) and n >= 1024, "decay check needs n >= 1024")
    _require(k >= 1 and c >= 1 and trials >= 1, "bad decay parameters")
    failures = 0
    arrivals = []
    occupancy = []
    for trial in range(trials):
        rng = Rng(seed, (_DECAY_STREAM, trial))
        fam = HashFamily(seed, epoch=trial)
        elems = SlotArray(n, payload_size=8)
        elems.key[:] = np.arange(n, dtype=np.uint32)
        elems.state[:] = SlotState.REAL
        _, report = oblivious_build(elems, n, k, c, fam, rng)
        if not report.success:
            failures += 1
            continue
        arrivals.append(report.arrivals_per_table)
        occupancy.append(report.occupancy_per_table)
    if arrivals:
        arr = np.array(arrivals)
        occ = np.array(occupancy)
        monotone = bool((np.diff(arr, axis=1) <= 0).all())
        mean_arrivals = tuple(float(x) for x in arr.mean(axis=0))
        max_arrivals = tuple(int(x) for x in arr.max(axis=0))
        max_occupancy = tuple(int(x) for x in occ.max(axis=0))
    else:
        monotone = True
        mean_arrivals = ()
        max_arrivals = ()
        max_occupancy = ()
    return DecayReport(
        n=n, k=k, c=c, trials=trials, failures=failures, monotone=monotone,
        mean_arrivals=mean_arrivals, max_arrivals=max_arrivals,
        max_occupancy=max_occupancy,
        arrival_bound_table3=n / (2 * math.e),
    )


# -- cost model ----------------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    """Steady-state bucket-access accounting over one rebuild period."""

    capacity: int
    first_level_size: int
    num_levels: int
    online_min: int
    online_max: int
    total_period: int
    amortized: float

    def to_dict(self) -> dict:
        return asdict(self)


def cost_model(capacity: int, first_level_size: int,
               k_override: int | None = None,
               c_override: int | None = None) -> CostModel:
    """Exact steady-state costs: online extremes and the amortized per-access total.

    Steady state means the last level is occupied throughout (true from the
    first full rebuild on).  Over one period of N accesses, level j < l is
    occupied for exactly half of them and rebuilt N / (2^j p) times; the last
    level is always occupied and rebuilt once, re-absorbing its own contents.
    """
    config = PyramidConfig(
        capacity=capacity,
        first_level_size=first_level_size,
        k_override=k_override,
        c_override=c_override,
    )
    levels = config.levels
    last = levels[-1]
    cap = config.capacity
    p = config.first_level_size
    online_min = p + last.k
    online_max = p + sum(lp.k for lp in levels)
    online_total = cap * p + (cap // 2) * sum(lp.k for lp in levels[:-1]) + cap * last.k

    rebuild_total = 0
    prefix_slots = p
    for lp in levels[:-1]:
        count = cap // ((1 << lp.index) * p)
        rebuild_total += count * build_access_count(prefix_slots, lp.n, lp.k, lp.c)
        prefix_slots += lp.slot_count
    full_m = prefix_slots + last.slot_count
    rebuild_total += build_access_count(full_m, last.n, last.k, last.c)

    total_period = online_total + rebuild_total
    return CostModel(
        capacity=cap,
        first_level_size=p,
        num_levels=config.num_levels,
        online_min=online_min,
        online_max=online_max,
        total_period=total_period,
        amortized=total_period / cap,
    )
