"""Portfolios, investment sequences, feasibility, enumeration and counting.

A sequence is an ordered list of pairwise-disjoint portfolios (tuples of
region ids) covering every region exactly once, with each portfolio holding
at most k regions and the list no longer than the planning horizon T.
Feasible sequences are exactly the ordered set partitions of {0..N-1} with
block sizes <= k and block count <= T.
"""

from __future__ import annotations

import json
from itertools import combinations
from math import comb, ceil
from functools import lru_cache
from typing import Iterator, Sequence as Seq

import numpy as np

from .errors import DataError
from .scenario import Scenario

Portfolio = tuple[int, ...]
InvestmentSequence = tuple[Portfolio, ...]


def is_feasible(seq: Seq[Seq[int]], n_regions: int, k: int, horizon: int) -> bool:
    """Check the three feasibility conditions: length <= T, portfolio sizes
    in 1..k, and every region covered exactly once."""
    if len(seq) > horizon:
        return False
    seen: set[int] = set()
    total = 0
    for portfolio in seq:
        size = len(portfolio)
        if not 1 <= size <= k:
            return False
        total += size
        seen.update(portfolio)
        if len(seen) != total:  # duplicate inside or across portfolios
            return False
    return seen == set(range(n_regions))


def portfolio_count(n_regions: int, k: int) -> int:
    """Number of possible portfolios: sum_{i=1..k} C(N, i)."""
    if not 1 <= k <= n_regions:
        raise ValueError("need 1 <= k <= N")
    return sum(comb(n_regions, i) for i in range(1, k + 1))


def count_feasible(n_regions: int, k: int, horizon: int) -> int:
    """Closed-form count of feasible sequences (ordered set partitions with
    block sizes <= k and at most T blocks)."""
    if n_regions <= 0 or k <= 0 or horizon <= 0:
        return 0

    @lru_cache(maxsize=None)
    def rec(n: int, steps: int) -> int:
        if n == 0:
            return 1
        if steps == 0:
            return 0
        return sum(comb(n, s) * rec(n - s, steps - 1)
                   for s in range(1, min(k, n) + 1))

    return rec(n_regions, horizon)


def enumerate_feasible(n_regions: int, k: int, horizon: int) -> Iterator[InvestmentSequence]:
    """Yield every feasible sequence exactly once, in deterministic order
    (at each position, candidate portfolios in lexicographic id order)."""
    if n_regions <= 0 or k <= 0 or horizon <= 0:
        return

    def rec(remaining: tuple[int, ...], steps_left: int, prefix: list[Portfolio]):
        if not remaining:
            yield tuple(prefix)
            return
        if steps_left == 0 or len(remaining) > k * steps_left:
            return
        subsets = sorted(
            s for size in range(1, min(k, len(remaining)) + 1)
            for s in combinations(remaining, size)
        )
        for portfolio in subsets:
            rest = tuple(r for r in remaining if r not in portfolio)
            prefix.append(portfolio)
            yield from rec(rest, steps_left - 1, prefix)
            prefix.pop()

    yield from rec(tuple(range(n_regions)), horizon, [])


def myopia_sequence(scenario: Scenario, mode: str = "high") -> InvestmentSequence:
    """Fixed-ranking baseline: regions ordered by baseline demand (descending
    for 'high', ascending for 'low', ties by id), chunked greedily into
    portfolios of size min(k, remaining)."""
    if mode not in ("high", "low"):
        raise ValueError("mode must be 'high' or 'low'")
    b = scenario.baseline_demand
    ids = np.arange(scenario.n_regions)
    if mode == "high":
        order = sorted(ids, key=lambda i: (-b[i], i))
    else:
        order = sorted(ids, key=lambda i: (b[i], i))
    k = scenario.k
    return tuple(
        tuple(int(r) for r in order[pos:pos + k])
        for pos in range(0, len(order), k)
    )


def parse_sequence(text: str) -> InvestmentSequence:
    """Parse the bracketed text form, e.g. '[[4],[2],[1],[3]]'."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse sequence {text!r}: {exc}") from exc
    if not isinstance(raw, list) or not all(isinstance(p, list) for p in raw):
        raise DataError(f"sequence must be a list of lists: {text!r}")
    seq = []
    for portfolio in raw:
        ids = []
        for region in portfolio:
            if not isinstance(region, int) or isinstance(region, bool):
                raise DataError(f"region ids must be integers: {text!r}")
            ids.append(region)
        seq.append(tuple(ids))
    return tuple(seq)


def format_sequence(seq: Seq[Seq[int]]) -> str:
    return json.dumps([list(p) for p in seq], separators=(",", ":"))


def validate_for_valuation(seq: Seq[Seq[int]], n_regions: int, k: int, horizon: int) -> InvestmentSequence:
    """Validate the constraints a (possibly partial) sequence must satisfy to
    be valued: disjoint portfolios, sizes 1..k, ids in range, length <= T.
    Full coverage is NOT required here (prefixes are valued during sequence
    construction); use is_feasible for final sequences."""
    if len(seq) > horizon:
        raise DataError(f"sequence length {len(seq)} exceeds horizon {horizon}")
    seen: set[int] = set()
    out = []
    for portfolio in seq:
        if not 1 <= len(portfolio) <= k:
            raise DataError(f"portfolio {list(portfolio)} violates size limit k={k}")
        for region in portfolio:
            if not 0 <= region < n_regions:
                raise DataError(f"region id {region} out of range 0..{n_regions - 1}")
            if region in seen:
                raise DataError(f"region {region} appears more than once")
            seen.add(region)
        out.append(tuple(int(r) for r in portfolio))
    return tuple(out)


def min_sequence_length(n_regions: int, k: int) -> int:
    return ceil(n_regions / k)
