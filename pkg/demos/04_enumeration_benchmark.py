# Exhaustive benchmark: value every feasible sequence of a small instance.
#
# Stationary spillovers let every sequence share one simulated path set
# (common random numbers), so the full 4-region space values in well under a
# second and the ranking is an apples-to-apples comparison.

import time

import numpy as np

from ssrd.datasets import build_named_scenario
from ssrd.sequences import enumerate_feasible, format_sequence, myopia_sequence
from ssrd.valuation import RoaEvaluator

scen = build_named_scenario("shanghai4", k=2, n_paths=300, seed=1)
evaluator = RoaEvaluator(scen)

start = time.perf_counter()
values = {seq: evaluator.evaluate(seq, seed=1).option_value
          for seq in enumerate_feasible(4, 2, 5)}
elapsed = time.perf_counter() - start
print(f"valued {len(values)} sequences in {elapsed:.2f}s")

ranked = sorted(values.items(), key=lambda kv: -kv[1])
print("\ntop five sequences:")
for seq, val in ranked[:5]:
    print(f"  {format_sequence(seq):32s} {val:12,.1f}")
print("bottom three:")
for seq, val in ranked[-3:]:
    print(f"  {format_sequence(seq):32s} {val:12,.1f}")

vals = np.array(list(values.values()))
print(f"\ndistribution: mean {vals.mean():,.1f}, sd {vals.std():,.1f}, "
      f"spread {vals.max() - vals.min():,.1f}")
print("the ordering matters: the best and worst sequences cover the same "
      "regions, only the timing structure differs")

for mode in ("high", "low"):
    seq = myopia_sequence(scen, mode)
    canon = tuple(tuple(sorted(p)) for p in seq)  # portfolios are sets
    val = values[canon]
    rank = 1 + sum(v > val for v in vals)
    print(f"myopia-{mode[0]}: {format_sequence(seq):28s} value {val:,.1f} "
          f"(rank {rank}/{len(vals)})")
