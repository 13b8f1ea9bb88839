# The feasible sequence space: ordered portfolios under the k-region cap.
#
# A feasible sequence partitions the regions into an ordered list of disjoint
# portfolios, each of size at most k, no longer than the horizon.  The space
# explodes combinatorially in N and k - the reason a learned policy is worth
# training instead of enumerating.

from ssrd.sequences import (
    count_feasible, enumerate_feasible, format_sequence, portfolio_count,
)

print("portfolios available per step (m_p = sum_i C(N,i)):")
for n, k in [(7, 2), (7, 3), (9, 4)]:
    print(f"  N={n}, k={k}: {portfolio_count(n, k)} candidate portfolios")

print("\nfeasible sequence counts at T=5:")
for n in range(4, 10):
    row = [f"k={k}: {count_feasible(n, k, 5):>8}" for k in range(2, 5)]
    print(f"  N={n}:  " + "   ".join(row))

print("\nthe 4-region, k=2 space has 66 members; the first ten in stream order:")
for i, seq in enumerate(enumerate_feasible(4, 2, 5)):
    if i == 10:
        break
    print(f"  {format_sequence(seq)}")

# length bound at work: 6 singletons cannot fit into 5 periods
from ssrd.sequences import is_feasible
six_singletons = tuple((i,) for i in range(6))
print(f"\n6 singletons in T=5 feasible? {is_feasible(six_singletons, 6, 2, 5)}"
      " (the length bound removes all 720 singleton orderings from the 2970)")
