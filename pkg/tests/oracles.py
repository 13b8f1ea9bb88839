"""Independent oracles used by the tests.

Everything here is written from first principles against the model
definitions, deliberately NOT reusing the library's valuation internals, so
a bug in the engine cannot hide in the check.
"""

import math

import numpy as np


def det_demand(q0, mu, t):
    """Deterministic demand at time t when sigma = lambda = 0: the exact
    per-period update multiplies row i by exp(mu_i) each step."""
    return q0 * np.exp(np.asarray(mu)[:, None] * t)


def covered_sets(seq):
    out = []
    acc = set()
    for portfolio in seq:
        acc = acc | set(portfolio)
        out.append(sorted(acc))
    return out


def block_sum(matrix, ids):
    if not ids:
        return 0.0
    idx = np.ix_(ids, ids)
    return float(matrix[idx].sum())


def det_payoff(scen, seq, h, t):
    """Immediate payoff of portfolio h at time t under deterministic demand,
    computed with its own threshold arithmetic."""
    q_t = det_demand(scen.calib.q0, scen.calib.mu, t)
    cov = covered_sets(seq)
    prev = cov[h - 1] if h > 0 else []
    x = block_sum(q_t, cov[h]) - block_sum(q_t, prev)
    size = len(seq[h])
    after = len(cov[h])
    before = after - size
    links = size * (2 * after - size - 1) / 2
    ft = scen.costs.f_end ** (t / scen.horizon)
    threshold = (size * scen.costs.c_intra * ft
                 + links * scen.costs.c_inter * ft / (1 + scen.costs.zeta * before))
    return x - threshold


def timing_oracle(scen, seq):
    """Exhaustive search over admissible stopping-time vectors (deterministic
    demand): tau_h <= T - (H-1-h), tau_h >= tau_{h-1} + 1, value is the sum of
    discounted immediate payoffs."""
    horizon = scen.horizon
    h_len = len(seq)
    expiry = [horizon - (h_len - 1 - h) for h in range(h_len)]
    disc = 1.0 / (1.0 + scen.rho)
    payoffs = {(h, t): det_payoff(scen, seq, h, t)
               for h in range(h_len) for t in range(horizon + 1)}
    best = -math.inf

    def recurse(h, t_min, acc):
        nonlocal best
        if h == h_len:
            best = max(best, acc)
            return
        for t in range(t_min, expiry[h] + 1):
            recurse(h + 1, t + 1, acc + disc**t * payoffs[(h, t)])

    recurse(0, 0, 0.0)
    return best


def law_of_cosines_km(lat1, lon1, lat2, lon2, radius=6371.0088):
    """Great-circle distance via the spherical law of cosines (an
    independent formulation of the haversine computation)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    arg = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.acos(min(1.0, max(-1.0, arg)))


def congestion_fixed_point_1x1(latent, fare, delta, vot, tt, speed,
                               coeff=0.8, tol=1e-12):
    """Scalar bisection for the wait-time fixed point of a 1x1 latent matrix:
    w = coeff * (latent * exp(-delta*(fare + vot*(tt + w))))^(1/3) * speed^(-2/3)."""

    def g(w):
        realized = latent * math.exp(-delta * (fare + vot * (tt + w)))
        return coeff * realized ** (1.0 / 3.0) * speed ** (-2.0 / 3.0) - w

    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e9:
            raise RuntimeError("no bracket for fixed point")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def ordered_partition_count_brute(n, k, t_max):
    """Count ordered set partitions with block sizes <= k and <= t_max blocks
    by direct recursive enumeration over labeled elements."""
    from itertools import combinations

    def recurse(remaining, steps):
        if not remaining:
            return 1
        if steps == 0:
            return 0
        total = 0
        for size in range(1, min(k, len(remaining)) + 1):
            for block in combinations(remaining, size):
                rest = tuple(x for x in remaining if x not in block)
                total += recurse(rest, steps - 1)
        return total

    return recurse(tuple(range(n)), t_max)
