import math

import numpy as np
import pytest

import ssrd
from ssrd.valuation import RoaEvaluator


def make_regions(attrs, with_centroids=False):
    """attrs: list of (area, density) or (area, density, lat, lon)."""
    regions = []
    for i, row in enumerate(attrs):
        centroid = (row[2], row[3]) if with_centroids or len(row) == 4 else None
        regions.append(ssrd.Region(i, f"r{i}", row[0], row[1], centroid))
    return regions


DET4_ATTRS = [(10, 500), (20, 300), (5, 900), (15, 400)]


@pytest.fixture(scope="session")
def det4_scenario():
    """4 regions, sigma = lambda = 0: fully deterministic demand."""
    regions = make_regions(DET4_ATTRS)
    calib = ssrd.calibrate(regions, mu_range=(0.02, 0.08), sigma_range=(0.0, 0.0),
                           lambda_range=(0.0, 0.0), intra_fraction=0.4,
                           demand_scale=0.01)
    return ssrd.build_scenario(regions, horizon=5, k=2, n_paths=8, seed=1,
                               calib=calib, name="det4")


@pytest.fixture(scope="session")
def small_scenario():
    """4 regions, mild stochastic demand, few paths: fast valuation."""
    regions = make_regions(DET4_ATTRS)
    return ssrd.build_scenario(regions, horizon=5, k=2, n_paths=60, seed=11,
                               demand_scale=0.01, name="small4")


def random_scenario(rng, n_paths=150, tag=""):
    """Random feasible scenario with N in 3..7 and compatible k."""
    n = int(rng.integers(3, 8))
    k_lo = math.ceil(n / 5)
    k_hi = min(n, 3)
    k = int(rng.integers(k_lo, k_hi + 1)) if k_lo <= k_hi else k_lo
    regions = [
        ssrd.Region(i, f"r{i}", float(rng.uniform(5, 100)),
                    float(rng.uniform(200, 2000)), None)
        for i in range(n)
    ]
    seed = int(rng.integers(0, 2**31))
    return ssrd.build_scenario(regions, horizon=5, k=k, n_paths=n_paths,
                               seed=seed, demand_scale=0.01,
                               name=f"rand{tag}")


def random_feasible_sequence(rng, n, k, horizon):
    while True:
        ids = [int(x) for x in rng.permutation(n)]
        seq = []
        while ids:
            take = int(rng.integers(1, min(k, len(ids)) + 1))
            seq.append(tuple(ids[:take]))
            ids = ids[take:]
        if len(seq) <= horizon:
            return tuple(seq)


@pytest.fixture(scope="session")
def shanghai4():
    from ssrd.datasets import build_named_scenario
    return build_named_scenario("shanghai4", k=2, n_paths=80, seed=11)
