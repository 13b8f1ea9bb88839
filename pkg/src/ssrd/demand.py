"""OD demand path simulation: geometric Brownian motion with investment-induced
Poisson jump spillovers.

Each Monte Carlo path owns three RNG substreams derived deterministically from
(seed, path index): diffusion shocks, jump counts and jump magnitudes.  The
separation gives exact common random numbers: changing only the spillover
strength or distribution reuses identical diffusion increments and jump counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, SpilloverSpec


@dataclass(frozen=True)
class InvestmentSchedule:
    """Per-region investment period (or -1 for never), plus the derived
    cumulative invested count I_t driving nonstationary spillovers."""

    invest_time: np.ndarray  # (N,) int, period index or -1
    horizon: int

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.invest_time, dtype=np.int64))
        arr.flags.writeable = False
        object.__setattr__(self, "invest_time", arr)

    @classmethod
    def never(cls, n_regions: int, horizon: int) -> "InvestmentSchedule":
        return cls(np.full(n_regions, -1), horizon)

    @classmethod
    def earliest(cls, sequence, n_regions: int, horizon: int) -> "InvestmentSchedule":
        """Portfolio h invested at period h-1 (the earliest admissible slot)."""
        times = np.full(n_regions, -1)
        for h, portfolio in enumerate(sequence):
            for region in portfolio:
                times[region] = h
        return cls(times, horizon)

    @property
    def coverage(self) -> np.ndarray:
        """I_t for t = 0..T: number of regions invested at or before t."""
        t_grid = np.arange(self.horizon + 1)
        invested = self.invest_time[self.invest_time >= 0]
        return np.array([(invested <= t).sum() for t in t_grid], dtype=np.int64)

    def signature(self) -> tuple:
        return tuple(int(v) for v in self.invest_time)


@dataclass(frozen=True)
class DemandPathSet:
    """Simulated OD demand tensor indexed [path, time, origin, destination]."""

    values: np.ndarray
    seed: int
    schedule: InvestmentSchedule
    floored: int = 0  # entries clamped at zero after negative jump multipliers

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1] - 1


def sample_spillover(spec: SpilloverSpec, rng: np.random.Generator, size: int | None = None):
    """Draw jump magnitudes eta = strength * base draw.

    Shape/scale parameters are drawn per instance from the spec's ranges.
    Non-gamma distributions are moment matched to the gamma baseline mean
    shape*scale and variance shape*scale^2.
    """
    n = 1 if size is None else size
    shape = rng.uniform(spec.shape_range[0], spec.shape_range[1], size=n)
    scale = rng.uniform(spec.scale_range[0], spec.scale_range[1], size=n)
    if spec.distribution == "gamma":
        base = rng.gamma(shape) * scale
    elif spec.distribution == "lognormal":
        # match mean m = shape*scale, variance v = shape*scale^2
        sigma2 = np.log1p(1.0 / shape)
        mu = np.log(shape * scale) - 0.5 * sigma2
        base = rng.lognormal(mu, np.sqrt(sigma2))
    elif spec.distribution == "normal":
        base = rng.normal(shape * scale, np.sqrt(shape) * scale)
    else:  # laplace
        base = rng.laplace(shape * scale, np.sqrt(shape / 2.0) * scale)
    eta = spec.strength * base
    return float(eta[0]) if size is None else eta


def _path_rngs(seed: int, omega: int):
    root = np.random.SeedSequence(entropy=seed, spawn_key=(omega,))
    diff_ss, count_ss, eta_ss = root.spawn(3)
    return (np.random.default_rng(diff_ss),
            np.random.default_rng(count_ss),
            np.random.default_rng(eta_ss))


def simulate_paths(
    scenario: Scenario,
    schedule: InvestmentSchedule,
    n_paths: int | None = None,
    seed: int | None = None,
) -> DemandPathSet:
    """Simulate OD demand over t_0..t_T under the GBM-with-jumps dynamics.

    Per period (dt = 1) each OD entry ij moves by the exact GBM update
    exp((mu_i - sigma_i^2/2) + sigma_i * Z) with Z independent per entry,
    then by prod_events (1 + eta * f(I_t)) where the Poisson event count is
    shared across row i (region-specific jump process) and eta is resampled
    per event.  Stationary spillovers use f = 1, nonstationary f = I_t / N.
    """
    if schedule.horizon != scenario.horizon:
        raise ValueError("schedule horizon does not match scenario horizon")
    n_paths = scenario.n_paths if n_paths is None else n_paths
    seed = scenario.seed if seed is None else seed
    calib = scenario.calib
    n = scenario.n_regions
    horizon = scenario.horizon
    spec = scenario.spillover

    if spec.stationary:
        f_state = np.ones(horizon + 1)
    else:
        f_state = schedule.coverage / n

    drift = (calib.mu - 0.5 * calib.sigma**2)[:, None]
    sig = calib.sigma[:, None]

    out = np.empty((n_paths, horizon + 1, n, n))
    floored = 0
    for omega in range(n_paths):
        rng_diff, rng_count, rng_eta = _path_rngs(seed, omega)
        z = rng_diff.standard_normal((horizon, n, n))
        counts = rng_count.poisson(lam=calib.lam, size=(horizon, n))
        cur = calib.q0.copy()
        out[omega, 0] = cur
        for t in range(horizon):
            cur = cur * np.exp(drift + sig * z[t])
            f_t = f_state[t]
            for i in range(n):
                c = counts[t, i]
                if c == 0:
                    continue
                eta = sample_spillover(spec, rng_eta, size=int(c))
                mult = np.prod(1.0 + eta * f_t)
                cur[i] *= mult
            neg = cur < 0.0
            if neg.any():
                floored += int(neg.sum())
                cur[neg] = 0.0
            out[omega, t + 1] = cur
    return DemandPathSet(values=out, seed=seed, schedule=schedule, floored=floored)
