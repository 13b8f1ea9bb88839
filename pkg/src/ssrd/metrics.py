"""Deployment metrics: expected NPV, profitability, and the congestion-sensitive
realized-ridership equilibrium used in the NYC case study."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import DemandPathSet
from .scenario import CostModel
from .valuation import RoaResult, f_time, incremental_demand, sequence_thresholds

__all__ = [
    "DeploymentSchedule", "CongestionParams", "RidershipResult",
    "ProfitabilityResult", "expected_npv", "profitability",
    "realized_ridership", "congestion_transform", "f_time",
]


@dataclass(frozen=True)
class DeploymentSchedule:
    """Cumulative deployment: portfolio h is active from deploy time onward.

    deploy_times has shape (H,) for one common schedule or (n_paths, H) for
    per-path schedules derived from valuation stopping times.
    """

    portfolios: tuple[tuple[int, ...], ...]
    deploy_times: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.deploy_times, dtype=np.int64))
        arr.flags.writeable = False
        object.__setattr__(self, "deploy_times", arr)
        object.__setattr__(self, "portfolios",
                           tuple(tuple(int(r) for r in p) for p in self.portfolios))
        if self.deploy_times.shape[-1] != len(self.portfolios):
            raise ValueError("deploy_times last axis must match portfolio count")
        diffs = np.diff(self.deploy_times, axis=-1)
        if self.deploy_times.size and np.any(diffs < 1):
            raise ValueError("deployment times must be strictly increasing per path")

    @classmethod
    def earliest(cls, seq) -> "DeploymentSchedule":
        return cls(tuple(seq), np.arange(len(seq)))

    @classmethod
    def all_in(cls, n_regions: int) -> "DeploymentSchedule":
        return cls((tuple(range(n_regions)),), np.zeros(1, dtype=np.int64))

    @classmethod
    def from_roa(cls, result: RoaResult) -> "DeploymentSchedule":
        return cls(result.sequence, result.stopping_times)

    def active_mask(self, horizon: int, n_paths: int) -> np.ndarray:
        """Boolean (H, T+1, n_paths): portfolio deployed at or before t."""
        times = self.deploy_times
        if times.ndim == 1:
            times = np.broadcast_to(times, (n_paths, times.shape[0]))
        t_grid = np.arange(horizon + 1)
        # (H, T+1, n_paths)
        return times.T[:, None, :] <= t_grid[None, :, None]


def _payoffs(paths: DemandPathSet, schedule: DeploymentSchedule, costs: CostModel):
    horizon = paths.horizon
    x = incremental_demand(paths, schedule.portfolios)
    thresholds = sequence_thresholds(schedule.portfolios, costs, horizon)
    payoff = x - thresholds[:, :, None]
    active = schedule.active_mask(horizon, paths.n_paths)
    return x, payoff, active


def expected_npv(paths: DemandPathSet, schedule: DeploymentSchedule,
                 costs: CostModel, rho: float) -> float:
    """Mean discounted total payoff: deployed portfolios contribute their
    per-period payoff every period from deployment onward."""
    if not schedule.portfolios:
        return 0.0
    _, payoff, active = _payoffs(paths, schedule, costs)
    disc = (1.0 + rho) ** -np.arange(paths.horizon + 1)
    per_path = np.einsum("htw,htw,t->w", payoff, active.astype(float), disc)
    return float(per_path.mean())


@dataclass
class ProfitabilityResult:
    value: float
    zero_denominator_terms: int = 0

    def __float__(self):
        return self.value


def profitability(paths: DemandPathSet, schedule: DeploymentSchedule,
                  costs: CostModel, rho: float) -> ProfitabilityResult:
    """Mean over paths of the discounted payoff-to-ridership ratio sum.

    Periods with deployed coverage but zero covered demand contribute 0 and
    are counted; pre-deployment periods are naturally empty and uncounted.
    """
    if not schedule.portfolios:
        return ProfitabilityResult(0.0, 0)
    x, payoff, active = _payoffs(paths, schedule, costs)
    active_f = active.astype(float)
    num = np.einsum("htw,htw->tw", payoff, active_f)
    den = np.einsum("htw,htw->tw", x, active_f)
    any_active = active.any(axis=0)
    good = any_active & (den > 0.0)
    zero_terms = int((any_active & ~good).sum())
    ratio = np.zeros_like(num)
    np.divide(num, den, out=ratio, where=good)
    disc = (1.0 + rho) ** -np.arange(paths.horizon + 1)
    value = float((ratio * disc[:, None]).sum(axis=0).mean())
    return ProfitabilityResult(value, zero_terms)


@dataclass(frozen=True)
class CongestionParams:
    """Congestion-response parameters for realized ridership."""

    fare: float = 2.42            # EUR per trip
    delta: float = 0.005          # 1/EUR congestion sensitivity
    vot: float = 0.293 / 60.0     # EUR per minute
    speed: float = 19.31          # km/h
    wait_coefficient: float = 0.8
    tolerance: float = 1e-3
    max_iterations: int = 100

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RidershipResult:
    realized: np.ndarray
    wait_time: float
    converged: bool
    iterations: int


def realized_ridership(latent: np.ndarray, tt: np.ndarray,
                       params: CongestionParams) -> RidershipResult:
    """Fixed point of the congestion-sensitive demand response.

    realized = latent * exp(-delta * (fare + vot * (tt + wait))), with the
    endogenous wait time wait = c * (sum realized)^(1/3) * speed^(-2/3).
    Iterates from wait = 0 until successive wait changes fall below tolerance.
    """
    latent = np.asarray(latent, dtype=float)
    if np.any(latent < 0):
        raise ValueError("latent demand must be >= 0")
    speed_term = params.speed ** (-2.0 / 3.0)
    base_cost = params.fare + params.vot * np.asarray(tt, dtype=float)

    wait = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        realized = latent * np.exp(-params.delta * (base_cost + params.vot * wait))
        wait_new = params.wait_coefficient * realized.sum() ** (1.0 / 3.0) * speed_term
        if abs(wait_new - wait) < params.tolerance:
            wait = wait_new
            converged = True
            break
        wait = wait_new
    realized = latent * np.exp(-params.delta * (base_cost + params.vot * wait))
    return RidershipResult(realized=realized, wait_time=float(wait),
                           converged=converged, iterations=iterations)


def congestion_transform(paths: DemandPathSet, tt: np.ndarray,
                         params: CongestionParams) -> tuple[DemandPathSet, int]:
    """Apply the realized-ridership equilibrium to every (path, time) OD
    matrix.  Returns the transformed path set and the count of non-converged
    fixed points."""
    values = np.empty_like(paths.values)
    failures = 0
    for w in range(paths.n_paths):
        for t in range(paths.horizon + 1):
            res = realized_ridership(paths.values[w, t], tt, params)
            values[w, t] = res.realized
            failures += not res.converged
    transformed = DemandPathSet(values=values, seed=paths.seed,
                                schedule=paths.schedule, floored=paths.floored)
    return transformed, failures
