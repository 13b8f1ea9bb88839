"""Real-option valuation of investment sequences.

The engine simulates one common set of demand paths per (scenario, sequence,
seed), derives per-portfolio incremental-demand state variables, and runs a
dual backward recursion over time and portfolio order.  Continuation values
and next-portfolio values are estimated by least-squares regression on a
probabilists' Hermite basis of the standardized state variable; exercise
updates per-path stopping times, which are repaired forward to keep
successive portfolios at strictly increasing times.

Conventions: portfolios are indexed h = 0..H-1 in sequence order; the time
grid is t = 0..T.  Portfolio h may be exercised at any t <= e_h where
e_h = T - (H - 1 - h), so the last portfolio can wait until T and each
predecessor expires one period earlier.  Terminal values at e_h compound the
discounted value of the remaining chain, so the value of the first portfolio
at t_0 prices the whole sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermevander

from .demand import DemandPathSet, InvestmentSchedule, simulate_paths
from .errors import DataError
from .scenario import CostModel, Scenario
from .sequences import InvestmentSequence, validate_for_valuation


def f_time(t_n: float, horizon: int, f_end: float) -> float:
    """Time-scaling of costs: (f_end)^(t_n/T).  f_end = 1 keeps costs static."""
    if not f_end > 0:
        raise ValueError("f_end must be > 0")
    if horizon <= 0:  # degenerate single-epoch grid
        return 1.0
    return float(f_end) ** (t_n / horizon)


def new_link_count(z_size: int, covered_after: int) -> int:
    """Inter-region links created by adding a portfolio of z_size regions to a
    network that afterwards covers covered_after regions."""
    if not 1 <= z_size <= covered_after:
        raise ValueError("need 1 <= z_size <= covered_after")
    return z_size * (2 * covered_after - z_size - 1) // 2


def immediate_payoff(
    x,
    z_size: int,
    covered_after: int,
    costs: CostModel,
    t_n: int = 0,
    horizon: int = 1,
    covered_before: int | None = None,
):
    """Incremental demand minus the service threshold (the option strike).

    The threshold is z_size * c_intra(t) + new_link_count * c_inter(t), with
    c_intra(t) = c_intra * f_time(t) and c_inter(t) scaled additionally by
    1 / (1 + zeta * covered_before).  May be negative.
    """
    if covered_before is None:
        covered_before = covered_after - z_size
    ft = f_time(t_n, horizon, costs.f_end)
    links = new_link_count(z_size, covered_after)
    threshold = (
        z_size * costs.c_intra * ft
        + links * costs.c_inter * ft / (1.0 + costs.zeta * covered_before)
    )
    return x - threshold


def hermite_basis(j: int, x):
    """Probabilists' Hermite polynomial He_j evaluated at x."""
    coef = np.zeros(j + 1)
    coef[j] = 1.0
    return np.polynomial.hermite_e.hermeval(x, coef)


@dataclass
class LsmcFit:
    """Regression fit of discounted future values on Hermite basis functions
    of the standardized state variable."""

    beta: np.ndarray
    mean: float
    std: float
    degenerate: bool = False
    basis: str = "hermite-e"

    def predict(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.degenerate:
            return np.full(xs.shape, self.beta[0])
        z = (xs - self.mean) / self.std
        return hermevander(z, len(self.beta) - 1) @ self.beta


def lsmc_fit(xs, ys, n_basis: int, fit_mask: np.ndarray | None = None) -> LsmcFit:
    """Least-squares fit of ys on He_0..He_{U-1} of standardized xs.

    Standardization statistics come from the full cross-section; fit_mask
    optionally restricts the regression sample (in-the-money fitting).  A
    degenerate design (zero spread, too few points, or non-finite solution)
    falls back to a constant fit at the sample mean.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if n_basis < 1:
        raise ValueError("n_basis must be >= 1")
    if fit_mask is not None and fit_mask.sum() >= max(n_basis, 2):
        x_fit, y_fit = xs[fit_mask], ys[fit_mask]
    else:
        x_fit, y_fit = xs, ys

    mean = float(xs.mean())
    std = float(xs.std())
    if not np.isfinite(std) or std <= 0.0 or len(x_fit) < n_basis:
        return LsmcFit(beta=np.array([float(y_fit.mean())]), mean=mean, std=1.0,
                       degenerate=True)
    design = hermevander((x_fit - mean) / std, n_basis - 1)
    beta, *_ = np.linalg.lstsq(design, y_fit, rcond=None)
    if not np.all(np.isfinite(beta)):
        return LsmcFit(beta=np.array([float(y_fit.mean())]), mean=mean, std=1.0,
                       degenerate=True)
    return LsmcFit(beta=beta, mean=mean, std=std)


def state_variables(paths: DemandPathSet, seq, h: int, t_n: int) -> np.ndarray:
    """Per-path incremental demand of portfolio h (0-based) at time t_n:
    the covered-demand sum through portfolio h minus the sum through h-1,
    counting each covered intra-region demand once and each ordered covered
    OD pair once."""
    return incremental_demand(paths, seq)[h, t_n]


def incremental_demand(paths: DemandPathSet, seq) -> np.ndarray:
    """State-variable tensor of shape (H, T+1, n_paths)."""
    n = paths.values.shape[2]
    h_len = len(seq)
    cum_sums = np.empty((h_len + 1, paths.values.shape[1], paths.n_paths))
    cum_sums[0] = 0.0
    covered = np.zeros(n, dtype=bool)
    for h, portfolio in enumerate(seq):
        covered = covered.copy()
        covered[list(portfolio)] = True
        mask = np.outer(covered, covered).astype(float)
        cum_sums[h + 1] = np.tensordot(paths.values, mask, axes=([2, 3], [0, 1])).T
    return cum_sums[1:] - cum_sums[:-1]


@dataclass
class RoaResult:
    """Output of one sequence valuation."""

    option_value: float
    stopping_times: np.ndarray      # (n_paths, H) period indices
    n_paths: int
    seed: int
    sequence: InvestmentSequence
    value_surface: dict | None = None
    degenerate_fits: int = 0

    @property
    def mean_stop_times(self) -> np.ndarray:
        return self.stopping_times.mean(axis=0)

    def region_stop_times(self, n_regions: int) -> np.ndarray:
        """Per-path, per-region stopping times, NaN for uncovered regions."""
        out = np.full((self.stopping_times.shape[0], n_regions), np.nan)
        for h, portfolio in enumerate(self.sequence):
            for region in portfolio:
                out[:, region] = self.stopping_times[:, h]
        return out


def sequence_thresholds(seq, costs: CostModel, horizon: int) -> np.ndarray:
    """Service-threshold matrix (H, T+1) for a sequence under the cost model."""
    h_len = len(seq)
    thresholds = np.empty((h_len, horizon + 1))
    covered_before = 0
    for h, portfolio in enumerate(seq):
        z_size = len(portfolio)
        covered_after = covered_before + z_size
        links = new_link_count(z_size, covered_after)
        for t in range(horizon + 1):
            ft = f_time(t, horizon, costs.f_end)
            thresholds[h, t] = (
                z_size * costs.c_intra * ft
                + links * costs.c_inter * ft / (1.0 + costs.zeta * covered_before)
            )
        covered_before = covered_after
    return thresholds


def simulate_for_sequence(
    scenario: Scenario, seq, seed: int | None = None, n_paths: int | None = None
) -> DemandPathSet:
    """Simulate the common path set for valuing seq: the spillover state I_t
    follows the earliest-admissible schedule (portfolio h invested at period
    h), a deterministic proxy that breaks the timing/demand circularity."""
    schedule = InvestmentSchedule.earliest(seq, scenario.n_regions, scenario.horizon)
    return simulate_paths(scenario, schedule, n_paths=n_paths, seed=seed)


def roa_evaluate(
    scenario: Scenario,
    seq,
    seed: int | None = None,
    n_paths: int | None = None,
    paths: DemandPathSet | None = None,
    regress_itm: bool = False,
    diagnostics: bool = False,
) -> RoaResult:
    """Value an investment sequence by the dual backward recursion.

    Walks t = T-1 .. 0 and h = H-1 .. 0.  At each step the continuation value
    of portfolio h and the value of the successor portfolio are estimated by
    discounted LSMC regression on the time-t state variables; exercise happens
    when immediate payoff plus successor value meets or beats continuation
    (ties exercise).  Non-exercised paths carry their value back with
    one-period discounting.  The sequence value is the path average of the
    first portfolio's value at t_0.
    """
    seq = validate_for_valuation(seq, scenario.n_regions, scenario.k, scenario.horizon)
    if not seq:
        raise DataError("cannot value an empty sequence")
    seed = scenario.seed if seed is None else seed
    if paths is None:
        paths = simulate_for_sequence(scenario, seq, seed=seed, n_paths=n_paths)
    n_omega = paths.n_paths
    if n_omega < 2:
        raise DataError("valuation needs at least 2 Monte Carlo paths")

    horizon = scenario.horizon
    h_len = len(seq)
    disc = 1.0 / (1.0 + scenario.rho)
    n_basis = scenario.n_basis

    x = incremental_demand(paths, seq)                       # (H, T+1, omega)
    thresholds = sequence_thresholds(seq, scenario.costs, horizon)
    payoff = x - thresholds[:, :, None]                      # (H, T+1, omega)
    expiry = np.array([horizon - (h_len - 1 - h) for h in range(h_len)])

    value = np.empty((h_len, n_omega))
    tau = np.empty((h_len, n_omega), dtype=np.int64)
    for h in range(h_len - 1, -1, -1):
        value[h] = payoff[h, expiry[h]]
        if h < h_len - 1:
            value[h] += disc * value[h + 1]
        tau[h] = expiry[h]

    surface_mean = np.full((h_len, horizon + 1), np.nan) if diagnostics else None
    exercise_frac = np.full((h_len, horizon + 1), np.nan) if diagnostics else None
    if diagnostics:
        for h in range(h_len):
            surface_mean[h, expiry[h]] = value[h].mean()

    degenerate_fits = 0
    for t in range(horizon - 1, -1, -1):
        value_next = value.copy()                            # values as of t+1
        cont: list[np.ndarray | None] = [None] * h_len
        for h in range(h_len - 1, -1, -1):
            if t >= expiry[h]:
                continue
            pi_ht = payoff[h, t]
            fit = lsmc_fit(
                x[h, t], disc * value_next[h], n_basis,
                fit_mask=(pi_ht > 0.0) if regress_itm else None,
            )
            degenerate_fits += fit.degenerate
            cont[h] = fit.predict(x[h, t])
            phi_next = cont[h + 1] if h + 1 < h_len else 0.0
            eligible = t <= tau[h]
            exercise = eligible & (pi_ht + phi_next >= cont[h])
            value[h] = np.where(exercise, pi_ht + phi_next, disc * value_next[h])
            tau[h, exercise] = t
            for m in range(h + 1, h_len):
                tau[m, exercise] = np.maximum(tau[m, exercise], tau[m - 1, exercise] + 1)
            if diagnostics:
                surface_mean[h, t] = value[h].mean()
                exercise_frac[h, t] = exercise.mean()

    # Forward sweep so pending (never exercised) predecessors push successors
    # as the in-recursion repair does for exercised ones.
    for m in range(1, h_len):
        tau[m] = np.maximum(tau[m], tau[m - 1] + 1)

    assert np.all(tau <= expiry[:, None]), "stopping time beyond admissible window"

    surface = None
    if diagnostics:
        surface = {"mean_value": surface_mean, "exercise_frac": exercise_frac}
    return RoaResult(
        option_value=float(value[0].mean()),
        stopping_times=tau.T.copy(),
        n_paths=n_omega,
        seed=paths.seed,
        sequence=seq,
        value_surface=surface,
        degenerate_fits=degenerate_fits,
    )


class RoaEvaluator:
    """Sequence valuer with a demand-path cache.

    Stationary spillovers make paths independent of the investment schedule,
    so one simulation per seed serves every candidate sequence (common random
    numbers across sequences).  Nonstationary runs key the cache by the
    earliest-admissible schedule signature.
    """

    def __init__(self, scenario: Scenario, n_paths: int | None = None,
                 regress_itm: bool = False):
        self.scenario = scenario
        self.n_paths = scenario.n_paths if n_paths is None else n_paths
        self.regress_itm = regress_itm
        self._path_cache: dict[tuple, DemandPathSet] = {}

    def paths_for(self, seq, seed: int) -> DemandPathSet:
        schedule = InvestmentSchedule.earliest(seq, self.scenario.n_regions,
                                               self.scenario.horizon)
        if self.scenario.spillover.stationary:
            key = (seed,)
        else:
            key = (seed,) + schedule.signature()
        paths = self._path_cache.get(key)
        if paths is None:
            paths = simulate_paths(self.scenario, schedule,
                                   n_paths=self.n_paths, seed=seed)
            self._path_cache[key] = paths
        return paths

    def evaluate(self, seq, seed: int | None = None,
                 diagnostics: bool = False) -> RoaResult:
        seed = self.scenario.seed if seed is None else seed
        seq = validate_for_valuation(seq, self.scenario.n_regions,
                                     self.scenario.k, self.scenario.horizon)
        return roa_evaluate(
            self.scenario, seq, seed=seed, paths=self.paths_for(seq, seed),
            regress_itm=self.regress_itm, diagnostics=diagnostics,
        )

    def clear_cache(self):
        self._path_cache.clear()
