"""Sequential service-region design toolkit.

Simulates nonstationary OD demand with investment-induced jump spillovers,
values capacity-constrained investment sequences as compound real options via
least-squares Monte Carlo, enumerates the feasible sequence space, and exposes
the sequencing problem as an MDP locally and over a line protocol.
"""

from .scenario import (
    CalibrationParams, CostModel, Region, Scenario, SpilloverSpec,
    build_scenario, calibrate, derive_costs, haversine_km, load_regions,
    load_scenario, parse_scenario, travel_time_matrix,
)
from .demand import DemandPathSet, InvestmentSchedule, sample_spillover, simulate_paths
from .sequences import (
    count_feasible, enumerate_feasible, format_sequence, is_feasible,
    myopia_sequence, parse_sequence, portfolio_count,
)
from .valuation import (
    LsmcFit, RoaEvaluator, RoaResult, f_time, hermite_basis, immediate_payoff,
    incremental_demand, lsmc_fit, new_link_count, roa_evaluate,
    simulate_for_sequence, state_variables,
)
from .metrics import (
    CongestionParams, DeploymentSchedule, ProfitabilityResult, RidershipResult,
    congestion_transform, expected_npv, profitability, realized_ridership,
)
from .mdp_env import ActionMask, MdpState, SequencingEnv, StepOutcome, random_policy
from .errors import DataError, InfeasibleError, InvalidActionError

__version__ = "0.1.0"
