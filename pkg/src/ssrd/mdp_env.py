"""Finite-horizon MDP over investment portfolios with marginal option-value
rewards.

Transitions are deterministic: an action marks up to k uninvested regions as
the next portfolio (or skips the period).  The reward for appending a
portfolio is the change in the sequence option value, both prefixes valued
with the episode seed so rewards telescope exactly to the final sequence
value.  Demand uncertainty lives entirely inside the valuation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidActionError
from .scenario import Scenario
from .valuation import RoaEvaluator


@dataclass(frozen=True)
class MdpState:
    """Investment status, the partial sequence, and derived policy features."""

    invested: np.ndarray                 # (N,) 0/1
    partial_sequence: tuple[tuple[int, ...], ...]
    step_index: int
    node_features: np.ndarray            # (N, 4): [invested, nu, t_bar, q0_ii]
    global_features: np.ndarray          # (3,):   [t_bar, nu, q0 mean]

    def __post_init__(self):
        for name in ("invested", "node_features", "global_features"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name)))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class StepOutcome:
    next_state: MdpState
    reward: float
    done: bool


@dataclass(frozen=True)
class ActionMask:
    selectable: np.ndarray  # (N,) bool, uninvested regions
    min_size: int           # forced minimum portfolio size this step (0 = skip allowed)
    max_size: int


class SequencingEnv:
    """One environment instance per episode stream; strictly serial."""

    def __init__(self, scenario: Scenario, n_paths: int | None = None,
                 gamma: float = 1.0):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        self.scenario = scenario
        self.gamma = gamma
        self._n_paths = n_paths
        self._evaluator: RoaEvaluator | None = None
        self._episode_seed: int | None = None
        self._prefix_values: dict[tuple, float] = {}
        self._state: MdpState | None = None

    @property
    def n_regions(self) -> int:
        return self.scenario.n_regions

    @property
    def horizon(self) -> int:
        return self.scenario.horizon

    # -- state construction -------------------------------------------------

    def _make_state(self, invested: np.ndarray, seq, n: int) -> MdpState:
        q0_diag = np.diag(self.scenario.calib.q0)
        nu = invested.sum() / self.n_regions
        t_bar = n / self.horizon
        node = np.column_stack([
            invested.astype(float),
            np.full(self.n_regions, nu),
            np.full(self.n_regions, t_bar),
            q0_diag,
        ])
        glob = np.array([t_bar, nu, q0_diag.mean()])
        return MdpState(invested=invested.astype(np.int8), partial_sequence=tuple(seq),
                        step_index=n, node_features=node, global_features=glob)

    def reset(self, episode_seed: int) -> MdpState:
        self._episode_seed = int(episode_seed)
        self._evaluator = RoaEvaluator(self.scenario, n_paths=self._n_paths)
        self._prefix_values = {(): 0.0}
        self._state = self._make_state(np.zeros(self.n_regions, dtype=np.int8), (), 0)
        return self._state

    @property
    def state(self) -> MdpState:
        if self._state is None:
            raise RuntimeError("call reset() before interacting with the env")
        return self._state

    # -- masking ------------------------------------------------------------

    def action_mask(self, state: MdpState | None = None) -> ActionMask:
        state = self.state if state is None else state
        uninvested = state.invested == 0
        n_open = int(uninvested.sum())
        remaining_steps = self.horizon - state.step_index
        if n_open == 0 or remaining_steps <= 0:
            return ActionMask(np.zeros(self.n_regions, dtype=bool), 0, 0)
        # completion pressure: whatever is not invested now must still fit
        # into the steps after this one at k per step
        min_size = max(0, n_open - self.scenario.k * (remaining_steps - 1))
        max_size = min(self.scenario.k, n_open)
        return ActionMask(uninvested, min_size, max_size)

    # -- stepping -----------------------------------------------------------

    def _prefix_value(self, seq: tuple) -> float:
        value = self._prefix_values.get(seq)
        if value is None:
            result = self._evaluator.evaluate(seq, seed=self._episode_seed)
            value = result.option_value
            self._prefix_values[seq] = value
        return value

    def step(self, action) -> StepOutcome:
        state = self.state
        action = np.asarray(action)
        if action.shape != (self.n_regions,):
            raise InvalidActionError(
                f"action must have shape ({self.n_regions},), got {action.shape}")
        if not np.isin(action, (0, 1)).all():
            raise InvalidActionError("action entries must be 0 or 1")
        mask = self.action_mask(state)
        chosen = np.flatnonzero(action == 1)
        size = len(chosen)
        if size > mask.max_size:
            raise InvalidActionError(
                f"portfolio size {size} exceeds maximum {mask.max_size}")
        if size < mask.min_size:
            raise InvalidActionError(
                f"portfolio size {size} below forced minimum {mask.min_size} "
                "(completion pressure)")
        already = [int(i) for i in chosen if state.invested[i]]
        if already:
            raise InvalidActionError(f"region(s) {already} already invested")
        if state.step_index >= self.horizon:
            raise InvalidActionError("episode is already done")

        n_next = state.step_index + 1
        if size == 0:
            next_state = self._make_state(state.invested.copy(),
                                          state.partial_sequence, n_next)
            reward = 0.0
        else:
            portfolio = tuple(int(i) for i in chosen)
            seq_next = state.partial_sequence + (portfolio,)
            invested = state.invested.copy()
            invested[list(portfolio)] = 1
            next_state = self._make_state(invested, seq_next, n_next)
            reward = (self._prefix_value(seq_next)
                      - self._prefix_value(state.partial_sequence))
        done = bool(next_state.invested.all()) or n_next >= self.horizon
        self._state = next_state
        return StepOutcome(next_state=next_state, reward=reward, done=done)

    # -- convenience ---------------------------------------------------------

    def rollout(self, policy, episode_seed: int):
        """Run one episode; policy(state, mask, rng) -> action vector.
        Returns (sequence, rewards list)."""
        rng = np.random.default_rng(episode_seed)
        state = self.reset(episode_seed)
        rewards = []
        while True:
            outcome = self.step(policy(state, self.action_mask(state), rng))
            rewards.append(outcome.reward)
            state = outcome.next_state
            if outcome.done:
                return state.partial_sequence, rewards


def random_policy(state: MdpState, mask: ActionMask, rng: np.random.Generator):
    """Uniformly random feasible action (size first, then regions)."""
    n = len(mask.selectable)
    action = np.zeros(n, dtype=np.int64)
    if mask.max_size == 0:
        return action
    size = int(rng.integers(mask.min_size, mask.max_size + 1))
    if size:
        open_ids = np.flatnonzero(mask.selectable)
        action[rng.choice(open_ids, size=size, replace=False)] = 1
    return action
