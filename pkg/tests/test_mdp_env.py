import numpy as np
import pytest

import ssrd
from ssrd.errors import InvalidActionError
from ssrd.mdp_env import SequencingEnv, random_policy
from ssrd.sequences import enumerate_feasible, is_feasible
from ssrd.valuation import RoaEvaluator

from conftest import make_regions


@pytest.fixture()
def env(small_scenario):
    return SequencingEnv(small_scenario, n_paths=40)


def act(n, ids):
    a = np.zeros(n, dtype=np.int64)
    a[list(ids)] = 1
    return a


class TestReset:
    def test_initial_features(self, env):
        state = env.reset(7)
        assert state.step_index == 0
        assert np.all(state.invested == 0)
        assert state.global_features[0] == 0.0  # t_bar
        assert state.global_features[1] == 0.0  # nu
        assert state.node_features.shape == (4, 4)
        assert state.global_features.shape == (3,)

    def test_deterministic(self, env):
        a = env.reset(7)
        b = env.reset(7)
        assert np.array_equal(a.node_features, b.node_features)
        assert np.array_equal(a.global_features, b.global_features)

    def test_feature_widths_9_regions(self):
        from ssrd.datasets import build_named_scenario
        scen = build_named_scenario("beijing9", n_paths=20)
        env9 = SequencingEnv(scen, n_paths=20)
        state = env9.reset(1)
        assert state.node_features.shape == (9, 4)
        assert state.global_features.shape == (3,)


class TestMask:
    def test_fresh_state(self, env):
        env.reset(3)
        mask = env.action_mask()
        assert mask.selectable.all()
        assert mask.max_size == 2  # min(k=2, 4 open)
        assert mask.min_size == 0  # 4 regions, 5 periods: skip is safe

    def test_all_invested(self, env):
        env.reset(3)
        env.step(act(4, [0, 1]))
        env.step(act(4, [2, 3]))
        mask = env.action_mask()
        assert not mask.selectable.any()
        assert mask.max_size == 0

    def test_completion_pressure(self):
        # N=6, k=2, T=6, nothing invested, n=3: 3 steps left -> min size 2
        regions = make_regions([(10, 100)] * 6)
        scen = ssrd.build_scenario(regions, horizon=6, k=2, n_paths=4,
                                   demand_scale=0.01, name="press")
        env = SequencingEnv(scen, n_paths=4)
        env.reset(0)
        for _ in range(3):
            env.step(act(6, []))  # skip while pressure allows
        mask = env.action_mask()
        assert mask.min_size == 2
        with pytest.raises(InvalidActionError, match="completion pressure"):
            env.step(act(6, [0]))

    def test_skip_becomes_illegal_at_deadline(self):
        regions = make_regions([(10, 100)] * 2)
        scen = ssrd.build_scenario(regions, horizon=2, k=1, n_paths=4,
                                   demand_scale=0.01, name="dead")
        env = SequencingEnv(scen, n_paths=4)
        env.reset(0)
        mask = env.action_mask()
        assert mask.min_size == 1  # 2 regions, 2 steps at k=1: no slack
        with pytest.raises(InvalidActionError):
            env.step(act(2, []))


class TestStep:
    def test_skip_action(self, env):
        env.reset(5)
        outcome = env.step(act(4, []))
        assert outcome.reward == 0.0
        assert outcome.next_state.partial_sequence == ()
        assert outcome.next_state.step_index == 1
        assert not outcome.done

    def test_masked_region_rejected_without_state_change(self, env):
        env.reset(5)
        env.step(act(4, [1]))
        before = env.state
        with pytest.raises(InvalidActionError, match="already invested"):
            env.step(act(4, [1]))
        assert env.state is before

    def test_oversize_rejected(self, env):
        env.reset(5)
        with pytest.raises(InvalidActionError, match="exceeds maximum"):
            env.step(act(4, [0, 1, 2]))

    def test_bad_entries_rejected(self, env):
        env.reset(5)
        with pytest.raises(InvalidActionError):
            env.step(np.array([2, 0, 0, 0]))
        with pytest.raises(InvalidActionError):
            env.step(np.zeros(3, dtype=np.int64))

    def test_rewards_telescope_to_sequence_value(self, env):
        env.reset(9)
        total = 0.0
        for ids in ([2], [], [0, 1], [3]):
            outcome = env.step(act(4, ids))
            total += outcome.reward
        assert outcome.done
        seq = outcome.next_state.partial_sequence
        assert seq == ((2,), (0, 1), (3,))
        direct = RoaEvaluator(env.scenario, n_paths=40).evaluate(seq, seed=9)
        assert total == pytest.approx(direct.option_value, abs=1e-9)

    def test_prefix_cache_one_eval_per_prefix(self, env, monkeypatch):
        env.reset(4)
        calls = []
        orig = RoaEvaluator.evaluate

        def spy(self, seq, seed=None, diagnostics=False):
            calls.append(tuple(seq))
            return orig(self, seq, seed=seed, diagnostics=diagnostics)

        monkeypatch.setattr(RoaEvaluator, "evaluate", spy)
        env.step(act(4, [0]))
        env.step(act(4, [1]))
        env.step(act(4, [2, 3]))
        assert len(calls) == len(set(calls))

    def test_done_when_all_invested(self, env):
        env.reset(2)
        env.step(act(4, [0, 1]))
        outcome = env.step(act(4, [2, 3]))
        assert outcome.done
        assert outcome.next_state.step_index == 2


class TestEpisodes:
    def test_random_episodes_feasible_and_terminate(self, small_scenario):
        env = SequencingEnv(small_scenario, n_paths=30)
        for seed in range(8):
            seq, rewards = env.rollout(random_policy, seed)
            assert len(rewards) <= small_scenario.horizon
            assert is_feasible(seq, small_scenario.n_regions,
                               small_scenario.k, small_scenario.horizon)

    def test_determinism_same_actions_same_rewards(self, small_scenario):
        env_a = SequencingEnv(small_scenario, n_paths=30)
        env_b = SequencingEnv(small_scenario, n_paths=30)
        seq_a, rew_a = env_a.rollout(random_policy, 42)
        seq_b, rew_b = env_b.rollout(random_policy, 42)
        assert seq_a == seq_b
        assert rew_a == rew_b

    def test_greedy_bounded_by_enumeration_optimum(self, shanghai4):
        env = SequencingEnv(shanghai4, n_paths=80)
        seed = 13
        state = env.reset(seed)
        evaluator = env._evaluator
        # one-step-greedy policy using the env's own evaluator
        while True:
            mask = env.action_mask()
            best_act, best_r = None, -np.inf
            from itertools import combinations
            open_ids = list(np.flatnonzero(mask.selectable))
            sizes = range(max(mask.min_size, 1), mask.max_size + 1)
            for size in sizes:
                for ids in combinations(open_ids, size):
                    cand = state.partial_sequence + (tuple(int(i) for i in ids),)
                    value = evaluator.evaluate(cand, seed=seed).option_value
                    prev = evaluator.evaluate(state.partial_sequence, seed=seed).option_value if state.partial_sequence else 0.0
                    reward = value - prev
                    if reward > best_r:
                        best_r, best_act = reward, ids
            outcome = env.step(act(4, best_act))
            state = outcome.next_state
            if outcome.done:
                break
        greedy_value = evaluator.evaluate(state.partial_sequence, seed=seed).option_value
        optimum = max(evaluator.evaluate(seq, seed=seed).option_value
                      for seq in enumerate_feasible(4, 2, 5))
        assert greedy_value <= optimum + 1e-9
