"""Comparison policies: uniform random, tabular Q-learning (WIQL) and a
full-history optimistic Whittle learner (UCWhittle)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learning.learner import LearnerConfig, SlidingWindowWhittle, stationary_ablation
from .simulation import Policy, top_m


class RandomPolicy(Policy):
    """Activates a uniformly random ``M``-subset of arms every slot."""

    name = "random"

    def __init__(self, n_arms: int, budget: int, rng: np.random.Generator | None = None):
        super().__init__(n_arms, budget)
        self.rng = rng

    def begin_episode(self, episode, rng=None):
        if rng is not None:
            self.rng = rng
        if self.rng is None:
            raise ValueError("random policy needs a generator")

    def select(self, states, slot):
        return self.rng.choice(self.n_arms, size=self.budget, replace=False)


@dataclass(frozen=True)
class WiqlConstants:
    """Q-learning schedule.

    Step size is ``1 / (1 + visits(s, a))``; the exploration probability at
    cumulative slot ``h`` is ``explore_scale / (explore_scale + h)``, where
    ``explore_scale=None`` means ``N``.
    """

    gamma: float = 0.99
    explore_scale: float | None = None
    q_init: float = 0.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.explore_scale is not None and self.explore_scale <= 0:
            raise ValueError("explore_scale must be positive")


class WIQLPolicy(Policy):
    """Per-arm tabular Q-learning; exploit by the ``M`` largest Q(s,1) - Q(s,0)."""

    name = "wiql"

    def __init__(self, n_arms: int, budget: int, n_states: int, constants: WiqlConstants = WiqlConstants(),
                 rng: np.random.Generator | None = None):
        super().__init__(n_arms, budget)
        self.constants = constants
        self.Q = np.full((n_arms, n_states, 2), float(constants.q_init))
        self.visits = np.zeros((n_arms, n_states, 2), dtype=np.int64)
        self.slots = 0
        self.rng = rng
        scale = constants.explore_scale
        self.explore_scale = float(n_arms if scale is None else scale)

    def begin_episode(self, episode, rng=None):
        if rng is not None:
            self.rng = rng
        if self.rng is None:
            raise ValueError("WIQL needs a generator for exploration")

    def exploration_rate(self) -> float:
        return self.explore_scale / (self.explore_scale + self.slots)

    def index_values(self, states):
        arms = np.arange(self.n_arms)
        return self.Q[arms, states, 1] - self.Q[arms, states, 0]

    def select(self, states, slot):
        explore = self.rng.random() < self.exploration_rate()
        self.slots += 1
        if explore:
            return self.rng.choice(self.n_arms, size=self.budget, replace=False)
        return top_m(self.index_values(states), self.budget)

    def update(self, arm: int, s: int, a: int, r: float, s_next: int) -> float:
        """One Q-learning step; returns the new Q(s, a)."""
        alpha = 1.0 / (1.0 + self.visits[arm, s, a])
        target = r + self.constants.gamma * self.Q[arm, s_next].max()
        self.Q[arm, s, a] += alpha * (target - self.Q[arm, s, a])
        self.visits[arm, s, a] += 1
        return float(self.Q[arm, s, a])

    def observe(self, states, actions, next_states, rewards):
        for n in range(self.n_arms):
            self.update(n, int(states[n]), int(actions[n]), float(rewards[n]), int(next_states[n]))


def ucwhittle_policy(config: LearnerConfig, priors, rewards, value_orders=None) -> SlidingWindowWhittle:
    """Our learner with every row learned from full history, no drift term
    and no known rows. Structural zeros are kept."""
    full = LearnerConfig(config.n_arms, config.budget, config.horizon, config.n_episodes,
                         config.gamma, config.eta1, config.eta2, (config.n_episodes,) * config.n_arms,
                         config.lambda_init, config.optimizer)
    return SlidingWindowWhittle(full, [stationary_ablation(p) for p in priors], rewards,
                                value_orders, name="ucwhittle")


def random_policy(n_arms: int, budget: int, rng=None) -> RandomPolicy:
    return RandomPolicy(n_arms, budget, rng)


def wiql_policy(n_arms: int, budget: int, n_states: int, constants: WiqlConstants = WiqlConstants(),
                rng=None) -> WIQLPolicy:
    return WIQLPolicy(n_arms, budget, n_states, constants, rng)
