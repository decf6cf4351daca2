"""Sliding-window optimistic Whittle index policy."""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..simulation import EpisodeTrace, Policy, run_episode, top_m
from ..whittle import kernel_fingerprint, whittle_indices
from .ball import build_ball, monotone_optimistic_kernel, optimistic_kernel
from .counts import DRIFTING, STATIONARY, PriorKnowledge, WindowedCounts, record_transition


class IndexPolicy(Policy):
    """Activates the ``budget`` arms whose current-state index is largest.

    Subclasses fill ``self.tables`` (shape ``(N, S)``) in ``begin_episode``.
    """

    name = "index"

    def __init__(self, n_arms: int, budget: int, gamma: float, cache_size: int = 256):
        super().__init__(n_arms, budget)
        self.gamma = gamma
        self.tables: np.ndarray | None = None
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache_size = cache_size

    def index_table(self, kernel, rewards) -> np.ndarray:
        key = kernel_fingerprint(kernel) + kernel_fingerprint(rewards)
        table = self._cache.get(key)
        if table is None:
            table = whittle_indices(kernel, rewards, self.gamma)
            self._cache[key] = table
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(key)
        return table

    def index_values(self, states) -> np.ndarray:
        return self.tables[np.arange(self.n_arms), states]

    def select(self, states, slot):
        return top_m(self.index_values(states), self.budget)


@dataclass(frozen=True)
class LearnerConfig:
    n_arms: int
    budget: int
    horizon: int
    n_episodes: int
    gamma: float = 0.99
    eta1: float = 0.05
    eta2: float = 0.05
    windows: Sequence[int] = field(default_factory=tuple)
    lambda_init: float = 0.0
    optimizer: str = "auto"

    def __post_init__(self):
        if not 1 <= self.budget <= self.n_arms:
            raise ValueError("need 1 <= M <= N")
        if self.horizon < 1 or self.n_episodes < 1:
            raise ValueError("H and T must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("eta1 and eta2 must be positive")
        windows = tuple(int(w) for w in self.windows) or (self.n_episodes,) * self.n_arms
        if len(windows) != self.n_arms or min(windows) < 1:
            raise ValueError("need one positive window per arm")
        object.__setattr__(self, "windows", windows)
        if self.optimizer not in ("auto", "extended", "monotone"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class SlidingWindowWhittle(IndexPolicy):
    """Optimistic Whittle index learner with per-row window routing.

    Each episode: build the confidence ball of every arm, pick the kernel in
    it with the largest value at the current activation cost, compute that
    kernel's Whittle indices, and play the top-``M`` arms by index. The
    activation cost for the next episode is the ``M``-th largest index at
    the last decision slot.
    """

    name = "ours"

    def __init__(self, config: LearnerConfig, priors: Sequence[PriorKnowledge], rewards,
                 value_orders: Sequence | None = None, name: str | None = None):
        super().__init__(config.n_arms, config.budget, config.gamma)
        if len(priors) != config.n_arms:
            raise ValueError("need one prior per arm")
        self.config = config
        self.priors = list(priors)
        self.rewards = np.asarray(rewards, dtype=float)
        self.value_orders = list(value_orders) if value_orders is not None else [None] * config.n_arms
        if config.optimizer == "monotone" and any(o is None for o in self.value_orders):
            raise ValueError("monotone optimizer needs a value ranking for every arm")
        if name is not None:
            self.name = name
        self.counts = [WindowedCounts(p.n_states, w) for p, w in zip(self.priors, config.windows)]
        self.lam = float(config.lambda_init)
        self.episode = 0
        self.optimistic: list[np.ndarray] = []

    def optimistic_kernels(self, episode: int) -> list[np.ndarray]:
        cfg = self.config
        kernels = []
        for n, (prior, counts) in enumerate(zip(self.priors, self.counts)):
            ball = build_ball(counts, prior, episode, cfg.n_episodes, cfg.n_arms, cfg.eta1, cfg.eta2)
            order = self.value_orders[n]
            if cfg.optimizer == "extended" or order is None:
                P, _ = optimistic_kernel(ball, self.rewards[n], self.lam, cfg.gamma)
            else:
                P, _ = monotone_optimistic_kernel(ball, self.rewards[n], self.lam, cfg.gamma, order)
            kernels.append(P)
        return kernels

    def begin_episode(self, episode, rng=None):
        if episode > self.config.n_episodes:
            raise ValueError(f"episode {episode} beyond T={self.config.n_episodes}")
        self.episode = episode
        self.optimistic = self.optimistic_kernels(episode)
        self.tables = np.stack([self.index_table(P, r) for P, r in zip(self.optimistic, self.rewards)])

    def record_transition(self, arm: int, s: int, a: int, s_next: int):
        record_transition(self.counts[arm], self.priors[arm], self.episode, s, a, s_next)

    def observe(self, states, actions, next_states, rewards):
        for n in range(self.n_arms):
            self.record_transition(n, int(states[n]), int(actions[n]), int(next_states[n]))

    def next_lambda(self, last_states) -> float:
        values = np.sort(self.index_values(np.asarray(last_states)))[::-1]
        return float(values[self.budget - 1])

    def end_episode(self, trace: EpisodeTrace):
        trace.lam = self.lam
        self.lam = self.next_lambda(trace.states[trace.horizon - 1])


def algorithm1_step(learner: SlidingWindowWhittle, kernels, start_states, uniforms,
                    episode: int | None = None) -> tuple[EpisodeTrace, SlidingWindowWhittle]:
    """Play one episode of the learner against the true ``kernels``."""
    episode = learner.episode + 1 if episode is None else episode
    trace = run_episode(learner, kernels, learner.rewards, start_states, uniforms, episode)
    return trace, learner


def stationary_ablation(prior: PriorKnowledge) -> PriorKnowledge:
    """Treat every learned or known row as a stationary unknown row."""
    kind = np.full_like(prior.kind, STATIONARY)
    return PriorKnowledge(kind, prior.zeros, 0.0, None)


def drifting_rows(prior: PriorKnowledge) -> int:
    return int((prior.kind == DRIFTING).sum())
