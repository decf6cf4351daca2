"""Episode simulation shared by every policy, plus seeded random streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

# leading element of every stream key
ENV_STREAM, TRANSITION_STREAM, DECISION_STREAM = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def policy_code(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def transition_uniforms(seed: int, policy: str, episode: int, n_arms: int, horizon: int) -> np.ndarray:
    """Uniform draws driving the state transitions, shape ``(n_arms, horizon)``.

    Each (policy, episode, arm) has its own stream, so adding a policy or an
    arm never shifts another one's draws.
    """
    code = policy_code(policy)
    return np.stack([
        stream(seed, TRANSITION_STREAM, code, episode, arm).random(horizon)
        for arm in range(n_arms)
    ])


def decision_rng(seed: int, policy: str, episode: int) -> np.random.Generator:
    return stream(seed, DECISION_STREAM, policy_code(policy), episode)


class Policy:
    """Harness contract: pick at most ``budget`` arms per slot and learn from
    observed transitions."""

    name = "policy"

    def __init__(self, n_arms: int, budget: int):
        if not 1 <= budget <= n_arms:
            raise ValueError(f"need 1 <= M <= N, got M={budget}, N={n_arms}")
        self.n_arms = n_arms
        self.budget = budget

    def begin_episode(self, episode: int, rng: np.random.Generator | None = None) -> None:
        pass

    def select(self, states: np.ndarray, slot: int) -> np.ndarray:
        """Arms to activate in this slot."""
        raise NotImplementedError

    def observe(self, states, actions, next_states, rewards) -> None:
        pass

    def end_episode(self, trace: "EpisodeTrace") -> None:
        pass

    def index_values(self, states) -> np.ndarray | None:
        return None


def top_m(scores, m: int) -> np.ndarray:
    """Indices of the ``m`` largest scores; ties go to the lowest index."""
    return np.argsort(-np.asarray(scores), kind="stable")[:m]


@dataclass
class EpisodeTrace:
    episode: int
    states: np.ndarray      # (H + 1, N); row h is the state at decision slot h
    actions: np.ndarray     # (H, N)
    rewards: np.ndarray     # (H, N)
    indices: np.ndarray     # (H, N); nan when the policy has no index
    lam: float = np.nan     # activation cost the policy used this episode

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def discounted_reward(self, gamma: float) -> float:
        weights = gamma ** np.arange(self.horizon)
        return float(weights @ self.rewards.sum(axis=1))


def sample_next(rows: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of one next state per row."""
    cdf = np.cumsum(rows, axis=1)
    nxt = (cdf <= uniforms[:, None]).sum(axis=1)
    return np.minimum(nxt, rows.shape[1] - 1)


def run_episode(policy: Policy, kernels: np.ndarray, rewards: np.ndarray, start_states,
                uniforms: np.ndarray, episode: int, rng: np.random.Generator | None = None) -> EpisodeTrace:
    """Run one episode of ``H = uniforms.shape[1]`` slots against the true
    per-arm ``kernels`` of shape ``(N, S, 2, S)``."""
    n_arms, horizon = uniforms.shape
    arms = np.arange(n_arms)
    states = np.array(start_states, dtype=int)
    all_states = np.empty((horizon + 1, n_arms), dtype=int)
    actions = np.zeros((horizon, n_arms), dtype=int)
    paid = np.empty((horizon, n_arms))
    indices = np.full((horizon, n_arms), np.nan)
    policy.begin_episode(episode, rng)
    for h in range(horizon):
        all_states[h] = states
        chosen = np.asarray(policy.select(states, h), dtype=int)
        if chosen.size > policy.budget or len(set(chosen.tolist())) != chosen.size:
            raise RuntimeError(f"{policy.name} activated {chosen.tolist()} with budget {policy.budget}")
        a = np.zeros(n_arms, dtype=int)
        a[chosen] = 1
        idx = policy.index_values(states)
        if idx is not None:
            indices[h] = idx
        r = rewards[arms, states, a]
        nxt = sample_next(kernels[arms, states, a], uniforms[:, h])
        policy.observe(states, a, nxt, r)
        actions[h] = a
        paid[h] = r
        states = nxt
    all_states[horizon] = states
    trace = EpisodeTrace(episode, all_states, actions, paid, indices)
    policy.end_episode(trace)
    return trace
