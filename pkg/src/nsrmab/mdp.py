"""Finite discounted single-arm MDP machinery.

Kernels are arrays of shape ``(S, 2, S)`` indexed as ``kernel[s, a, s_next]``
and rewards are arrays of shape ``(S, 2)`` indexed as ``rewards[s, a]``.
Action 1 is "activate" and pays the Lagrange cost ``lam``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_ATOL = 1e-9
ACTION_COST = np.array([0.0, 1.0])


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def check_kernel(kernel, atol: float = ROW_SUM_ATOL) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 3 or kernel.shape[1] != 2 or kernel.shape[0] != kernel.shape[2]:
        raise ValueError(f"kernel must have shape (S, 2, S), got {kernel.shape}")
    if kernel.shape[0] < 1:
        raise ValueError("state space must be non-empty")
    if np.any(kernel < -atol) or np.any(kernel > 1 + atol) or not np.all(np.isfinite(kernel)):
        raise ValueError("kernel entries must lie in [0, 1]")
    sums = kernel.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > atol):
        s, a = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        raise ValueError(f"kernel row ({s}, {a}) sums to {sums[s, a]!r}, not 1")
    return kernel


def check_rewards(rewards, n_states: int) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != (n_states, 2):
        raise ValueError(f"rewards must have shape ({n_states}, 2), got {rewards.shape}")
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    return rewards


def check_gamma(gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount factor must lie in [0, 1), got {gamma}")
    return float(gamma)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ValueFunctions:
    """State values ``V``, action values ``Q`` and the (lam, gamma) they solve."""

    V: np.ndarray
    Q: np.ndarray
    lam: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "V", _frozen(self.V))
        object.__setattr__(self, "Q", _frozen(self.Q))

    @classmethod
    def zeros(cls, n_states: int, lam: float = 0.0, gamma: float = 0.0) -> "ValueFunctions":
        return cls(np.zeros(n_states), np.zeros((n_states, 2)), lam, gamma)

    @property
    def gap(self) -> np.ndarray:
        """Advantage of activating, ``Q(s, 1) - Q(s, 0)``."""
        return self.Q[:, 1] - self.Q[:, 0]

    def greedy_policy(self) -> np.ndarray:
        # exact ties go to the passive action
        return (self.Q[:, 1] > self.Q[:, 0]).astype(int)


def q_from_values(V, kernel, rewards, lam, gamma) -> np.ndarray:
    return rewards - lam * ACTION_COST + gamma * (kernel @ V)


def bellman_backup(prev, kernel, rewards, lam: float, gamma: float) -> ValueFunctions:
    """One application of the Bellman optimality operator.

    ``prev`` may be a :class:`ValueFunctions` or a plain value vector.
    """
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    if lam < 0:
        raise ValueError(f"activation cost must be nonnegative, got {lam}")
    V_prev = prev.V if isinstance(prev, ValueFunctions) else np.asarray(prev, dtype=float)
    Q = q_from_values(V_prev, kernel, rewards, lam, gamma)
    return ValueFunctions(Q.max(axis=1), Q, lam, gamma)


def stopping_threshold(tol: float, gamma: float) -> float:
    if gamma == 0.0:
        return np.inf
    return tol * (1.0 - gamma) / (2.0 * gamma)


def value_iteration(
    kernel,
    rewards,
    lam: float,
    gamma: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    V0=None,
) -> ValueFunctions:
    """Iterate Bellman backups until the sup-norm change drops below
    ``tol * (1 - gamma) / (2 * gamma)``, which puts V within ``tol`` of the
    fixpoint.

    Negative ``lam`` (an activation subsidy) is accepted here because index
    searches probe below zero.
    """
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    if tol <= 0:
        raise ValueError("tol must be positive")
    threshold = stopping_threshold(tol, gamma)
    V = np.zeros(kernel.shape[0]) if V0 is None else np.array(V0, dtype=float)
    shifted = rewards - lam * ACTION_COST
    prev_residual = np.inf
    residual = np.inf
    for _ in range(max_iter):
        Q = shifted + gamma * (kernel @ V)
        V_new = Q.max(axis=1)
        residual = float(np.max(np.abs(V_new - V)))
        # contraction: each residual shrinks by at least gamma
        slack = 1e-12 * max(1.0, float(np.max(np.abs(V_new))))
        assert residual <= gamma * prev_residual + slack, (residual, prev_residual)
        prev_residual = residual
        V = V_new
        if residual <= threshold:
            return ValueFunctions(V, Q, lam, gamma)
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations", residual)


def evaluate_stationary(policy, kernel, rewards, lam: float, gamma: float) -> np.ndarray:
    """Exact infinite-horizon discounted value of a stationary policy."""
    n = kernel.shape[0]
    states = np.arange(n)
    P = kernel[states, policy]
    r = rewards[states, policy] - lam * policy
    return np.linalg.solve(np.eye(n) - gamma * P, r)


def policy_iteration(
    kernel,
    rewards,
    lam: float,
    gamma: float,
    policy0=None,
    max_iter: int = 1_000,
    validate: bool = True,
) -> ValueFunctions:
    """Howard policy iteration; returns the exact Bellman fixpoint.

    The incumbent action is kept on exact ties so the loop cannot cycle.
    """
    if validate:
        kernel = check_kernel(kernel)
        rewards = check_rewards(rewards, kernel.shape[0])
        gamma = check_gamma(gamma)
    n = kernel.shape[0]
    states = np.arange(n)
    policy = np.zeros(n, dtype=int) if policy0 is None else np.asarray(policy0, dtype=int).copy()
    shifted = rewards - lam * ACTION_COST
    for _ in range(max_iter):
        V = evaluate_stationary(policy, kernel, rewards, lam, gamma)
        Q = shifted + gamma * (kernel @ V)
        scale = 1e-12 * max(1.0, float(np.max(np.abs(Q))))
        better = Q[states, 1 - policy] > Q[states, policy] + scale
        if not better.any():
            V = Q.max(axis=1)
            return ValueFunctions(V, Q, lam, gamma)
        policy = np.where(better, 1 - policy, policy)
    raise ConvergenceError(f"policy iteration did not converge in {max_iter} iterations", np.nan)


def solve(kernel, rewards, lam: float, gamma: float, method: str = "policy_iteration", **kwargs) -> ValueFunctions:
    if method == "policy_iteration":
        return policy_iteration(kernel, rewards, lam, gamma, **kwargs)
    if method == "value_iteration":
        return value_iteration(kernel, rewards, lam, gamma, **kwargs)
    raise ValueError(f"unknown solver {method!r}")


def policy_evaluation(policy, kernel, rewards, lam: float, gamma: float, horizon: int, start: int) -> float:
    """Expected discounted H-step return of a fixed policy from ``start``.

    Computed exactly by propagating the state distribution forward.
    """
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    n = kernel.shape[0]
    policy = np.asarray(policy, dtype=int)
    if policy.shape != (n,) or np.any((policy != 0) & (policy != 1)):
        raise ValueError("policy must assign action 0 or 1 to every state")
    if not 0 <= start < n:
        raise ValueError(f"start state {start} outside 0..{n - 1}")
    states = np.arange(n)
    P = kernel[states, policy]
    r = rewards[states, policy] - lam * policy
    dist = np.zeros(n)
    dist[start] = 1.0
    total = 0.0
    weight = 1.0
    for _ in range(horizon):
        total += weight * float(dist @ r)
        dist = dist @ P
        weight *= gamma
    return total
