"""Confidence balls over transition kernels and optimistic kernel selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import (
    ACTION_COST,
    ConvergenceError,
    ValueFunctions,
    check_gamma,
    check_rewards,
    stopping_threshold,
)
from .counts import (
    PriorKnowledge,
    WindowedCounts,
    confidence_radii,
    empirical_kernel,
)


@dataclass(frozen=True, eq=False)
class ConfidenceBall:
    """Kernels within ``radius[s, a]`` (L1) of ``p_hat[s, a]`` row by row,
    with zero mass on ``zeros``."""

    p_hat: np.ndarray
    radius: np.ndarray
    zeros: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.radius < 0):
            raise ValueError("radii must be nonnegative")
        assert np.all(self.p_hat[self.zeros] == 0.0), "empirical kernel violates structural zeros"
        assert np.allclose(self.p_hat.sum(axis=2), 1.0, atol=1e-9)

    @property
    def n_states(self) -> int:
        return self.p_hat.shape[0]

    def distance(self, kernel) -> np.ndarray:
        return np.abs(np.asarray(kernel) - self.p_hat).sum(axis=2)

    def contains(self, kernel, atol: float = 1e-9) -> bool:
        kernel = np.asarray(kernel)
        if np.any(kernel[self.zeros] > atol):
            return False
        return bool(np.all(self.distance(kernel) <= self.radius + atol))

    def row_contains(self, kernel, atol: float = 1e-9) -> np.ndarray:
        kernel = np.asarray(kernel)
        zero_ok = ~np.any(self.zeros & (kernel > atol), axis=2)
        return zero_ok & (self.distance(kernel) <= self.radius + atol)


def build_ball(counts: WindowedCounts, prior: PriorKnowledge, episode: int, n_episodes: int,
               n_arms: int, eta1: float, eta2: float) -> ConfidenceBall:
    p_hat, denom = empirical_kernel(counts, prior, episode)
    radius = confidence_radii(counts, prior, episode, n_episodes, n_arms, eta1, eta2)
    return ConfidenceBall(p_hat, radius, prior.zeros, denom)


def transport(p_hat, radius, allowed, order) -> np.ndarray:
    """Most optimistic rows inside each L1 ball for a given value ranking.

    ``order`` lists states from highest to lowest value. For each row, mass
    on the best allowed state is raised by ``radius / 2`` (capped at 1) and
    the surplus is removed from the worst states first.
    """
    shape = p_hat.shape
    n = shape[-1]
    p = p_hat.reshape(-1, n)[:, order]
    ok = allowed.reshape(-1, n)[:, order]
    d = np.broadcast_to(radius, shape[:-1]).reshape(-1)
    rows = np.arange(p.shape[0])
    best = np.argmax(ok, axis=1)
    top = np.minimum(1.0, p[rows, best] + d / 2.0)
    surplus = top - p[rows, best]
    rest = p.copy()
    rest[rows, best] = 0.0
    # mass held strictly below each position, i.e. removed before reaching it
    below = np.cumsum(rest[:, ::-1], axis=1)[:, ::-1] - rest
    take = np.clip(surplus[:, None] - below, 0.0, rest)
    out = rest - take
    out[rows, best] = top
    result = np.empty_like(out)
    result[:, order] = out
    return result.reshape(shape)


def _ranking(V) -> np.ndarray:
    return np.argsort(-V, kind="stable")


def _evi(ball, rewards, lam, gamma, tol, max_iter, V0=None):
    n = ball.n_states
    allowed = ~ball.zeros
    shifted = rewards - lam * ACTION_COST
    V = np.zeros(n) if V0 is None else np.array(V0, dtype=float)
    threshold = stopping_threshold(tol, gamma)
    residual = np.inf
    for _ in range(max_iter):
        P = transport(ball.p_hat, ball.radius, allowed, _ranking(V))
        Q = shifted + gamma * (P @ V)
        V_new = Q.max(axis=1)
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if residual <= threshold:
            return P, V
    raise ConvergenceError(f"extended value iteration did not converge in {max_iter} iterations", residual)


def _evaluate(P, policy, shifted, gamma):
    n = P.shape[0]
    states = np.arange(n)
    return np.linalg.solve(np.eye(n) - gamma * P[states, policy], shifted[states, policy])


def _epi(ball, rewards, lam, gamma, max_iter, order=None):
    """Policy iteration on the optimistic MDP: alternate the best kernel for
    the current value ranking with exact evaluation of the greedy policy."""
    n = ball.n_states
    states = np.arange(n)
    allowed = ~ball.zeros
    shifted = rewards - lam * ACTION_COST
    P = ball.p_hat if order is None else transport(ball.p_hat, ball.radius, allowed, order)
    policy = np.zeros(n, dtype=int)
    V = _evaluate(P, policy, shifted, gamma)
    for _ in range(max_iter):
        P = transport(ball.p_hat, ball.radius, allowed, _ranking(V))
        Q = shifted + gamma * (P @ V)
        scale = 1e-12 * max(1.0, float(np.max(np.abs(Q))))
        better = Q[states, 1 - policy] > Q[states, policy] + scale
        policy = np.where(better, 1 - policy, policy)
        V_new = _evaluate(P, policy, shifted, gamma)
        if np.max(np.abs(V_new - V)) <= scale:
            return P, V_new
        V = V_new
    raise ConvergenceError(f"extended policy iteration did not converge in {max_iter} iterations", np.nan)


def optimistic_kernel(ball: ConfidenceBall, rewards, lam: float, gamma: float,
                      method: str = "policy_iteration", tol: float = 1e-8,
                      max_iter: int = 100_000):
    """Kernel in the ball whose Bellman fixpoint is largest at every state.

    ``method="value_iteration"`` runs extended value iteration: each backup
    first pushes each row's mass toward the highest-value states as far as
    the radius allows. ``method="policy_iteration"`` reaches the same
    fixpoint with exact policy evaluations between kernel updates.
    """
    gamma = check_gamma(gamma)
    rewards = check_rewards(rewards, ball.n_states)
    if method == "value_iteration":
        P, V = _evi(ball, rewards, lam, gamma, tol, max_iter)
    elif method == "policy_iteration":
        P, V = _epi(ball, rewards, lam, gamma, min(max_iter, 1_000))
    else:
        raise ValueError(f"unknown optimizer {method!r}")
    P = transport(ball.p_hat, ball.radius, ~ball.zeros, _ranking(V))
    Q = rewards - lam * ACTION_COST + gamma * (P @ V)
    return P, ValueFunctions(Q.max(axis=1), Q, lam, gamma)


def monotone_optimistic_kernel(ball: ConfidenceBall, rewards, lam: float, gamma: float,
                               order=None, verify: bool = True):
    """One-shot optimistic kernel for arms whose value ranking is known.

    ``order`` lists states from highest to lowest value (e.g. descending
    state for the one-dimensional chain, ascending age for AoI). The kernel
    is the fixed-ranking transport of the ball; if ``verify`` and the
    resulting values contradict the declared ranking, the general solver is
    used instead.
    """
    if order is None:
        raise ValueError("closed-form optimism needs a declared value ranking")
    gamma = check_gamma(gamma)
    rewards = check_rewards(rewards, ball.n_states)
    order = np.asarray(order)
    P = transport(ball.p_hat, ball.radius, ~ball.zeros, order)
    shifted = rewards - lam * ACTION_COST
    n = ball.n_states
    states = np.arange(n)
    policy = np.zeros(n, dtype=int)
    for _ in range(1_000):
        V = _evaluate(P, policy, shifted, gamma)
        Q = shifted + gamma * (P @ V)
        scale = 1e-12 * max(1.0, float(np.max(np.abs(Q))))
        better = Q[states, 1 - policy] > Q[states, policy] + scale
        if not better.any():
            break
        policy = np.where(better, 1 - policy, policy)
    else:
        raise ConvergenceError("policy iteration on the closed-form kernel did not converge", np.nan)
    V = Q.max(axis=1)
    if verify:
        ranked = V[order]
        if np.any(np.diff(ranked) > 1e-9 * max(1.0, float(np.max(np.abs(V))))):
            return optimistic_kernel(ball, rewards, lam, gamma)
    return P, ValueFunctions(V, Q, lam, gamma)
