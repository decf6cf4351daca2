"""Indexability probing and Whittle index computation."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .mdp import (
    ACTION_COST,
    check_gamma,
    check_kernel,
    check_rewards,
    policy_iteration,
    value_iteration,
)

log = logging.getLogger(__name__)

DEFAULT_SEARCH_TOL = 1e-4
GAP_ATOL = 1e-9


class BracketError(ValueError):
    """The activation advantage does not change sign on the search interval."""

    def __init__(self, state: int, lo: float, hi: float, gap_lo: float, gap_hi: float):
        super().__init__(
            f"state {state}: Q(s,1)-Q(s,0) is {gap_lo:.6g} at lambda={lo:.6g} and "
            f"{gap_hi:.6g} at lambda={hi:.6g}; no sign change to bracket"
        )
        self.state = state
        self.gap_lo = gap_lo
        self.gap_hi = gap_hi


def default_lambda_max(rewards, gamma: float) -> float:
    """Bound on |Q(s,1) - Q(s,0) + lam| over all lam: reward span / (1 - gamma)."""
    rewards = np.asarray(rewards, dtype=float)
    span = float(rewards.max() - rewards.min())
    return max(span, 1e-12) / (1.0 - gamma)


def _gap(kernel, rewards, lam, gamma, method, tol) -> np.ndarray:
    if method == "value_iteration":
        vf = value_iteration(kernel, rewards, lam, gamma, tol=tol)
    else:
        vf = policy_iteration(kernel, rewards, lam, gamma, validate=False)
    return vf.gap


def activate_set(kernel, rewards, lam: float, gamma: float, tol: float = 1e-8,
                 atol: float = GAP_ATOL, method: str = "value_iteration") -> frozenset[int]:
    """States where activating is strictly better at activation cost ``lam``."""
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    gap = _gap(kernel, rewards, lam, gamma, method, tol)
    return frozenset(int(s) for s in np.flatnonzero(gap > atol))


@dataclass(frozen=True)
class IndexabilityReport:
    indexable: bool
    lambda_grid: tuple[float, ...]
    active_sets: tuple[frozenset[int], ...]

    @property
    def active_set_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.active_sets)

    # historical name; these are the sizes of the activate sets
    passive_set_sizes = active_set_sizes


def indexability_probe(kernel, rewards, gamma: float, lambda_grid, **kwargs) -> IndexabilityReport:
    grid = tuple(float(x) for x in lambda_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    if grid and grid[0] < 0:
        raise ValueError("lambda grid must be nonnegative")
    sets = tuple(activate_set(kernel, rewards, lam, gamma, **kwargs) for lam in grid)
    nested = all(later <= earlier for earlier, later in zip(sets, sets[1:]))
    return IndexabilityReport(nested, grid, sets)


def whittle_index(
    kernel,
    rewards,
    gamma: float,
    state: int,
    search_tol: float = DEFAULT_SEARCH_TOL,
    lambda_max: float | None = None,
    lambda_min: float = 0.0,
    method: str = "policy_iteration",
    atol: float = GAP_ATOL,
) -> float:
    """Bisection for the smallest activation cost at which passivity is optimal.

    Returns ``inf{lam in [lambda_min, lambda_max] : Q(s,1) - Q(s,0) <= 0}``
    to within ``search_tol``.
    """
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    if search_tol <= 0:
        raise ValueError("search_tol must be positive")
    if lambda_max is None:
        lambda_max = default_lambda_max(rewards, gamma)
    lo, hi = float(lambda_min), float(lambda_max)
    vi_tol = min(1e-8, search_tol * 1e-3)
    gap_lo = _gap(kernel, rewards, lo, gamma, method, vi_tol)[state]
    gap_hi = _gap(kernel, rewards, hi, gamma, method, vi_tol)[state]
    if gap_lo <= atol:
        if abs(gap_lo) <= atol:
            return lo
        raise BracketError(state, lo, hi, gap_lo, gap_hi)
    if gap_hi > atol:
        raise BracketError(state, lo, hi, gap_lo, gap_hi)
    while hi - lo > search_tol:
        mid = 0.5 * (lo + hi)
        if _gap(kernel, rewards, mid, gamma, method, vi_tol)[state] > atol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class NotIndexableError(RuntimeError):
    pass


def _sweep(kernel, rewards, gamma) -> np.ndarray:
    """Exact indices of an indexable arm by following the optimal policy as
    the activation cost rises.

    Between consecutive indices the optimal policy is fixed, so
    ``Q(s,1) - Q(s,0) = num_s - lam * den_s`` is affine in ``lam``; the next
    index is the smallest root among currently active states.
    """
    n = kernel.shape[0]
    states = np.arange(n)
    active = np.ones(n, dtype=bool)
    index = np.full(n, np.nan)
    dP = kernel[:, 1, :] - kernel[:, 0, :]
    dr = rewards[:, 1] - rewards[:, 0]
    eye = np.eye(n)
    lam = -np.inf
    scale = default_lambda_max(rewards, gamma)
    tol = 1e-9 * max(1.0, scale)
    while active.any():
        policy = active.astype(int)
        rhs = np.stack([rewards[states, policy], policy.astype(float)], axis=1)
        sol = np.linalg.solve(eye - gamma * kernel[states, policy], rhs)
        num = dr + gamma * dP @ sol[:, 0]
        den = 1.0 + gamma * dP @ sol[:, 1]
        if np.isfinite(lam) and np.any(~active & (num - lam * den > tol)):
            raise NotIndexableError("a passive state re-enters the active set")
        with np.errstate(divide="ignore", invalid="ignore"):
            roots = np.where(den > 0, num / den, np.inf)
        roots = np.where(active, roots, np.inf)
        nxt = float(roots.min())
        if not np.isfinite(nxt):
            raise NotIndexableError("no active state leaves as the cost rises")
        nxt = max(nxt, lam)
        leaving = active & (roots <= nxt + tol)
        index[leaving] = nxt
        active &= ~leaving
        lam = nxt
    return index


def whittle_indices(
    kernel,
    rewards,
    gamma: float,
    method: str = "sweep",
    search_tol: float = DEFAULT_SEARCH_TOL,
) -> np.ndarray:
    """Whittle index of every state.

    ``method="sweep"`` is exact for indexable arms and falls back to
    bisection (with a floor of ``-lambda_max``) if indexability fails.
    """
    kernel = check_kernel(kernel)
    rewards = check_rewards(rewards, kernel.shape[0])
    gamma = check_gamma(gamma)
    if method == "sweep":
        try:
            return _sweep(kernel, rewards, gamma)
        except (NotIndexableError, np.linalg.LinAlgError) as exc:
            log.debug("index sweep failed (%s); falling back to bisection", exc)
    elif method != "bisection":
        raise ValueError(f"unknown index method {method!r}")
    bound = default_lambda_max(rewards, gamma)
    return np.array([
        whittle_index(kernel, rewards, gamma, s, search_tol, bound, -bound)
        for s in range(kernel.shape[0])
    ])


def kernel_fingerprint(kernel) -> str:
    return hashlib.sha1(np.ascontiguousarray(kernel, dtype=float).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class WhittleIndexTable:
    values: np.ndarray
    kernel_id: str

    @classmethod
    def compute(cls, kernel, rewards, gamma: float, method: str = "sweep") -> "WhittleIndexTable":
        values = np.array(whittle_indices(kernel, rewards, gamma, method=method))
        values.setflags(write=False)
        return cls(values, kernel_fingerprint(kernel))

    def __getitem__(self, state):
        return self.values[state]


def aoi_reward(sigma2: float, ages) -> np.ndarray:
    """Mutual information carried by an update of the given age."""
    ages = np.asarray(ages, dtype=float)
    return -np.log2(1.0 - sigma2 ** ages) / 2.0


def aoi_closed_form_index(
    q: float,
    sigma2: float,
    state: int,
    gamma: float | None = None,
    cap: int | None = None,
    series_tol: float = 1e-15,
) -> float:
    """Closed-form Whittle index of an AoI arm at age ``state``.

    Threshold policies (activate once the age reaches ``h``) are optimal, so
    the index of age ``h`` is the cost at which thresholds ``h`` and ``h+1``
    tie. With ``gamma=None`` this is the average-reward index,

        W(h) = q * A(h) - q**2 * L(h) * B(h+1),
        B(m) = sum_j (1-q)**j r(m+j),  A(h) = sum_{k<h} r(k) + B(h),
        L(h) = h - 1 + 1/q,

    the gamma -> 1 limit of the discounted index. Passing ``gamma`` gives the
    exact discounted counterpart. Ages above ``cap`` are held at ``cap``,
    matching a truncated chain with a self-loop at the cap.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"success probability must lie in (0, 1], got {q}")
    if not 0.0 < sigma2 < 1.0:
        raise ValueError(f"sigma2 must lie in (0, 1), got {sigma2}")
    if int(state) != state or state < 1:
        raise ValueError(f"age must be a positive integer, got {state}")
    if cap is not None and not 1 <= state <= cap:
        raise ValueError(f"age {state} outside 1..{cap}")
    if gamma is not None:
        check_gamma(gamma)
    h = int(state)
    decay = (1.0 - q) * (1.0 if gamma is None else gamma)

    n_terms = 1
    if decay > 0:
        n_terms = int(np.ceil(np.log(series_tol) / np.log(decay))) + 1
    def tail(m: int) -> float:
        ages = m + np.arange(n_terms)
        if cap is not None:
            ages = np.minimum(ages, cap)
        return float(np.sum(decay ** np.arange(n_terms) * aoi_reward(sigma2, ages)))

    head_ages = np.arange(1, h)
    if gamma is None:
        head = float(np.sum(aoi_reward(sigma2, head_ages)))
        return q * (head + tail(h)) - q * q * (h - 1 + 1.0 / q) * tail(h + 1)
    head = float(np.sum(gamma ** (head_ages - 1) * aoi_reward(sigma2, head_ages)))
    renew = 1.0 - decay
    c = 1.0 / renew
    return gamma * q * (head + gamma ** (h - 1) * tail(h)
                        - (1.0 - gamma ** h * q * c) * tail(h + 1) * renew / (1.0 - gamma))
