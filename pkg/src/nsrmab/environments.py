"""Ground-truth non-stationary arm families: the one-dimensional chain and
the age-of-information (AoI) wireless source."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .learning.counts import DRIFTING, KNOWN, STATIONARY, PriorKnowledge
from .simulation import ENV_STREAM, stream
from .whittle import aoi_reward


@dataclass(frozen=True)
class DriftProcess:
    """Bounded random walk: +epsilon w.p. ``up_prob``, else -epsilon."""

    epsilon: float
    current: float
    up_prob: float = 0.7
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.up_prob <= 1.0:
            raise ValueError("up_prob must be a probability")
        if not self.lo <= self.current <= self.hi:
            raise ValueError(f"drift value {self.current} outside [{self.lo}, {self.hi}]")
        if self.epsilon < 0:
            raise ValueError("drift step must be nonnegative")


def advance_drift(proc: DriftProcess, rng: np.random.Generator) -> DriftProcess:
    step = proc.epsilon if rng.random() < proc.up_prob else -proc.epsilon
    return replace(proc, current=min(max(proc.current + step, proc.lo), proc.hi))


def drift_path(proc: DriftProcess, n_episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Parameter values for episodes 1..T, starting from ``proc.current``."""
    values = np.empty(n_episodes)
    for t in range(n_episodes):
        values[t] = proc.current
        proc = advance_drift(proc, rng)
    return values


def one_dim_kernel(K: int, p: float, q: float) -> np.ndarray:
    """Birth-death chain on 0..K-1: activation moves up w.p. ``q``, rest
    moves down w.p. ``p``; otherwise the state stays put."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("p and q must be probabilities")
    states = np.arange(K)
    P = np.zeros((K, 2, K))
    np.add.at(P, (states, 0, np.maximum(states - 1, 0)), p)
    np.add.at(P, (states, 0, states), 1 - p)
    np.add.at(P, (states, 1, np.minimum(states + 1, K - 1)), q)
    np.add.at(P, (states, 1, states), 1 - q)
    return P


def aoi_kernel(K: int, q: float) -> np.ndarray:
    """AoI chain with ages 1..K stored at indices 0..K-1.

    Resting ages by one; a transmission resets the age to 1 w.p. ``q``.
    Age K is absorbing apart from resets.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must be a probability")
    idx = np.arange(K)
    older = np.minimum(idx + 1, K - 1)
    P = np.zeros((K, 2, K))
    P[idx, 0, older] = 1.0
    np.add.at(P, (idx, 1, np.zeros(K, dtype=int)), q)
    np.add.at(P, (idx, 1, older), 1 - q)
    return P


def _initial(value) -> float:
    return value.current if isinstance(value, DriftProcess) else float(value)


@dataclass(frozen=True)
class OneDimArmSpec:
    """``p`` (passive down-move) and ``q`` (active up-move) are either fixed
    numbers (stationary) or drift processes (non-stationary)."""

    K: int = 10
    p: float | DriftProcess = 0.5
    q: float | DriftProcess = 0.5
    known: bool = False

    family = "onedim"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need K >= 2")
        for v in (self.p, self.q):
            if not 0 <= _initial(v) <= 1:
                raise ValueError("p and q must lie in [0, 1]")

    @property
    def drifting(self) -> bool:
        return isinstance(self.p, DriftProcess) or isinstance(self.q, DriftProcess)

    def kernel(self, p: float, q: float) -> np.ndarray:
        return one_dim_kernel(self.K, p, q)

    def rewards(self) -> np.ndarray:
        r = np.arange(self.K, dtype=float)
        return np.stack([r, r], axis=1)

    def value_order(self) -> np.ndarray:
        return np.arange(self.K)[::-1]

    def support(self) -> np.ndarray:
        return one_dim_kernel(self.K, 0.5, 0.5) > 0

    def row_kinds(self) -> np.ndarray:
        if self.known:
            return np.full((self.K, 2), KNOWN, dtype=np.int8)
        kind = np.empty((self.K, 2), dtype=np.int8)
        kind[:, 0] = DRIFTING if isinstance(self.p, DriftProcess) else STATIONARY
        kind[:, 1] = DRIFTING if isinstance(self.q, DriftProcess) else STATIONARY
        return kind

    def step_size(self) -> float:
        return max((v.epsilon for v in (self.p, self.q) if isinstance(v, DriftProcess)), default=0.0)


@dataclass(frozen=True)
class AoiArmSpec:
    K: int = 50
    q: float | DriftProcess = 1.0
    sigma2: float = 0.9
    known: bool = False

    family = "aoi"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need K >= 2")
        if not 0 <= _initial(self.q) <= 1:
            raise ValueError("q must lie in [0, 1]")
        if not 0 < self.sigma2 < 1:
            raise ValueError("sigma2 must lie in (0, 1)")

    @property
    def drifting(self) -> bool:
        return isinstance(self.q, DriftProcess)

    def kernel(self, p: float, q: float) -> np.ndarray:
        return aoi_kernel(self.K, q)

    def rewards(self) -> np.ndarray:
        r = aoi_reward(self.sigma2, np.arange(1, self.K + 1))
        return np.stack([r, r], axis=1)

    def value_order(self) -> np.ndarray:
        return np.arange(self.K)

    def support(self) -> np.ndarray:
        return aoi_kernel(self.K, 0.5) > 0

    def row_kinds(self) -> np.ndarray:
        if self.known:
            return np.full((self.K, 2), KNOWN, dtype=np.int8)
        kind = np.full((self.K, 2), STATIONARY, dtype=np.int8)
        if self.drifting:
            kind[:, 1] = DRIFTING
        return kind

    def step_size(self) -> float:
        return self.q.epsilon if isinstance(self.q, DriftProcess) else 0.0


def arm_prior(spec, first_kernel: np.ndarray) -> PriorKnowledge:
    """Learner-side knowledge of an arm. The drift bound handed to the
    learner is the row-level L1 bound: moving one parameter by ``eps``
    shifts two entries of a row, so it is ``2 * eps``."""
    kind = spec.row_kinds()
    zeros = ~spec.support()
    known = first_kernel if spec.known else None
    return PriorKnowledge(kind, zeros, 2.0 * spec.step_size(), known)


@dataclass(frozen=True, eq=False)
class EnvironmentTruth:
    """Pre-sampled ground truth for every arm and episode.

    ``params[t - 1, n]`` holds ``(p, q)`` of arm ``n`` in episode ``t``
    (``p`` is unused by AoI arms).
    """

    specs: tuple
    params: np.ndarray
    priors: tuple
    start_states: np.ndarray
    rewards: np.ndarray = field(init=False)

    def __post_init__(self):
        params = np.array(self.params, dtype=float)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "rewards", np.stack([s.rewards() for s in self.specs]))
        self.rewards.setflags(write=False)

    @property
    def n_arms(self) -> int:
        return len(self.specs)

    @property
    def n_episodes(self) -> int:
        return self.params.shape[0]

    @property
    def n_states(self) -> int:
        return self.rewards.shape[1]

    @property
    def family(self) -> str:
        return self.specs[0].family

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([p.epsilon for p in self.priors])

    def value_orders(self) -> list[np.ndarray]:
        return [s.value_order() for s in self.specs]

    def kernel(self, episode: int, arm: int) -> np.ndarray:
        if not 1 <= episode <= self.n_episodes:
            raise ValueError(f"episode {episode} outside 1..{self.n_episodes}")
        p, q = self.params[episode - 1, arm]
        return self.specs[arm].kernel(p, q)

    def kernels(self, episode: int) -> np.ndarray:
        return np.stack([self.kernel(episode, n) for n in range(self.n_arms)])

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.params.tobytes())
        h.update(repr(self.specs).encode())
        return h.hexdigest()

    def max_drift(self, arm: int) -> float:
        """Largest row-wise L1 change between consecutive episodes."""
        worst = 0.0
        prev = self.kernel(1, arm)
        for t in range(2, self.n_episodes + 1):
            cur = self.kernel(t, arm)
            worst = max(worst, float(np.abs(cur - prev).sum(axis=2).max()))
            prev = cur
        return worst


FAMILY_DEFAULTS = {
    "onedim": dict(K=10, epsilon=0.05, up_prob=0.7, drift_start=0.5, drift_q=0.5,
                   known_p=0.5, known_q=1.0, start_state=0),
    "aoi": dict(K=50, epsilon=0.05, up_prob=0.7, drift_start=0.1, stationary_q=1.0,
                sigma2=0.9, start_state=1),
}


def family_specs(family: str, n_arms: int, mix: float = 0.5, **params):
    """Arm specs for the two evaluation families. The first
    ``round(mix * N)`` arms drift; the rest are stationary."""
    if family not in FAMILY_DEFAULTS:
        raise ValueError(f"unknown environment family {family!r}")
    unknown = set(params) - set(FAMILY_DEFAULTS[family])
    if unknown:
        raise ValueError(f"unknown {family} parameters: {sorted(unknown)}")
    if n_arms < 1 or not 0 <= mix <= 1:
        raise ValueError("need N >= 1 and mix in [0, 1]")
    cfg = {**FAMILY_DEFAULTS[family], **params}
    n_drift = int(round(mix * n_arms))
    walk = DriftProcess(cfg["epsilon"], cfg["drift_start"], cfg["up_prob"])
    specs = []
    for n in range(n_arms):
        drifting = n < n_drift
        if family == "onedim":
            spec = (OneDimArmSpec(cfg["K"], walk, cfg["drift_q"]) if drifting
                    else OneDimArmSpec(cfg["K"], cfg["known_p"], cfg["known_q"], known=True))
        else:
            spec = AoiArmSpec(cfg["K"], walk if drifting else cfg["stationary_q"], cfg["sigma2"])
        specs.append(spec)
    return specs, cfg


def build_environment(family: str, n_arms: int, n_episodes: int, seed: int, mix: float = 0.5,
                      **params) -> EnvironmentTruth:
    """Sample every arm's parameter path for all ``n_episodes`` up front.

    Arms of the same class share one parameter path, so drifting arms see
    identical kernels in each episode.
    """
    specs, cfg = family_specs(family, n_arms, mix, **params)
    rng = stream(seed, ENV_STREAM)
    paths: dict[DriftProcess, np.ndarray] = {}
    params_arr = np.empty((n_episodes, n_arms, 2))
    for n, spec in enumerate(specs):
        pq = (spec.p, spec.q) if family == "onedim" else (0.0, spec.q)
        for j, value in enumerate(pq):
            if isinstance(value, DriftProcess):
                if value not in paths:
                    paths[value] = drift_path(value, n_episodes, rng)
                params_arr[:, n, j] = paths[value]
            else:
                params_arr[:, n, j] = value
    start = cfg["start_state"] - (1 if family == "aoi" else 0)
    if not 0 <= start < specs[0].K:
        raise ValueError(f"start state {cfg['start_state']} outside the state space")
    priors = tuple(arm_prior(spec, spec.kernel(*params_arr[0, n])) for n, spec in enumerate(specs))
    truth = EnvironmentTruth(tuple(specs), params_arr, priors, np.full(n_arms, start, dtype=int))
    for n in range(n_arms):
        kernel = truth.kernel(1, n)
        assert not np.any(kernel[priors[n].zeros] > 0), "kernel violates declared zeros"
        assert truth.max_drift(n) <= priors[n].epsilon + 1e-12, "drift exceeds declared bound"
    return truth
