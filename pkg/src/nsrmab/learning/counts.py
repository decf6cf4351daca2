"""Prior knowledge, sliding-window transition counts and confidence radii."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

# row kinds
KNOWN, STATIONARY, DRIFTING = 0, 1, 2

MAX_L1 = 2.0


class PriorKnowledgeViolation(RuntimeError):
    """An observed transition contradicts the declared structural zeros."""


@dataclass(frozen=True, eq=False)
class PriorKnowledge:
    """What the learner is told about one arm before any data arrives.

    ``kind[s, a]`` routes each row: ``STATIONARY`` rows are estimated from
    all history, ``DRIFTING`` rows from a sliding window, and ``KNOWN`` rows
    are taken from ``known_rows`` with zero radius. ``zeros[s, a, s']`` marks
    transitions that never happen.
    """

    kind: np.ndarray
    zeros: np.ndarray
    epsilon: float = 0.0
    known_rows: np.ndarray | None = None

    def __post_init__(self):
        kind = np.asarray(self.kind, dtype=np.int8)
        zeros = np.asarray(self.zeros, dtype=bool)
        n = kind.shape[0]
        if kind.shape != (n, 2) or zeros.shape != (n, 2, n):
            raise ValueError("kind must be (S, 2) and zeros (S, 2, S)")
        if not np.isin(kind, (KNOWN, STATIONARY, DRIFTING)).all():
            raise ValueError("unknown row kind")
        if zeros.all(axis=2).any():
            raise ValueError("every row needs at least one reachable next state")
        if self.epsilon < 0:
            raise ValueError("drift bound must be nonnegative")
        known = None
        if (kind == KNOWN).any():
            if self.known_rows is None:
                raise ValueError("known rows declared without values")
            known = np.array(self.known_rows, dtype=float)
            sel = kind == KNOWN
            if np.any(np.abs(known[sel].sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("known rows must be probability vectors")
            if np.any(known[sel][zeros[sel]] != 0.0):
                raise ValueError("known rows put mass on structural zeros")
            known.setflags(write=False)
        kind.setflags(write=False)
        zeros.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "known_rows", known)

    @classmethod
    def from_sets(
        cls,
        n_states: int,
        z1: Iterable[tuple[int, int]] = (),
        z2: Iterable[tuple[int, int]] = (),
        s0: Mapping[tuple[int, int], Iterable[int]] | None = None,
        epsilon: float = 0.0,
        known: Mapping[tuple[int, int], Iterable[float]] | None = None,
    ) -> "PriorKnowledge":
        """Build from explicit pair sets. Every (s, a) must appear in exactly
        one of ``z1``, ``z2`` or ``known``."""
        z1, z2 = set(z1), set(z2)
        known = dict(known or {})
        if z1 & z2 or z1 & known.keys() or z2 & known.keys():
            raise ValueError("z1, z2 and known rows must be disjoint")
        pairs = {(s, a) for s in range(n_states) for a in (0, 1)}
        missing = pairs - z1 - z2 - known.keys()
        if missing:
            raise ValueError(f"rows {sorted(missing)} are neither learned nor known")
        kind = np.empty((n_states, 2), dtype=np.int8)
        for s, a in z1:
            kind[s, a] = STATIONARY
        for s, a in z2:
            kind[s, a] = DRIFTING
        rows = np.zeros((n_states, 2, n_states))
        for (s, a), row in known.items():
            kind[s, a] = KNOWN
            rows[s, a] = np.asarray(list(row), dtype=float)
        zeros = np.zeros((n_states, 2, n_states), dtype=bool)
        for (s, a), targets in (s0 or {}).items():
            zeros[s, a, list(targets)] = True
        return cls(kind, zeros, epsilon, rows if known else None)

    @property
    def n_states(self) -> int:
        return self.kind.shape[0]

    @property
    def z1(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, np.argwhere(self.kind == STATIONARY).tolist()))

    @property
    def z2(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, np.argwhere(self.kind == DRIFTING).tolist()))

    @property
    def known(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, np.argwhere(self.kind == KNOWN).tolist()))

    def s0(self, s: int, a: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.zeros[s, a]).tolist())

    def allowed(self) -> np.ndarray:
        return ~self.zeros

    def with_kinds(self, kind, epsilon: float | None = None, keep_zeros: bool = True) -> "PriorKnowledge":
        zeros = self.zeros if keep_zeros else np.zeros_like(self.zeros)
        return PriorKnowledge(kind, zeros, self.epsilon if epsilon is None else epsilon,
                              self.known_rows)


@dataclass
class WindowedCounts:
    """Per-episode transition counts for drifting rows plus a running
    all-history table for stationary rows.

    Counts are indexed ``[s, a, s_next]``. The window for episode ``t``
    covers episodes ``t - window .. t - 1``.
    """

    n_states: int
    window: int
    episodes: dict[int, np.ndarray] = field(default_factory=dict)
    history: np.ndarray = None

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be a positive integer")
        if self.history is None:
            self.history = np.zeros((self.n_states, 2, self.n_states), dtype=np.int64)

    def _table(self, episode: int) -> np.ndarray:
        table = self.episodes.get(episode)
        if table is None:
            table = self.episodes[episode] = np.zeros((self.n_states, 2, self.n_states), dtype=np.int64)
            # keep the window plus the episode being recorded
            for old in [e for e in self.episodes if e < episode - self.window]:
                del self.episodes[old]
        return table

    def add(self, episode: int, s: int, a: int, s_next: int, drifting: bool, count: int = 1):
        if drifting:
            self._table(episode)[s, a, s_next] += count
        else:
            self.history[s, a, s_next] += count

    def windowed(self, episode: int) -> np.ndarray:
        total = np.zeros((self.n_states, 2, self.n_states), dtype=np.int64)
        for e, table in self.episodes.items():
            if episode - self.window <= e <= episode - 1:
                total += table
        return total

    def all_history(self) -> np.ndarray:
        return self.history.copy()


def record_transition(counts: WindowedCounts, prior: PriorKnowledge, episode: int,
                      s: int, a: int, s_next: int) -> WindowedCounts:
    """Route one observed transition to the window or the history table."""
    if prior.zeros[s, a, s_next]:
        raise PriorKnowledgeViolation(
            f"observed {s} -> {s_next} under action {a}, declared impossible")
    kind = prior.kind[s, a]
    if kind != KNOWN:
        counts.add(episode, s, a, s_next, drifting=kind == DRIFTING)
    return counts


def row_counts(counts: WindowedCounts, prior: PriorKnowledge, episode: int) -> np.ndarray:
    """Transition counts each row's estimate is built from, ``[s, a, s']``."""
    drifting = (prior.kind == DRIFTING)[:, :, None]
    return np.where(drifting, counts.windowed(episode), counts.history)


def empirical_kernel(counts: WindowedCounts, prior: PriorKnowledge, episode: int):
    """Empirical rows and their denominators ``max(total, 1)``.

    Rows without data default to uniform over the allowed next states.
    Known rows are returned verbatim.
    """
    if episode < 1:
        raise ValueError("episodes are numbered from 1")
    n = prior.n_states
    c = row_counts(counts, prior, episode).astype(float)
    totals = c.sum(axis=2)
    allowed = prior.allowed()
    uniform = allowed / allowed.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = np.where(totals[:, :, None] > 0, c / totals[:, :, None], uniform)
    if prior.known_rows is not None:
        p_hat = np.where((prior.kind == KNOWN)[:, :, None], prior.known_rows, p_hat)
    assert p_hat.shape == (n, 2, n)
    return p_hat, np.maximum(totals, 1.0)


def confidence_radii(counts: WindowedCounts, prior: PriorKnowledge, episode: int,
                     n_episodes: int, n_arms: int, eta1: float, eta2: float,
                     window: int | None = None) -> np.ndarray:
    """L1 radius per row, clipped to the simplex diameter 2.

    Stationary rows: sqrt(2|S| ln(2|Z1| N T / eta1) / C). Drifting rows add
    ``window * epsilon`` to the analogous term built with |Z2| and eta2.
    """
    if eta1 <= 0 or eta2 <= 0:
        raise ValueError("confidence levels must be positive")
    if n_episodes < 1:
        raise ValueError("number of episodes must be positive")
    window = counts.window if window is None else window
    _, denom = empirical_kernel(counts, prior, episode)
    n = prior.n_states
    radius = np.zeros((n, 2))
    for kind, size, eta, drift in (
        (STATIONARY, len(prior.z1), eta1, 0.0),
        (DRIFTING, len(prior.z2), eta2, window * prior.epsilon),
    ):
        sel = prior.kind == kind
        if sel.any():
            log_term = math.log(2 * size * n_arms * n_episodes / eta)
            radius[sel] = np.sqrt(2 * n * log_term / denom[sel]) + drift
    return np.minimum(radius, MAX_L1)


def select_window(n_episodes: int, k: float) -> int:
    """Window ``T**q`` with ``q = min(2k/3, 1)``, rounded and kept in [1, T]."""
    if n_episodes < 1:
        raise ValueError("number of episodes must be positive")
    if k <= 0:
        raise ValueError("drift exponent k must be positive; stationary arms need no window")
    q = min(2.0 * k / 3.0, 1.0)
    return int(min(max(round(n_episodes ** q), 1), n_episodes))


def drift_exponent(epsilon: float, n_episodes: int) -> float:
    """``k`` such that ``epsilon = T**(-k)``."""
    if not 0 < epsilon < 1 or n_episodes < 2:
        raise ValueError("need 0 < epsilon < 1 and T >= 2 to infer a drift exponent")
    return -math.log(epsilon) / math.log(n_episodes)
