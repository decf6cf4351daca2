import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsrmab.learning import (
    DRIFTING,
    KNOWN,
    STATIONARY,
    PriorKnowledge,
    PriorKnowledgeViolation,
    WindowedCounts,
    confidence_radii,
    drift_exponent,
    empirical_kernel,
    record_transition,
    select_window,
)
from oracles import recount


def all_drifting(n, epsilon=0.0, zeros=None):
    kind = np.full((n, 2), DRIFTING)
    zeros = np.zeros((n, 2, n), dtype=bool) if zeros is None else zeros
    return PriorKnowledge(kind, zeros, epsilon)


def all_stationary(n):
    return PriorKnowledge(np.full((n, 2), STATIONARY), np.zeros((n, 2, n), dtype=bool))


def test_record_twice_in_episode_one():
    counts, prior = WindowedCounts(2, 3), all_drifting(2)
    for _ in range(2):
        record_transition(counts, prior, 1, 0, 1, 1)
    assert counts.episodes[1][0, 1, 1] == 2
    assert counts.history.sum() == 0


def test_stationary_rows_go_to_history_only():
    counts, prior = WindowedCounts(2, 3), all_stationary(2)
    record_transition(counts, prior, 1, 0, 1, 1)
    assert counts.history[0, 1, 1] == 1
    assert counts.episodes == {}


def test_known_rows_are_not_counted():
    prior = PriorKnowledge(np.full((2, 2), KNOWN), np.zeros((2, 2, 2), bool), 0.0,
                           np.full((2, 2, 2), 0.5))
    counts = WindowedCounts(2, 3)
    record_transition(counts, prior, 1, 0, 0, 1)
    assert counts.history.sum() == 0 and counts.episodes == {}


def test_window_covers_previous_w_episodes():
    counts, prior = WindowedCounts(2, 2), all_drifting(2)
    for episode, n in ((1, 2), (2, 1), (3, 5)):
        for _ in range(n):
            record_transition(counts, prior, episode, 0, 0, 1)
    assert counts.windowed(4)[0, 0, 1] == 6


def test_ring_buffer_depth():
    counts, prior = WindowedCounts(2, 2), all_drifting(2)
    for episode in range(1, 10):
        record_transition(counts, prior, episode, 0, 0, 1)
    assert len(counts.episodes) <= 3  # window plus the episode being recorded


def test_structural_zero_violation_raises():
    zeros = np.zeros((2, 2, 2), dtype=bool)
    zeros[0, 0, 1] = True
    with pytest.raises(PriorKnowledgeViolation):
        record_transition(WindowedCounts(2, 1), all_drifting(2, zeros=zeros), 1, 0, 0, 1)


def test_empirical_row_frequencies():
    counts, prior = WindowedCounts(2, 5), all_drifting(2)
    for s2 in (1, 1, 1, 0):
        record_transition(counts, prior, 1, 0, 1, s2)
    p_hat, denom = empirical_kernel(counts, prior, 2)
    assert p_hat[0, 1].tolist() == [0.25, 0.75]
    assert denom[0, 1] == 4 and denom[1, 0] == 1


def test_unobserved_row_is_uniform_over_allowed():
    zeros = np.zeros((4, 2, 4), dtype=bool)
    zeros[2, 1, 3] = True
    p_hat, _ = empirical_kernel(WindowedCounts(4, 1), all_drifting(4, zeros=zeros), 1)
    np.testing.assert_allclose(p_hat[2, 1], [1 / 3, 1 / 3, 1 / 3, 0.0])
    assert p_hat[2, 1, 3] == 0.0


@settings(max_examples=60, deadline=None)
@given(
    window=st.integers(1, 6),
    stream=st.lists(st.tuples(st.integers(1, 12), st.integers(0, 2), st.integers(0, 1), st.integers(0, 2)),
                    max_size=80),
    query=st.integers(1, 14),
)
def test_window_recount_equivalence(window, stream, query):
    stream = sorted(stream, key=lambda x: x[0])
    stream = [x for x in stream if x[0] < query]
    counts, prior = WindowedCounts(3, window), all_drifting(3)
    for e, s, a, s2 in stream:
        record_transition(counts, prior, e, s, a, s2)
    expected = recount(stream, 3, query - window, query - 1)
    np.testing.assert_array_equal(counts.windowed(query), expected)
    totals = expected.sum(axis=2, keepdims=True)
    p_hat, _ = empirical_kernel(counts, prior, query)
    with np.errstate(invalid="ignore"):
        ref = np.where(totals > 0, expected / np.maximum(totals, 1), 1 / 3)
    np.testing.assert_array_equal(p_hat, ref)


def radius_example_setup(count=100):
    prior = PriorKnowledge.from_sets(2, z1=[(1, 0), (1, 1)], z2=[(0, 0), (0, 1)], epsilon=0.01)
    counts = WindowedCounts(2, 5)
    for _ in range(count):
        record_transition(counts, prior, 1, 0, 0, 1)
    return prior, counts


def test_drifting_radius_hand_arithmetic():
    prior, counts = radius_example_setup()
    radius = confidence_radii(counts, prior, 2, n_episodes=10, n_arms=1, eta1=0.5, eta2=0.1)
    by_hand = math.sqrt(4 * math.log(400) / 100) + 5 * 0.01
    assert radius[0, 0] == by_hand
    assert radius[0, 0] == pytest.approx(0.5397, abs=2e-4)


def test_stationary_radius_hand_arithmetic():
    prior = PriorKnowledge.from_sets(3, z1=[(s, a) for s in range(3) for a in (0, 1)])
    counts = WindowedCounts(3, 1)
    for _ in range(70):
        record_transition(counts, prior, 1, 2, 1, 0)
    radius = confidence_radii(counts, prior, 2, 20, 4, eta1=0.05, eta2=0.05)
    assert radius[2, 1] == math.sqrt(2 * 3 * math.log(2 * 6 * 4 * 20 / 0.05) / 70)
    assert radius[0, 0] == 2.0  # unobserved rows clip at the simplex diameter


def test_radius_vanishes_with_data_and_no_drift():
    prior = PriorKnowledge.from_sets(2, z2=[(s, a) for s in range(2) for a in (0, 1)])
    counts = WindowedCounts(2, 1)
    counts.add(1, 0, 0, 1, drifting=True, count=10**12)
    assert confidence_radii(counts, prior, 2, 10, 1, 0.1, 0.1)[0, 0] < 1e-4


@settings(max_examples=40, deadline=None)
@given(c=st.integers(0, 10**6), eps=st.floats(0, 1), w=st.integers(1, 100))
def test_radius_clipped_to_two(c, eps, w):
    prior = PriorKnowledge.from_sets(2, z2=[(s, a) for s in range(2) for a in (0, 1)], epsilon=eps)
    counts = WindowedCounts(2, w)
    if c:
        counts.add(1, 0, 0, 1, drifting=True, count=c)
    assert np.all(confidence_radii(counts, prior, 2, 10, 1, 0.1, 0.1) <= 2.0)


@settings(max_examples=40, deadline=None)
@given(c=st.integers(1, 5000), extra=st.integers(1, 5000), eps=st.floats(0, 0.01), w=st.integers(1, 20))
def test_radius_monotone(c, extra, eps, w):
    prior = PriorKnowledge.from_sets(2, z1=[(1, 0), (1, 1)], z2=[(0, 0), (0, 1)], epsilon=eps)

    def radii(count, window, epsilon=eps):
        counts = WindowedCounts(2, window)
        counts.add(1, 0, 0, 1, drifting=True, count=count)
        counts.add(1, 1, 0, 1, drifting=False, count=count)
        p = prior.with_kinds(prior.kind, epsilon=epsilon)
        return confidence_radii(counts, p, 2, 10, 1, 0.1, 0.1)

    base = radii(c, w)
    more = radii(c + extra, w)
    assert more[0, 0] <= base[0, 0] and more[1, 0] <= base[1, 0]
    assert radii(c, w + 1)[0, 0] >= base[0, 0]
    assert radii(c, w, eps + 0.01)[0, 0] >= base[0, 0]


def test_select_window_examples():
    assert select_window(10_000, 0.6) == 40
    assert select_window(50, 1.5) == 50
    assert select_window(50, 3.0) == 50
    assert select_window(1, 0.3) == 1
    with pytest.raises(ValueError):
        select_window(10, 0.0)


def test_drift_exponent_roundtrip():
    k = drift_exponent(0.1, 50)
    assert 50 ** -k == pytest.approx(0.1)


def test_prior_sets_roundtrip():
    prior = PriorKnowledge.from_sets(2, z1=[(0, 0), (0, 1)], z2=[(1, 1)], s0={(1, 1): [0]},
                                     known={(1, 0): [0.5, 0.5]})
    assert prior.z1 == {(0, 0), (0, 1)}
    assert prior.z2 == {(1, 1)}
    assert prior.known == {(1, 0)}
    assert prior.s0(1, 1) == {0}


@pytest.mark.parametrize("kwargs", [
    dict(z1=[(0, 0)], z2=[(0, 0), (0, 1), (1, 0), (1, 1)]),
    dict(z1=[(0, 0), (0, 1), (1, 0)]),
    dict(z1=[(0, 0), (0, 1), (1, 0), (1, 1)], s0={(0, 0): [0, 1]}),
])
def test_prior_rejects_inconsistent_sets(kwargs):
    with pytest.raises(ValueError):
        PriorKnowledge.from_sets(2, **kwargs)
