import math

import numpy as np
import pytest

from dispatch import (INFINITE_DELAY, DispatchError, PathScore, assign_packets, completion_bound,
                      expected_delay, optimal_fractions, plan_split, single_path_plan)


def test_expected_delay():
    assert expected_delay(1.0, 1.0) == 2.0
    assert expected_delay(0.5, 1.0) == 4.0
    assert expected_delay(0.0, 1.0) == INFINITE_DELAY
    with pytest.raises(DispatchError):
        expected_delay(0.5, 0.0)
    with pytest.raises(DispatchError):
        expected_delay(1.5, 1.0)


def test_expected_delay_matches_geometric_trials():
    rng = np.random.default_rng(8)
    attempts = rng.geometric(0.5, size=100_000)
    assert (2.0 * attempts).mean() == pytest.approx(expected_delay(0.5, 1.0), rel=0.02)


def test_optimal_fractions():
    fractions = optimal_fractions([PathScore(1, 0.6), PathScore(2, 0.3)])
    assert [hop for hop, _ in fractions] == [1, 2]
    assert [share for _, share in fractions] == pytest.approx([2 / 3, 1 / 3])
    assert optimal_fractions([PathScore(4, 0.2)]) == [(4, 1.0)]
    shares = [s for _, s in optimal_fractions([PathScore(1, 0.5), PathScore(2, 0.3), PathScore(3, 0.2)])]
    assert shares == pytest.approx([0.5, 0.3, 0.2])


@pytest.mark.parametrize('probabilities', [
    [0.9, 0.5, 0.1],
    [0.3, 0.3, 0.3],
    [0.05, 0.6, 0.25, 0.8],
    [1.0, 0.01, 0.4, 0.7, 0.2],
])
def test_optimal_fractions_balance_share_per_probability(probabilities):
    scores = [PathScore(hop, p) for hop, p in enumerate(probabilities, start=1)]
    fractions = optimal_fractions(scores)
    ratios = [share / score.probability for (_, share), score in zip(fractions, scores)]
    assert ratios == pytest.approx([ratios[0]] * len(ratios), rel=1e-12)
    assert sum(share for _, share in fractions) == pytest.approx(1.0)


@pytest.mark.parametrize('factor', [0.1, 0.5, 1.5, 2.0])
def test_optimal_fractions_ignore_common_scale(factor):
    base = [0.4, 0.25, 0.1, 0.05]
    reference = optimal_fractions([PathScore(hop, p) for hop, p in enumerate(base, start=1)])
    scaled = optimal_fractions([PathScore(hop, p * factor) for hop, p in enumerate(base, start=1)])
    assert [hop for hop, _ in scaled] == [hop for hop, _ in reference]
    assert [s for _, s in scaled] == pytest.approx([s for _, s in reference], rel=1e-12)


def test_optimal_fractions_all_zero_falls_back_to_uniform():
    shares = [s for _, s in optimal_fractions([PathScore(1, 0.0), PathScore(2, 0.0)])]
    assert shares == [0.5, 0.5]


def test_optimal_fractions_rejects_empty():
    with pytest.raises(DispatchError):
        optimal_fractions([])


def test_path_score_validation():
    with pytest.raises(DispatchError):
        PathScore(1, -0.1)
    with pytest.raises(DispatchError):
        PathScore(1, 0.5, hop_count=0)


@pytest.mark.parametrize('fractions, batch, expected', [
    ([(1, 2 / 3), (2, 1 / 3)], 3, [2, 1]),
    ([(1, 0.5), (2, 0.5)], 5, [3, 2]),
    ([(2, 0.5), (1, 0.5)], 5, [2, 3]),
    ([(1, 1.0)], 7, [7]),
    ([(1, 0.5), (2, 0.3), (3, 0.2)], 20, [10, 6, 4]),
])
def test_assign_packets(fractions, batch, expected):
    assert [count for _, count in assign_packets(fractions, batch)] == expected


def test_assign_packets_always_sums_to_batch():
    rng = np.random.default_rng(3)
    for _ in range(200):
        weights = rng.random(rng.integers(1, 6))
        fractions = [(hop, float(w)) for hop, w in enumerate(weights / weights.sum())]
        batch = int(rng.integers(1, 50))
        counts = [count for _, count in assign_packets(fractions, batch)]
        assert sum(counts) == batch
        assert all(abs(count - batch * share) < 1 for count, (_, share) in zip(counts, fractions))


def test_assign_packets_rejects_bad_input():
    with pytest.raises(DispatchError):
        assign_packets([(1, 1.0)], 0)
    with pytest.raises(DispatchError):
        assign_packets([(1, 0.7), (2, 0.7)], 3)
    with pytest.raises(DispatchError):
        assign_packets([], 3)


def test_completion_bound():
    scores = [PathScore(1, 0.6), PathScore(2, 0.3)]
    assert completion_bound([(1, 2 / 3), (2, 1 / 3)], scores, 1.0) == pytest.approx(20 / 9)
    assert completion_bound([(1, 1.0), (2, 0.0)], scores, 1.0) == pytest.approx(2 / 0.6)
    assert completion_bound([(1, 0.5), (2, 0.5)], [0.5, 0.5], 1.0) == pytest.approx(2.0)


def test_completion_bound_infinite_when_dead_path_carries_data():
    assert completion_bound([(1, 0.5), (2, 0.5)], [0.6, 0.0], 1.0) == math.inf
    assert completion_bound([(1, 1.0), (2, 0.0)], [0.6, 0.0], 1.0) == pytest.approx(2 / 0.6)


def test_plan_split():
    plan = plan_split([PathScore(1, 0.6), PathScore(2, 0.3)], 3)
    assert plan.packet_counts == [(1, 2), (2, 1)]
    assert plan.batch == 3
    assert not plan.uniform_fallback
    fallback = plan_split([PathScore(1, 0.0), PathScore(2, 0.0)], 4)
    assert fallback.uniform_fallback
    assert fallback.packet_counts == [(1, 2), (2, 2)]


def test_single_path_plan():
    plan = single_path_plan(3, 9)
    assert plan.fractions == [(3, 1.0)]
    assert plan.packet_counts == [(3, 9)]
