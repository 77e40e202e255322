import math

import numpy as np
import pytest

from trust_core import (AvailabilityState, BatteryInfluenceConfig, BatterySample, NeighborAssessment,
                        TrustError, TrustWindowState, battery_influence, combine_factors,
                        composite_link_probability, empty_window, extrapolate_battery,
                        hop_adjusted_probability, new_assessment, project_availability,
                        record_outcome, trust_expectation, update_availability)


def window_of(outcomes, capacity):
    return TrustWindowState(capacity=capacity, outcomes=tuple(outcomes),
                            success_count=sum(outcomes))


def test_record_outcome_single_insertion():
    state = record_outcome(empty_window(3), True)
    assert state.outcomes == (True,)
    assert state.success_count == 1


def test_record_outcome_evicts_oldest():
    state = record_outcome(window_of([True, False, True], 3), False)
    assert state.outcomes == (False, True, False)
    assert state.success_count == 1


def test_record_outcome_replay():
    state = window_of([False], 3)
    for _ in range(5):
        state = record_outcome(state, True)
    assert state.outcomes == (True, True, True)
    assert state.success_count == 3


def test_window_stays_bounded_and_coherent():
    rng = np.random.default_rng(11)
    state = empty_window(7)
    for ack in rng.random(200) < 0.4:
        state = record_outcome(state, bool(ack))
        assert len(state.outcomes) <= 7
        assert state.success_count == state.recount()
    assert state.full
    assert state.alpha + state.beta == 7


def test_window_rejects_incoherent_state():
    with pytest.raises(TrustError):
        TrustWindowState(capacity=0)
    with pytest.raises(TrustError):
        TrustWindowState(capacity=2, outcomes=(True, True, True), success_count=3)
    with pytest.raises(TrustError):
        TrustWindowState(capacity=3, outcomes=(True,), success_count=2)


def test_trust_expectation_values():
    assert trust_expectation(empty_window(50)) == 0.5
    assert trust_expectation(window_of([True] * 4, 50)) == pytest.approx(5 / 6)
    assert trust_expectation(window_of([True] * 7 + [False] * 3, 50)) == pytest.approx(8 / 12)


def test_trust_expectation_depends_only_on_last_window():
    tail = [True, False, True, True, False]
    a = empty_window(5)
    b = empty_window(5)
    for ack in [False] * 9 + tail:
        a = record_outcome(a, ack)
    for ack in [True] * 3 + tail:
        b = record_outcome(b, ack)
    assert trust_expectation(a) == trust_expectation(b)


@pytest.mark.parametrize('q', [0.3, 0.7])
def test_trust_expectation_converges(q):
    rng = np.random.default_rng(2024)
    state = empty_window(50)
    for ack in rng.random(300) < q:
        state = record_outcome(state, bool(ack))
    # 99.9% normal band for 50 Bernoulli trials, plus the prior's pull
    half_width = 3.29 * math.sqrt(q * (1 - q) / 50) + 1 / 52
    assert abs(trust_expectation(state) - q) <= half_width


@pytest.mark.parametrize('s0, s1, t2, expected', [
    (BatterySample(0, 1.0), BatterySample(10, 0.9), 20, 0.8),
    (BatterySample(0, 0.5), BatterySample(10, 0.5), 100, 0.5),
    (BatterySample(0, 0.2), BatterySample(10, 0.1), 30, 0.0),
])
def test_extrapolate_battery(s0, s1, t2, expected):
    assert extrapolate_battery(s0, s1, t2) == pytest.approx(expected)


def test_extrapolate_battery_rejects_bad_times():
    with pytest.raises(TrustError):
        extrapolate_battery(BatterySample(10, 1.0), BatterySample(10, 0.9), 20)
    with pytest.raises(TrustError):
        extrapolate_battery(BatterySample(0, 1.0), BatterySample(10, 0.9), 5)


def test_battery_sample_range():
    with pytest.raises(TrustError):
        BatterySample(0, 1.2)


def test_battery_influence():
    cfg = BatteryInfluenceConfig(gamma=4.0)
    assert battery_influence(0.0, BatteryInfluenceConfig(gamma=9.0)) == 0.0
    assert battery_influence(1.0, cfg) == pytest.approx(0.98168, abs=1e-5)
    assert battery_influence(0.5, cfg) == pytest.approx(0.86466, abs=1e-5)
    levels = np.linspace(0, 1, 21)
    values = [battery_influence(level, cfg) for level in levels]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_battery_influence_domain():
    with pytest.raises(TrustError):
        BatteryInfluenceConfig(gamma=0)
    with pytest.raises(TrustError):
        battery_influence(1.5, BatteryInfluenceConfig())


@pytest.mark.parametrize('value, transmitting, degradation, expected', [
    (0.5, False, 0.3, 0.6),
    (0.95, False, 0.3, 1.0),
    (0.5, True, 0.3, 0.3),
    (0.1, True, 0.5, 0.0),
])
def test_update_availability(value, transmitting, degradation, expected):
    state = AvailabilityState(value=value, last_update=0.0, regen_rate=0.1, degradation=degradation)
    updated = update_availability(state, 1.0, transmitting)
    assert updated.value == pytest.approx(expected)
    assert updated.last_update == 1.0


def test_update_availability_rejects_time_going_back():
    state = AvailabilityState(value=0.5, last_update=3.0)
    with pytest.raises(TrustError):
        update_availability(state, 2.0, False)


def test_availability_idle_is_non_decreasing_and_bounded():
    state = AvailabilityState(value=0.0, last_update=0.0, regen_rate=0.2, degradation=0.4)
    previous = state.value
    for step in range(1, 20):
        state = update_availability(state, step * 0.5, False)
        assert previous <= state.value <= 1.0
        previous = state.value


def test_project_availability_does_not_mutate():
    state = AvailabilityState(value=0.2, last_update=1.0, regen_rate=0.2)
    assert project_availability(state, 2.0) == pytest.approx(0.4)
    assert project_availability(state, 0.5) == pytest.approx(0.2)
    assert state.value == 0.2


def test_hop_adjusted_probability():
    assert hop_adjusted_probability(0.8, 1) == 0.8
    assert hop_adjusted_probability(0.8, 4) == pytest.approx(0.2)
    assert hop_adjusted_probability(0.0, 7) == 0.0
    assert hop_adjusted_probability(0.6, 2) > hop_adjusted_probability(0.6, 3)
    with pytest.raises(TrustError):
        hop_adjusted_probability(0.5, 0)
    with pytest.raises(TrustError):
        hop_adjusted_probability(1.1, 1)


def test_combine_factors():
    assert combine_factors(0.75, 1.0, 1.0, 1) == 0.75
    assert combine_factors(0.8, 0.9, 0.5, 2) == pytest.approx(0.18, abs=1e-12)
    assert combine_factors(0.8, 0.0, 0.5, 2) == 0.0


def test_battery_history_keeps_latest_two():
    assessment = NeighborAssessment(neighbor_id=4)
    assert assessment.battery_level(0.0) is None
    assert assessment.record_battery(BatterySample(0.0, 1.0))
    assert assessment.battery_level(3.0) == 1.0
    assert assessment.record_battery(BatterySample(10.0, 0.9))
    assert assessment.record_battery(BatterySample(20.0, 0.8))
    assert not assessment.record_battery(BatterySample(20.0, 0.5))
    assert not assessment.record_battery(BatterySample(15.0, 0.5))
    assert [s.time for s in assessment.battery_history] == [10.0, 20.0]
    assert assessment.battery_level(30.0) == pytest.approx(0.7)


def test_battery_factor_warmup_defaults_to_full():
    cfg = BatteryInfluenceConfig(gamma=4.0)
    assessment = new_assessment(1)
    assert assessment.battery_factor(5.0, cfg) == pytest.approx(1 - math.exp(-4))


def test_composite_fresh_neighbor_is_half_trust_times_full_battery():
    cfg = BatteryInfluenceConfig(gamma=4.0)
    assessment = new_assessment(2, window=10)
    expected = 0.5 * (1 - math.exp(-4)) * 1.0 / 2
    assert composite_link_probability(assessment, 1.0, 2, cfg) == pytest.approx(expected, abs=1e-12)


def test_composite_is_zero_iff_a_factor_is_zero():
    cfg = BatteryInfluenceConfig()
    dead = new_assessment(3)
    dead.record_battery(BatterySample(0.0, 0.0))
    assert composite_link_probability(dead, 1.0, 1, cfg) == 0.0

    busy = new_assessment(3, degradation=1.0)
    busy.observe(0.0, True)
    assert composite_link_probability(busy, 0.0, 1, cfg) == 0.0

    healthy = new_assessment(3)
    for _ in range(5):
        healthy.record_ack(False)
    assert 0.0 < composite_link_probability(healthy, 0.0, 3, cfg) <= 1.0


def test_composite_projects_availability_to_now():
    cfg = BatteryInfluenceConfig()
    assessment = new_assessment(5, regen_rate=0.2, degradation=0.5)
    assessment.observe(0.0, True)
    at_once = composite_link_probability(assessment, 0.0, 1, cfg)
    later = composite_link_probability(assessment, 2.0, 1, cfg)
    assert later == pytest.approx(at_once * 0.9 / 0.5)
