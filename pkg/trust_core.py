"""
Per-link reliability factors and the composite link probability.

A sender keeps one NeighborAssessment per neighbor. The assessment combines
a windowed Beta estimate of ACK success, a battery outlook extrapolated from
periodic beacons, an availability index that drops while the neighbor
transmits, and the hop count of the path through that neighbor.

All state transitions return new values; nothing here is shared between
simulation runs.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import config
from models import NodeId


class TrustError(ValueError):
    """Raised when a trust-model input violates its domain"""


@dataclass(frozen=True)
class TrustWindowState:
    """Latest N ACK/timeout outcomes; True means the ACK came back"""
    capacity: int
    outcomes: Tuple[bool, ...] = ()
    success_count: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise TrustError(f"window capacity must be positive, got {self.capacity}")
        if len(self.outcomes) > self.capacity:
            raise TrustError(f"window holds {len(self.outcomes)} outcomes, capacity is {self.capacity}")
        if not (0 <= self.success_count <= len(self.outcomes)):
            raise TrustError(f"success_count {self.success_count} out of range for {len(self.outcomes)} outcomes")

    @property
    def alpha(self):
        return self.success_count

    @property
    def beta(self):
        return len(self.outcomes) - self.success_count

    @property
    def full(self):
        return len(self.outcomes) == self.capacity

    def recount(self):
        return sum(1 for outcome in self.outcomes if outcome)


def empty_window(capacity=config.DEFAULT_WINDOW_SIZE):
    return TrustWindowState(capacity=capacity)


def record_outcome(state: TrustWindowState, ack_received: bool) -> TrustWindowState:
    """Append one outcome, evicting the oldest once the window is full"""
    outcomes = state.outcomes + (bool(ack_received),)
    success_count = state.success_count + (1 if ack_received else 0)
    if len(outcomes) > state.capacity:
        if outcomes[0]:
            success_count -= 1
        outcomes = outcomes[1:]
    return TrustWindowState(capacity=state.capacity, outcomes=outcomes, success_count=success_count)


def trust_expectation(state: TrustWindowState) -> float:
    """
    Posterior mean of the link success probability.

    Uses a uniform Beta(1, 1) prior over the windowed counts, so an empty
    window gives 0.5 and finite evidence never yields exactly 0 or 1.
    """
    return (state.success_count + 1) / (len(state.outcomes) + 2)


@dataclass(frozen=True)
class BatterySample:
    time: float
    level: float

    def __post_init__(self):
        if not (0.0 <= self.level <= 1.0):
            raise TrustError(f"battery level must be in [0, 1], got {self.level}")


def extrapolate_battery(s0: BatterySample, s1: BatterySample, t2: float) -> float:
    """Linear discharge forecast from the two latest beacons, clamped to [0, 1]"""
    if not (s0.time < s1.time <= t2):
        raise TrustError(
            f"battery samples must satisfy t0 < t1 <= t2, got {s0.time}, {s1.time}, {t2}"
        )
    rate = (s1.level - s0.level) / (s1.time - s0.time)
    level = s1.level + rate * (t2 - s1.time)
    return max(0.0, min(1.0, level))


@dataclass(frozen=True)
class BatteryInfluenceConfig:
    gamma: float = config.DEFAULT_GAMMA

    def __post_init__(self):
        if not self.gamma > 0:
            raise TrustError(f"gamma must be positive, got {self.gamma}")


def battery_influence(level: float, cfg: BatteryInfluenceConfig) -> float:
    """f(x) = 1 - exp(-gamma * x)"""
    if not (0.0 <= level <= 1.0):
        raise TrustError(f"battery level must be in [0, 1], got {level}")
    return 1.0 - math.exp(-cfg.gamma * level)


@dataclass(frozen=True)
class AvailabilityState:
    value: float = 1.0
    last_update: float = 0.0
    regen_rate: float = config.DEFAULT_REGEN_RATE
    degradation: float = config.DEFAULT_DEGRADATION

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise TrustError(f"availability must be in [0, 1], got {self.value}")
        if not self.regen_rate > 0:
            raise TrustError(f"regen_rate must be positive, got {self.regen_rate}")
        if self.degradation < 0:
            raise TrustError(f"degradation must be non-negative, got {self.degradation}")


def update_availability(state: AvailabilityState, now: float, observed_transmitting: bool) -> AvailabilityState:
    """Regenerate for the elapsed time, then degrade once if a transmission was seen"""
    if now < state.last_update:
        raise TrustError(f"availability update at {now} precedes last update at {state.last_update}")
    value = state.value + state.regen_rate * (now - state.last_update)
    if observed_transmitting:
        value -= state.degradation
    return replace(state, value=max(0.0, min(1.0, value)), last_update=now)


def project_availability(state: AvailabilityState, now: float) -> float:
    """Availability at `now` assuming the neighbor stayed idle since the last update"""
    return update_availability(state, max(now, state.last_update), False).value


def hop_adjusted_probability(p: float, num_hops: int) -> float:
    if num_hops < 1:
        raise TrustError(f"num_hops must be at least 1, got {num_hops}")
    if not (0.0 <= p <= 1.0):
        raise TrustError(f"probability must be in [0, 1], got {p}")
    return p / num_hops


def combine_factors(trust: float, battery: float, availability: float, num_hops: int) -> float:
    return hop_adjusted_probability(trust * battery * availability, num_hops)


@dataclass
class NeighborAssessment:
    """Everything a node knows about one neighbor"""
    neighbor_id: NodeId
    trust: TrustWindowState = field(default_factory=empty_window)
    battery_history: Tuple[BatterySample, ...] = ()
    availability: AvailabilityState = field(default_factory=AvailabilityState)

    def record_ack(self, ack_received):
        self.trust = record_outcome(self.trust, ack_received)

    def record_battery(self, sample: BatterySample):
        """Keep the two most recent beacons; stale or same-instant beacons are ignored"""
        if self.battery_history and sample.time <= self.battery_history[-1].time:
            return False
        self.battery_history = (self.battery_history + (sample,))[-2:]
        return True

    def observe(self, now, transmitting):
        self.availability = update_availability(self.availability, now, transmitting)

    def battery_level(self, now) -> Optional[float]:
        """Forecast level at `now`, or None when no beacon has arrived yet"""
        if len(self.battery_history) >= 2:
            s0, s1 = self.battery_history[-2:]
            return extrapolate_battery(s0, s1, max(now, s1.time))
        if self.battery_history:
            return self.battery_history[-1].level
        return None

    def battery_factor(self, now, cfg: BatteryInfluenceConfig) -> float:
        level = self.battery_level(now)
        return battery_influence(1.0 if level is None else level, cfg)


def new_assessment(neighbor_id, window=config.DEFAULT_WINDOW_SIZE,
                   regen_rate=config.DEFAULT_REGEN_RATE,
                   degradation=config.DEFAULT_DEGRADATION, now=0.0):
    return NeighborAssessment(
        neighbor_id=neighbor_id,
        trust=empty_window(window),
        availability=AvailabilityState(value=1.0, last_update=now,
                                       regen_rate=regen_rate, degradation=degradation),
    )


def composite_link_probability(assessment: NeighborAssessment, now: float, num_hops: int,
                               cfg: BatteryInfluenceConfig) -> float:
    """
    Score of sending through `assessment.neighbor_id` toward a destination
    `num_hops` away: trust x battery influence x availability / hops.

    Args:
        assessment: sender-side record for the first hop
        now: evaluation instant; battery and availability are projected to it
        num_hops: hop count of the path through this neighbor
        cfg: battery influence shape

    Returns:
        Score in [0, 1]
    """
    if num_hops < 1:
        raise TrustError(f"num_hops must be at least 1, got {num_hops}")
    return combine_factors(
        trust_expectation(assessment.trust),
        assessment.battery_factor(now, cfg),
        project_availability(assessment.availability, now),
        num_hops,
    )
