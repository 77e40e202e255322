"""
Stop-and-wait delay law and delay-optimal splitting of a batch over paths.

With per-path success probability p and one-way transmission time t, a
packet costs 2t/p on average. Sending a share f_i of the data through path i
finishes that path after roughly f_i/p_i, so the batch completes when the
slowest path does; shares proportional to p_i equalise all paths and
minimise that maximum.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from models import NodeId

logger = logging.getLogger(__name__)

INFINITE_DELAY = math.inf
FRACTION_TOLERANCE = 1e-9


class DispatchError(ValueError):
    """Raised on invalid split or delay inputs"""


@dataclass(frozen=True)
class PathScore:
    next_hop: NodeId
    probability: float
    hop_count: int = 1

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise DispatchError(f"path via {self.next_hop}: probability must be in [0, 1], got {self.probability}")
        if self.hop_count < 1:
            raise DispatchError(f"path via {self.next_hop}: hop_count must be at least 1, got {self.hop_count}")


@dataclass
class SplitPlan:
    fractions: List[Tuple[NodeId, float]]
    packet_counts: List[Tuple[NodeId, int]] = field(default_factory=list)
    uniform_fallback: bool = False

    @property
    def batch(self):
        return sum(count for _, count in self.packet_counts)


def expected_delay(p: float, t: float) -> float:
    """Mean time until a packet is acknowledged: 2t/p"""
    if t <= 0:
        raise DispatchError(f"transmission time must be positive, got {t}")
    if not (0.0 <= p <= 1.0):
        raise DispatchError(f"probability must be in [0, 1], got {p}")
    if p == 0:
        return INFINITE_DELAY
    return 2.0 * t / p


def optimal_fractions(scores: Sequence[PathScore]) -> List[Tuple[NodeId, float]]:
    """f_i = p_i / sum(p); uniform when every score is zero"""
    if not scores:
        raise DispatchError("cannot split over an empty path list")
    probabilities = np.array([score.probability for score in scores], dtype=float)
    total = probabilities.sum()
    if total > 0:
        shares = probabilities / total
    else:
        shares = np.full(len(scores), 1.0 / len(scores))
    return [(score.next_hop, float(share)) for score, share in zip(scores, shares)]


def _check_fractions(fractions):
    if not fractions:
        raise DispatchError("fractions must not be empty")
    shares = [share for _, share in fractions]
    if any(share < 0 or share > 1 + FRACTION_TOLERANCE for share in shares):
        raise DispatchError(f"fractions must lie in [0, 1], got {shares}")
    if abs(sum(shares) - 1.0) > FRACTION_TOLERANCE:
        raise DispatchError(f"fractions must sum to 1, got {sum(shares)}")


def assign_packets(fractions: Sequence[Tuple[NodeId, float]], batch: int) -> List[Tuple[NodeId, int]]:
    """
    Largest-remainder rounding of batch * f_i.

    Counts always sum to `batch`; equal remainders favour the lower next hop id.
    """
    if batch < 1:
        raise DispatchError(f"batch must be positive, got {batch}")
    _check_fractions(fractions)
    quotas = np.array([share for _, share in fractions], dtype=float) * batch
    counts = np.floor(quotas + FRACTION_TOLERANCE).astype(int)
    remainders = np.round(quotas - counts, 12)
    leftover = batch - int(counts.sum())
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], fractions[i][0]))
    for i in order[:max(leftover, 0)]:
        counts[i] += 1
    return [(next_hop, int(count)) for (next_hop, _), count in zip(fractions, counts)]


def completion_bound(fractions, scores, t) -> float:
    """Time for the slowest path to clear its share: max_i (f_i / p_i) * 2t"""
    if t <= 0:
        raise DispatchError(f"transmission time must be positive, got {t}")
    if len(fractions) != len(scores):
        raise DispatchError(f"{len(fractions)} fractions for {len(scores)} paths")
    worst = 0.0
    for (_, share), score in zip(fractions, scores):
        probability = score.probability if isinstance(score, PathScore) else float(score)
        if share <= 0:
            continue
        if probability == 0:
            return INFINITE_DELAY
        worst = max(worst, share / probability)
    return worst * 2.0 * t


def plan_split(scores: Sequence[PathScore], batch: int) -> SplitPlan:
    fractions = optimal_fractions(scores)
    fallback = all(score.probability == 0 for score in scores)
    if fallback and len(scores) > 1:
        logger.warning(f"all {len(scores)} paths scored zero, splitting uniformly")
    return SplitPlan(fractions=fractions, packet_counts=assign_packets(fractions, batch),
                     uniform_fallback=fallback)


def single_path_plan(next_hop, batch) -> SplitPlan:
    return SplitPlan(fractions=[(next_hop, 1.0)], packet_counts=[(next_hop, batch)])
