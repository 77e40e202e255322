"""
AODV / AOMDV control plane.

Each RoutingNode is a single-owner state machine: the simulator hands it one
control message at a time and transmits whatever actions it returns. Nodes
never look at each other's state.

Loop freedom follows the advertised-hop-count rule: within one destination
sequence epoch a node only accepts paths no longer than the hop count it
first advertised, and every RREQ/RREP it forwards carries that advertised
value. Following next hops for a fixed epoch therefore strictly decreases
the stored hop count.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Set, Tuple

import config
from models import NodeId, Protocol

logger = logging.getLogger(__name__)


class RoutingError(ValueError):
    """Raised on invalid routing-table input"""


@dataclass(frozen=True)
class RouteRequest:
    rreq_id: int
    source: NodeId
    dest: NodeId
    source_seq: int
    dest_seq_known: Optional[int]
    hop_count: int
    first_hop: NodeId

    @property
    def well_formed(self):
        return (self.rreq_id >= 1 and self.hop_count >= 0 and self.source_seq >= 0
                and self.source != self.dest)

    @property
    def kind(self):
        return 'RREQ'


@dataclass(frozen=True)
class RouteReply:
    source: NodeId
    dest: NodeId
    dest_seq: int
    hop_count: int

    @property
    def kind(self):
        return 'RREP'


@dataclass(frozen=True)
class RouteError:
    unreachable: Tuple[Tuple[NodeId, int], ...]

    def __post_init__(self):
        if not self.unreachable:
            raise RoutingError("a route error must list at least one destination")

    @property
    def kind(self):
        return 'RERR'


@dataclass
class PathEntry:
    next_hop: NodeId
    hop_count: int
    expiry: float

    def __post_init__(self):
        if self.hop_count < 1:
            raise RoutingError(f"hop_count must be at least 1, got {self.hop_count}")


@dataclass
class DestinationRecord:
    dest_seq: int
    advertised_hop_count: int
    paths: List[PathEntry] = field(default_factory=list)


@dataclass(frozen=True)
class Broadcast:
    message: object


@dataclass(frozen=True)
class Unicast:
    next_hop: NodeId
    message: object


@dataclass(frozen=True)
class RouteFound:
    dest: NodeId


class MultipathRouteTable:
    """Per-destination set of node-disjoint next hops sharing one sequence epoch"""

    def __init__(self, max_paths=config.DEFAULT_MAX_PATHS, route_lifetime=config.DEFAULT_ROUTE_LIFETIME):
        if max_paths < 1:
            raise RoutingError(f"max_paths must be at least 1, got {max_paths}")
        self.max_paths = max_paths
        self.route_lifetime = route_lifetime
        self.records: Dict[NodeId, DestinationRecord] = {}

    def record(self, dest) -> Optional[DestinationRecord]:
        return self.records.get(dest)

    def epoch(self, dest) -> Optional[int]:
        record = self.records.get(dest)
        return None if record is None else record.dest_seq

    def insert_path(self, dest, dest_seq, next_hop, hop_count, now) -> bool:
        """
        Offer a path to `dest`; returns whether it was stored.

        A higher sequence number starts a new epoch holding only this path.
        Within the current epoch a path is stored only through a new next hop
        and no longer than the advertised hop count; once K paths are held the
        longest one gives way to a strictly shorter newcomer.
        """
        if hop_count < 1:
            raise RoutingError(f"hop_count must be at least 1, got {hop_count}")
        entry = PathEntry(next_hop=next_hop, hop_count=hop_count, expiry=now + self.route_lifetime)
        record = self.records.get(dest)

        if record is None or dest_seq > record.dest_seq or (dest_seq == record.dest_seq and not record.paths):
            self.records[dest] = DestinationRecord(dest_seq=dest_seq, advertised_hop_count=hop_count,
                                                   paths=[entry])
            return True
        if dest_seq < record.dest_seq:
            return False
        if any(path.next_hop == next_hop for path in record.paths):
            return False
        if hop_count > record.advertised_hop_count:
            return False

        record.paths = [path for path in record.paths if path.expiry > now]
        if len(record.paths) < self.max_paths:
            record.paths.append(entry)
            return True
        worst = max(record.paths, key=lambda path: path.hop_count)
        if hop_count < worst.hop_count:
            record.paths.remove(worst)
            record.paths.append(entry)
            return True
        return False

    def refresh_path(self, dest, next_hop, now, lifetime=None) -> bool:
        record = self.records.get(dest)
        if record is None:
            return False
        for path in record.paths:
            if path.next_hop == next_hop:
                path.expiry = max(path.expiry, now + (self.route_lifetime if lifetime is None else lifetime))
                return True
        return False

    def usable_paths(self, dest, now) -> List[PathEntry]:
        record = self.records.get(dest)
        if record is None:
            return []
        return [path for path in record.paths if path.expiry > now]

    def best_path(self, dest, now) -> Optional[PathEntry]:
        """Lowest hop count; ties keep insertion order"""
        paths = self.usable_paths(dest, now)
        return min(paths, key=lambda path: path.hop_count) if paths else None

    def remove_path(self, dest, next_hop) -> bool:
        record = self.records.get(dest)
        if record is None:
            return False
        kept = [path for path in record.paths if path.next_hop != next_hop]
        removed = len(kept) != len(record.paths)
        record.paths = kept
        return removed

    def destinations(self):
        return sorted(self.records)


def usable_paths(table: MultipathRouteTable, dest, now):
    return table.usable_paths(dest, now)


def insert_path(table: MultipathRouteTable, dest, dest_seq, next_hop, hop_count, now):
    accepted = table.insert_path(dest, dest_seq, next_hop, hop_count, now)
    return table, accepted


class RoutingNode:
    """Reactive route discovery and maintenance for one node"""

    def __init__(self, node_id, protocol=Protocol.AOMDV, max_paths=config.DEFAULT_MAX_PATHS,
                 route_lifetime=config.DEFAULT_ROUTE_LIFETIME, ttl=config.DEFAULT_RREQ_TTL):
        self.node_id = node_id
        self.protocol = Protocol.parse(protocol)
        self.ttl = ttl
        self.table = MultipathRouteTable(
            max_paths=max_paths if self.protocol.multipath else 1,
            route_lifetime=route_lifetime,
        )
        self.own_seq = 0
        self.last_rreq_id = 0
        self.seen: Dict[Tuple[NodeId, int], Set[NodeId]] = {}
        self.counters = Counter()

    @property
    def multipath(self):
        return self.protocol.multipath

    def _flood(self, dest):
        self.own_seq += 1
        self.last_rreq_id += 1
        rreq = RouteRequest(
            rreq_id=self.last_rreq_id,
            source=self.node_id,
            dest=dest,
            source_seq=self.own_seq,
            dest_seq_known=self.table.epoch(dest),
            hop_count=0,
            first_hop=self.node_id,
        )
        self.seen[(self.node_id, rreq.rreq_id)] = set()
        self.counters['rreq_originated'] += 1
        return [Broadcast(rreq)]

    def originate_route_discovery(self, dest, now):
        if dest == self.node_id or self.table.usable_paths(dest, now):
            return []
        logger.debug(f"node {self.node_id}: route discovery for {dest}")
        return self._flood(dest)

    def originate_path_replenishment(self, dest, now):
        """Re-flood for a destination that still has some, but fewer than K, paths"""
        if not self.multipath:
            return []
        paths = self.table.usable_paths(dest, now)
        if not paths or len(paths) >= self.table.max_paths:
            return []
        return self._flood(dest)

    def _reply_as_destination(self, rreq):
        if rreq.dest_seq_known is not None and rreq.dest_seq_known > self.own_seq:
            self.own_seq = rreq.dest_seq_known
        self.counters['rrep_originated'] += 1
        return RouteReply(source=rreq.source, dest=self.node_id, dest_seq=self.own_seq, hop_count=0)

    def _fresh_route(self, rreq, now):
        record = self.table.record(rreq.dest)
        if record is None or not self.table.usable_paths(rreq.dest, now):
            return None
        if rreq.dest_seq_known is not None and record.dest_seq < rreq.dest_seq_known:
            return None
        return record

    def process_route_request(self, rreq: RouteRequest, sender, now):
        if rreq.source == self.node_id:
            return []
        if not rreq.well_formed:
            self.counters['malformed_rreq'] += 1
            logger.debug(f"node {self.node_id}: malformed RREQ from {sender}: {rreq}")
            return []

        key = (rreq.source, rreq.rreq_id)
        first_hop = self.node_id if sender == rreq.source else rreq.first_hop
        reverse_hops = rreq.hop_count + 1

        if key in self.seen:
            if not self.multipath or first_hop in self.seen[key]:
                self.counters['duplicate_rreq'] += 1
                return []
            self.seen[key].add(first_hop)
            accepted = self.table.insert_path(rreq.source, rreq.source_seq, sender, reverse_hops, now)
            if accepted and rreq.dest == self.node_id:
                return [Unicast(sender, self._reply_as_destination(rreq))]
            return []

        self.seen[key] = {first_hop}
        if not self.table.insert_path(rreq.source, rreq.source_seq, sender, reverse_hops, now):
            self.table.refresh_path(rreq.source, sender, now)

        if rreq.dest == self.node_id:
            return [Unicast(sender, self._reply_as_destination(rreq))]

        if not self.multipath:
            record = self._fresh_route(rreq, now)
            if record is not None:
                self.counters['rrep_originated'] += 1
                return [Unicast(sender, RouteReply(source=rreq.source, dest=rreq.dest,
                                                   dest_seq=record.dest_seq,
                                                   hop_count=record.advertised_hop_count))]

        if reverse_hops >= self.ttl:
            self.counters['rreq_ttl_expired'] += 1
            return []
        reverse = self.table.record(rreq.source)
        advertised = reverse.advertised_hop_count if reverse.dest_seq == rreq.source_seq else reverse_hops
        return [Broadcast(replace(rreq, hop_count=advertised, first_hop=first_hop,
                                  dest_seq_known=self._known_dest_seq(rreq)))]

    def _known_dest_seq(self, rreq):
        """Freshest destination sequence number known to the request or to this node"""
        known = [seq for seq in (rreq.dest_seq_known, self.table.epoch(rreq.dest)) if seq is not None]
        return max(known) if known else None

    def process_route_reply(self, rrep: RouteReply, sender, now):
        record = self.table.record(rrep.dest)
        if record is not None and rrep.dest_seq < record.dest_seq:
            self.counters['stale_rrep'] += 1
            return []

        at_source = rrep.source == self.node_id
        reverse = None if at_source else self.table.best_path(rrep.source, now)
        if not at_source and reverse is None:
            self.counters['rrep_no_reverse'] += 1
            logger.warning(f"node {self.node_id}: RREP for {rrep.source}->{rrep.dest} has no reverse path")
            return []

        if not self.table.insert_path(rrep.dest, rrep.dest_seq, sender, rrep.hop_count + 1, now):
            if not self.table.refresh_path(rrep.dest, sender, now):
                self.counters['rejected_rrep'] += 1
                return []

        if at_source:
            return [RouteFound(rrep.dest)]
        advertised = self.table.record(rrep.dest).advertised_hop_count
        return [Unicast(reverse.next_hop, replace(rrep, hop_count=advertised))]

    def handle_link_failure(self, dead_neighbor, now):
        """Drop every path through `dead_neighbor`; report destinations left without any"""
        lost = []
        for dest in self.table.destinations():
            record = self.table.record(dest)
            had_paths = bool(record.paths)
            if self.table.remove_path(dest, dead_neighbor) and had_paths and not record.paths:
                record.dest_seq += 1
                lost.append((dest, record.dest_seq))
        if not lost:
            return []
        logger.info(f"node {self.node_id}: link to {dead_neighbor} lost, unreachable {lost}")
        self.counters['rerr_originated'] += 1
        return [Broadcast(RouteError(tuple(lost)))]

    def process_route_error(self, rerr: RouteError, sender, now):
        lost = []
        for dest, dest_seq in rerr.unreachable:
            record = self.table.record(dest)
            if record is None:
                continue
            had_paths = bool(record.paths)
            if self.table.remove_path(dest, sender) and had_paths and not record.paths:
                record.dest_seq = max(record.dest_seq, dest_seq)
                lost.append((dest, record.dest_seq))
        if not lost:
            return []
        return [Broadcast(RouteError(tuple(lost)))]

    def process(self, message, sender, now):
        """Dispatch one received control message"""
        if isinstance(message, RouteRequest):
            return self.process_route_request(message, sender, now)
        if isinstance(message, RouteReply):
            return self.process_route_reply(message, sender, now)
        if isinstance(message, RouteError):
            return self.process_route_error(message, sender, now)
        raise RoutingError(f"unknown control message {message!r}")
