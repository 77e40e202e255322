"""
Deterministic discrete-event engine.

Events run strictly in (time, sequence) order on one thread. Every random
outcome is drawn from a numpy PCG64 substream keyed by (seed, sender,
receiver, purpose), so a run depends only on the scenario and its seed.

Data plane: stop-and-wait ARQ per (node, next hop). A data packet succeeds
with the link's ground-truth probability q; success delivers it after t and
returns the ACK after 2t, failure is noticed at 2t + epsilon * t and the same
packet is sent again. Control messages ride the same lossy links but never
touch the ARQ slot or the trust windows.
"""

import heapq
import itertools
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Optional, Set

import numpy as np

from dispatch import PathScore, plan_split, single_path_plan
from models import Event, EventKind, NodeId, Packet, Protocol, link_key
from routing import (Broadcast, RouteError, RouteFound, RouteReply, RouteRequest,
                     RoutingNode, Unicast)
from scenario_io import (MAX_SEED, ControlOverhead, DeliveryRecord, FlowMetrics, RunReport,
                         Scenario, SplitSample, TrustSample, summarize_delays,
                         validate_scenario)
from trust_core import (BatteryInfluenceConfig, BatterySample, NeighborAssessment,
                        composite_link_probability, new_assessment, trust_expectation)

logger = logging.getLogger(__name__)

STREAM_PURPOSES = {'data': 1, 'control': 2}


class SimulationError(RuntimeError):
    """Raised when a run cannot start or its state is corrupted"""


@dataclass(frozen=True)
class BatteryBeacon:
    node: NodeId
    time: float
    level: float

    @property
    def kind(self):
        return 'BEACON'


def describe(message):
    """Compact text form of a control message for traces"""
    if isinstance(message, RouteRequest):
        return (f"RREQ id={message.rreq_id} src={message.source} dst={message.dest} "
                f"hops={message.hop_count} first={message.first_hop} "
                f"sseq={message.source_seq} dseq={message.dest_seq_known}")
    if isinstance(message, RouteReply):
        return f"RREP src={message.source} dst={message.dest} dseq={message.dest_seq} hops={message.hop_count}"
    if isinstance(message, RouteError):
        return 'RERR ' + ','.join(f"{dest}:{seq}" for dest, seq in message.unreachable)
    if isinstance(message, BatteryBeacon):
        return f"BEACON level={message.level:.6g}"
    return repr(message)


class RngStreams:
    """Independent generators per (sender, receiver, purpose) derived from one seed"""

    def __init__(self, seed):
        if not (0 <= int(seed) < MAX_SEED):
            raise SimulationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._streams: Dict[tuple, np.random.Generator] = {}

    def stream(self, sender, receiver, purpose) -> np.random.Generator:
        key = (sender, receiver, purpose)
        generator = self._streams.get(key)
        if generator is None:
            entropy = np.random.SeedSequence([self.seed, sender, receiver, STREAM_PURPOSES[purpose]])
            generator = np.random.Generator(np.random.PCG64(entropy))
            self._streams[key] = generator
        return generator

    def draw(self, sender, receiver, purpose, q) -> bool:
        """One Bernoulli(q) trial"""
        return bool(self.stream(sender, receiver, purpose).random() < q)


@dataclass
class InFlight:
    packet: Packet
    tx_id: int
    started: float
    handed_over: bool = False


@dataclass
class NodeRuntime:
    id: NodeId
    routing: RoutingNode
    battery_cfg: BatteryInfluenceConfig
    battery: float
    idle_drain: float
    tx_cost: float
    batch: int
    battery_time: float = 0.0
    neighbors: Dict[NodeId, NeighborAssessment] = field(default_factory=dict)
    # own traffic waiting for a batch plan, by destination
    pending: Dict[NodeId, Deque[Packet]] = field(default_factory=dict)
    # forwarded traffic waiting for a route, by destination
    relay: Dict[NodeId, Deque[Packet]] = field(default_factory=dict)
    queues: Dict[NodeId, Deque[Packet]] = field(default_factory=dict)
    inflight: Dict[NodeId, InFlight] = field(default_factory=dict)
    discovering: Set[NodeId] = field(default_factory=set)
    last_flood: Dict[NodeId, float] = field(default_factory=dict)
    plan_scheduled: Set[NodeId] = field(default_factory=set)

    @property
    def protocol(self):
        return self.routing.protocol

    def drain_to(self, now):
        if now > self.battery_time:
            self.battery = max(0.0, self.battery - self.idle_drain * (now - self.battery_time))
            self.battery_time = now

    def level(self, now):
        self.drain_to(now)
        return self.battery

    def alive(self, now):
        return self.level(now) > 0.0

    def spend(self, now):
        self.drain_to(now)
        self.battery = max(0.0, self.battery - self.tx_cost)

    def idle(self, next_hop):
        return not self.queues.get(next_hop) and next_hop not in self.inflight

    def queued(self):
        buffers = itertools.chain(self.pending.values(), self.relay.values(), self.queues.values())
        return sum(len(buffer) for buffer in buffers)


@dataclass(frozen=True)
class Checkpoint:
    time: float
    offered: int
    delivered: int
    in_flight: int
    queued: int
    dropped: int

    @property
    def balanced(self):
        return self.delivered + self.in_flight + self.queued + self.dropped == self.offered


class Simulator:
    """One run of one scenario; not reusable"""

    def __init__(self, scenario: Scenario, trace=False):
        diagnostics = validate_scenario(scenario)
        if diagnostics:
            raise SimulationError('invalid scenario: ' + '; '.join(str(d) for d in diagnostics))

        self.scenario = scenario
        self.params = scenario.params
        self.protocol = scenario.protocol
        self.rng = RngStreams(scenario.seed)
        self.links = {link.key: replace(link) for link in scenario.links}
        self.adjacency: Dict[NodeId, List[NodeId]] = {node.id: [] for node in scenario.nodes}
        for link in scenario.links:
            self.adjacency[link.a].append(link.b)
            self.adjacency[link.b].append(link.a)
        for neighbors in self.adjacency.values():
            neighbors.sort()
        self.nodes: Dict[NodeId, NodeRuntime] = {spec.id: self._build_node(spec) for spec in scenario.nodes}

        self.now = 0.0
        self.queue: List[Event] = []
        self.events_processed = 0
        self.trace_records = [] if trace else None
        self.counters = Counter()
        self.packets: Dict[int, Packet] = {}
        self.flow_metrics = [FlowMetrics(flow=i, source=flow.source, dest=flow.dest)
                             for i, flow in enumerate(scenario.flows)]
        self.deliveries: List[DeliveryRecord] = []
        self.trust_samples: List[TrustSample] = []
        self.split_samples: List[SplitSample] = []

        self._sequence = itertools.count()
        self._packet_ids = itertools.count(1)
        self._tx_ids = itertools.count(1)
        self._current_sequence = -1
        self._delays = [[] for _ in scenario.flows]
        self._service = [[] for _ in scenario.flows]
        self._arrivals_left = 0
        self._outstanding = 0
        self._busy_slots = 0
        self._closed = False
        self._handlers = {
            EventKind.TRAFFIC_ARRIVAL: self._on_traffic_arrival,
            EventKind.BATCH_PLAN: self._on_batch_plan,
            EventKind.TRANSMIT_END: self._on_transmit_end,
            EventKind.DELIVER: self._on_deliver,
            EventKind.ACK: self._on_ack,
            EventKind.ACK_TIMEOUT: self._on_ack_timeout,
            EventKind.CONTROL: self._on_control,
            EventKind.BATTERY_BROADCAST: self._on_battery_broadcast,
            EventKind.LINK_STATE_CHANGE: self._on_link_state_change,
            EventKind.DISCOVERY_RETRY: self._on_discovery_retry,
            EventKind.TRUST_SAMPLE: self._on_trust_sample,
        }
        self._schedule_initial()

    def _build_node(self, spec):
        param = lambda name: self.scenario.node_param(spec.id, name)
        node = NodeRuntime(
            id=spec.id,
            routing=RoutingNode(spec.id, self.protocol, max_paths=int(param('max_paths')),
                                route_lifetime=self.params.route_lifetime, ttl=self.params.ttl),
            battery_cfg=BatteryInfluenceConfig(gamma=param('gamma')),
            battery=spec.battery,
            idle_drain=param('idle_drain'),
            tx_cost=param('tx_cost'),
            batch=int(param('batch')),
        )
        for neighbor in self.adjacency[spec.id]:
            node.neighbors[neighbor] = new_assessment(neighbor, window=int(param('window')),
                                                      regen_rate=param('regen_rate'),
                                                      degradation=param('degradation'))
        return node

    def _schedule_initial(self):
        if self.protocol is Protocol.TRUST_AOMDV:
            for node_id in sorted(self.nodes):
                self._schedule(0.0, EventKind.BATTERY_BROADCAST, node_id)
        for event in sorted(self.scenario.events, key=lambda e: e.time):
            self._schedule(event.time, EventKind.LINK_STATE_CHANGE, event.a, peer=event.b, up=event.up)
        for index, flow in enumerate(self.scenario.flows):
            if flow.rate is None:
                self._schedule(flow.start, EventKind.TRAFFIC_ARRIVAL, flow.source, flow=index, count=flow.count)
            else:
                for when in flow.arrival_times():
                    self._schedule(when, EventKind.TRAFFIC_ARRIVAL, flow.source, flow=index, count=1)
            self._arrivals_left += flow.count
        self._schedule(self.params.sample_period, EventKind.TRUST_SAMPLE, -1)

    # -- engine ---------------------------------------------------------------

    def _schedule(self, time, kind, node, **data):
        event = Event(time=time, sequence=next(self._sequence), kind=kind, node=node, data=data)
        heapq.heappush(self.queue, event)
        return event

    def _record(self, kind, node, peer=None, detail=''):
        if self.trace_records is not None:
            label = kind.value if isinstance(kind, EventKind) else str(kind)
            self.trace_records.append((self.now, self._current_sequence, label, node, peer, detail))

    def _link(self, a, b):
        link = self.links.get(link_key(a, b))
        if link is None:
            raise SimulationError(f"no link between {a} and {b}")
        return link

    def _timeout_delay(self, link):
        return 2.0 * link.t + self.params.timeout_epsilon * link.t

    def quiescent(self):
        return self._arrivals_left == 0 and self._outstanding == 0 and self._busy_slots == 0

    def step(self) -> Optional[Event]:
        """Execute the next event; None once the queue is empty"""
        if not self.queue:
            return None
        event = heapq.heappop(self.queue)
        if event.time < self.now:
            raise SimulationError(f"event at {event.time} scheduled before current time {self.now}")
        self.now = event.time
        self._current_sequence = event.sequence
        self.events_processed += 1
        self._handlers[event.kind](event)
        return event

    def run(self) -> RunReport:
        logger.info(f"Running {self.protocol.value}: {len(self.nodes)} nodes, "
                    f"{len(self.scenario.flows)} flows, seed {self.scenario.seed}")
        horizon = self.scenario.horizon
        while self.queue and not self.quiescent() and self.queue[0].time <= horizon:
            self.step()
        self.finish()
        report = self.report()
        logger.info(f"Finished at t={self.now:.6g}: {report.delivered}/{report.offered} delivered, "
                    f"{self.events_processed} events")
        return report

    def finish(self):
        """Close the run: anything still undelivered counts as dropped"""
        if self._closed:
            return
        self._closed = True
        dropped = 0
        for packet in self.packets.values():
            if packet.delivered is None:
                self.flow_metrics[packet.flow].dropped += 1
                dropped += 1
        if dropped:
            logger.warning(f"{dropped} packets undelivered at t={self.now:.6g}, counted as dropped")
        for node in self.nodes.values():
            node.pending.clear()
            node.relay.clear()
            node.queues.clear()
            node.inflight.clear()
        self._outstanding = 0
        self._busy_slots = 0

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            time=self.now,
            offered=sum(m.offered for m in self.flow_metrics),
            delivered=sum(m.delivered for m in self.flow_metrics),
            in_flight=sum(1 for node in self.nodes.values()
                          for slot in node.inflight.values() if not slot.handed_over),
            queued=sum(node.queued() for node in self.nodes.values()),
            dropped=sum(m.dropped for m in self.flow_metrics),
        )

    def report(self) -> RunReport:
        flows = []
        for index, metrics in enumerate(self.flow_metrics):
            mean, median, p95 = summarize_delays(self._delays[index])
            service = float(np.mean(self._service[index])) if self._service[index] else math.nan
            flows.append(replace(metrics, mean_delay=mean, median_delay=median, p95_delay=p95,
                                 mean_service_delay=service))
        routing_counts = Counter()
        for node in self.nodes.values():
            routing_counts.update(node.routing.counters)
        control = ControlOverhead(
            rreq=self.counters['RREQ'],
            rrep=self.counters['RREP'],
            rerr=self.counters['RERR'],
            beacons=self.counters['BEACON'],
            control_retries=self.counters['control_retries'],
            malformed_rreq=routing_counts['malformed_rreq'],
            duplicate_rreq=routing_counts['duplicate_rreq'],
            rrep_dropped=(routing_counts['rrep_no_reverse'] + routing_counts['stale_rrep']
                          + routing_counts['rejected_rrep']),
            unmatched_acks=self.counters['unmatched_acks'],
            uniform_fallbacks=self.counters['uniform_fallbacks'],
        )
        return RunReport(
            protocol=self.protocol.value,
            seed=self.scenario.seed,
            horizon=self.scenario.horizon,
            end_time=self.now,
            events_processed=self.events_processed,
            flows=flows,
            control=control,
            trust_samples=list(self.trust_samples),
            split_samples=list(self.split_samples),
            deliveries=list(self.deliveries),
        )

    # -- traffic and batching ------------------------------------------------

    def _on_traffic_arrival(self, event):
        index = event.data['flow']
        count = event.data['count']
        flow = self.scenario.flows[index]
        node = self.nodes[flow.source]
        buffer = node.pending.setdefault(flow.dest, deque())
        for _ in range(count):
            packet = Packet(uid=next(self._packet_ids), flow=index, source=flow.source,
                            dest=flow.dest, created=self.now)
            self.packets[packet.uid] = packet
            buffer.append(packet)
        self._arrivals_left -= count
        self._outstanding += count
        self.flow_metrics[index].offered += count
        self._record(EventKind.TRAFFIC_ARRIVAL, node.id, flow.dest, f"flow={index} packets={count}")
        self._request_plan(node, flow.dest)

    def _request_plan(self, node, dest):
        if dest in node.plan_scheduled:
            return
        node.plan_scheduled.add(dest)
        self._schedule(self.now, EventKind.BATCH_PLAN, node.id, dest=dest)

    def _on_batch_plan(self, event):
        node = self.nodes[event.node]
        dest = event.data['dest']
        node.plan_scheduled.discard(dest)
        pending = node.pending.get(dest)
        if not pending or not node.alive(self.now):
            return
        paths = node.routing.table.usable_paths(dest, self.now)
        if not paths:
            self._record(EventKind.BATCH_PLAN, node.id, dest, 'no route')
            self._discover(node, dest)
            return
        self._maybe_replenish(node, dest, paths)
        if not any(node.idle(path.next_hop) for path in paths):
            return

        packets = [pending.popleft() for _ in range(min(node.batch, len(pending)))]
        assignments = self.forward_policy(node, dest, packets, self.now)
        for next_hop, assigned in assignments:
            node.queues.setdefault(next_hop, deque()).extend(assigned)
        self._record(EventKind.BATCH_PLAN, node.id, dest,
                     ' '.join(f"{next_hop}:{len(assigned)}" for next_hop, assigned in assignments))
        for next_hop, _ in assignments:
            self._pump(node, next_hop)

    def forward_policy(self, node: NodeRuntime, dest, packets, now):
        """
        Assign a batch of source packets to next hops.

        AODV and AOMDV put everything on the lowest-hop path (AOMDV keeps the
        others for failover). TRUST_AOMDV scores every path by composite link
        probability and splits in proportion to the scores.

        Returns [(next_hop, [packets])]; with no usable path the packets go
        back to the pending buffer, discovery starts and [] is returned.
        """
        paths = node.routing.table.usable_paths(dest, now)
        if not paths:
            node.pending.setdefault(dest, deque()).extendleft(reversed(packets))
            self._discover(node, dest)
            return []

        if self.protocol is not Protocol.TRUST_AOMDV or len(paths) == 1:
            best = node.routing.table.best_path(dest, now)
            plan = single_path_plan(best.next_hop, len(packets))
        else:
            scores = []
            for path in paths:
                assessment = node.neighbors[path.next_hop]
                scores.append(PathScore(
                    next_hop=path.next_hop,
                    probability=composite_link_probability(assessment, now, path.hop_count, node.battery_cfg),
                    hop_count=path.hop_count,
                ))
                self._sample_trust(node, path.next_hop)
            plan = plan_split(scores, len(packets))
            if plan.uniform_fallback:
                self.counters['uniform_fallbacks'] += 1

        shares = dict(plan.fractions)
        assignments = []
        cursor = 0
        for next_hop, count in plan.packet_counts:
            self.split_samples.append(SplitSample(time=now, node=node.id, dest=dest, next_hop=next_hop,
                                                  fraction=shares[next_hop], packets=count))
            if count:
                assignments.append((next_hop, packets[cursor:cursor + count]))
                node.routing.table.refresh_path(dest, next_hop, now)
            cursor += count
        return assignments

    def _maybe_replenish(self, node, dest, paths):
        interval = self.params.replenish_interval
        if not self.protocol.multipath or interval <= 0:
            return
        if len(paths) >= node.routing.table.max_paths:
            return
        if self.now - node.last_flood.get(dest, -math.inf) < interval:
            return
        actions = node.routing.originate_path_replenishment(dest, self.now)
        if actions:
            node.last_flood[dest] = self.now
            self._execute(node, actions)

    def _discover(self, node, dest):
        if dest in node.discovering or not node.alive(self.now):
            return
        actions = node.routing.originate_route_discovery(dest, self.now)
        if not actions:
            return
        node.discovering.add(dest)
        node.last_flood[dest] = self.now
        self._schedule(self.now + self.params.rreq_retry, EventKind.DISCOVERY_RETRY, node.id, dest=dest)
        self._execute(node, actions)

    def _on_discovery_retry(self, event):
        node = self.nodes[event.node]
        dest = event.data['dest']
        node.discovering.discard(dest)
        if not node.pending.get(dest) and not node.relay.get(dest):
            return
        self._record(EventKind.DISCOVERY_RETRY, node.id, dest)
        if node.routing.table.usable_paths(dest, self.now):
            self._resume(node, dest)
        else:
            self._discover(node, dest)

    def _resume(self, node, dest):
        if node.pending.get(dest):
            self._request_plan(node, dest)
        if node.relay.get(dest):
            self._route_relay(node, dest)

    # -- data plane ---------------------------------------------------------------

    def _pump(self, node, next_hop):
        if next_hop in node.inflight:
            return
        queue = node.queues.get(next_hop)
        if not queue:
            return
        if not self._link(node.id, next_hop).up:
            self._reroute(node, next_hop)
            return
        if not node.alive(self.now):
            return
        self.transmit_data(node, next_hop, queue.popleft(), self.now)

    def transmit_data(self, node: NodeRuntime, next_hop, packet: Packet, now):
        """Start one stop-and-wait transmission; returns the events it scheduled"""
        link = self._link(node.id, next_hop)
        if next_hop in node.inflight or not link.up:
            node.queues.setdefault(next_hop, deque()).append(packet)
            return []

        tx_id = next(self._tx_ids)
        packet.attempts += 1
        if packet.attempts > 1:
            self.flow_metrics[packet.flow].retransmissions += 1
        if node.id == packet.source and packet.first_tx is None:
            packet.first_tx = now
        node.inflight[next_hop] = InFlight(packet=packet, tx_id=tx_id, started=now)
        self._busy_slots += 1
        node.spend(now)
        self._record(EventKind.TRANSMIT_START, node.id, next_hop,
                     f"packet={packet.uid} tx={tx_id} attempt={packet.attempts}")
        self._notify_neighbors(node, now, True)

        scheduled = [self._schedule(now + link.t, EventKind.TRANSMIT_END, node.id, peer=next_hop, tx=tx_id)]
        if self.rng.draw(node.id, next_hop, 'data', link.q):
            scheduled.append(self._schedule(now + link.t, EventKind.DELIVER, next_hop, sender=node.id, tx=tx_id))
        else:
            scheduled.append(self._schedule(now + self._timeout_delay(link), EventKind.ACK_TIMEOUT,
                                            node.id, peer=next_hop, tx=tx_id))
        return scheduled

    def _notify_neighbors(self, node, now, transmitting):
        for neighbor_id in self.adjacency[node.id]:
            if not self._link(node.id, neighbor_id).up:
                continue
            neighbor = self.nodes[neighbor_id]
            if neighbor.alive(now):
                neighbor.neighbors[node.id].observe(now, transmitting)

    def _on_transmit_end(self, event):
        node = self.nodes[event.node]
        self._record(EventKind.TRANSMIT_END, node.id, event.data['peer'], f"tx={event.data['tx']}")
        self._notify_neighbors(node, self.now, False)

    def _on_deliver(self, event):
        receiver = self.nodes[event.node]
        sender = self.nodes[event.data['sender']]
        tx_id = event.data['tx']
        slot = sender.inflight.get(receiver.id)
        if slot is None or slot.tx_id != tx_id:
            return
        link = self._link(sender.id, receiver.id)
        packet = slot.packet
        if not link.up or not receiver.alive(self.now):
            self._record(EventKind.DELIVER, receiver.id, sender.id, f"packet={packet.uid} tx={tx_id} lost")
            self._schedule(slot.started + self._timeout_delay(link), EventKind.ACK_TIMEOUT,
                           sender.id, peer=receiver.id, tx=tx_id)
            return

        slot.handed_over = True
        packet.hops += 1
        packet.attempts = 0
        self._record(EventKind.DELIVER, receiver.id, sender.id, f"packet={packet.uid} tx={tx_id}")
        self._schedule(self.now + link.t, EventKind.ACK, sender.id, peer=receiver.id, tx=tx_id)
        self._receive_data(receiver, packet, sender.id)

    def _receive_data(self, node, packet, sender):
        if packet.dest == node.id:
            packet.delivered = self.now
            self._outstanding -= 1
            self.flow_metrics[packet.flow].delivered += 1
            self._delays[packet.flow].append(self.now - packet.created)
            self.deliveries.append(DeliveryRecord(packet=packet.uid, flow=packet.flow, created=packet.created,
                                                  delivered=self.now, hops=packet.hops))
            return
        node.relay.setdefault(packet.dest, deque()).append(packet)
        self._route_relay(node, packet.dest)

    def _route_relay(self, node, dest):
        """Intermediate hops forward on their best path without splitting"""
        buffered = node.relay.get(dest)
        if not buffered or not node.alive(self.now):
            return
        best = node.routing.table.best_path(dest, self.now)
        if best is None:
            self._discover(node, dest)
            return
        node.queues.setdefault(best.next_hop, deque()).extend(buffered)
        buffered.clear()
        node.routing.table.refresh_path(dest, best.next_hop, self.now)
        self._pump(node, best.next_hop)

    def _on_ack(self, event):
        self.on_ack_or_timeout(self.nodes[event.node], event.data['peer'], event.data['tx'], True, self.now)

    def _on_ack_timeout(self, event):
        self.on_ack_or_timeout(self.nodes[event.node], event.data['peer'], event.data['tx'], False, self.now)

    def on_ack_or_timeout(self, node: NodeRuntime, next_hop, tx_id, ack, now):
        """Close the ARQ round for (node, next_hop); False when nothing matched"""
        kind = EventKind.ACK if ack else EventKind.ACK_TIMEOUT
        slot = node.inflight.get(next_hop)
        if slot is None or slot.tx_id != tx_id:
            self.counters['unmatched_acks'] += 1
            self._record(kind, node.id, next_hop, f"tx={tx_id} unmatched")
            logger.debug(f"node {node.id}: unmatched {kind.value} from {next_hop} for tx {tx_id}")
            return False

        del node.inflight[next_hop]
        self._busy_slots -= 1
        node.neighbors[next_hop].record_ack(ack)
        packet = slot.packet
        self._record(kind, node.id, next_hop, f"packet={packet.uid} tx={tx_id}")
        if ack:
            node.routing.table.refresh_path(packet.dest, next_hop, now)
            if node.id == packet.source and packet.first_ack is None:
                packet.first_ack = now
                self._service[packet.flow].append(now - packet.first_tx)
        else:
            node.queues.setdefault(next_hop, deque()).appendleft(packet)

        self._pump(node, next_hop)
        if node.idle(next_hop):
            for dest in sorted(node.pending):
                if node.pending[dest]:
                    self._request_plan(node, dest)
        return True

    def _reroute(self, node, next_hop):
        """Move packets queued for an unreachable next hop back to route selection"""
        queue = node.queues.pop(next_hop, None)
        if not queue:
            return
        own = [packet for packet in queue if packet.source == node.id]
        forwarded = [packet for packet in queue if packet.source != node.id]
        for packet in reversed(own):
            node.pending.setdefault(packet.dest, deque()).appendleft(packet)
        for packet in forwarded:
            node.relay.setdefault(packet.dest, deque()).append(packet)
        self._record(EventKind.LINK_STATE_CHANGE, node.id, next_hop, f"rerouted={len(queue)}")
        for dest in sorted({packet.dest for packet in own}):
            self._request_plan(node, dest)
        for dest in sorted({packet.dest for packet in forwarded}):
            self._route_relay(node, dest)

    # -- control plane ------------------------------------------------------

    def _execute(self, node, actions):
        for action in actions:
            if isinstance(action, Broadcast):
                self._send_control(node, None, action.message)
            elif isinstance(action, Unicast):
                self._send_control(node, action.next_hop, action.message)
            elif isinstance(action, RouteFound):
                self._record(EventKind.CONTROL, node.id, action.dest, 'route found')
                self._resume(node, action.dest)

    def _send_control(self, node, target, message):
        if not node.alive(self.now):
            return
        self.counters[message.kind] += 1
        detail = describe(message)

        if target is None:
            node.spend(self.now)
            self._record(EventKind.CONTROL, node.id, None, f"send {detail}")
            self._notify_neighbors(node, self.now, True)
            for neighbor in self.adjacency[node.id]:
                link = self._link(node.id, neighbor)
                if link.up and self.rng.draw(node.id, neighbor, 'control', link.q):
                    self._schedule(self.now + link.t, EventKind.CONTROL, neighbor, sender=node.id, message=message)
            return

        link = self._link(node.id, target)
        if not link.up:
            self.counters['control_lost'] += 1
            return
        self._record(EventKind.CONTROL, node.id, target, f"send {detail}")
        for attempt in range(self.params.control_retries + 1):
            if attempt:
                self.counters['control_retries'] += 1
            node.spend(self.now)
            self._notify_neighbors(node, self.now, True)
            if self.rng.draw(node.id, target, 'control', link.q):
                arrival = self.now + attempt * 2.0 * link.t + link.t
                self._schedule(arrival, EventKind.CONTROL, target, sender=node.id, message=message)
                return
        self.counters['control_lost'] += 1
        logger.debug(f"node {node.id}: {message.kind} to {target} lost after "
                     f"{self.params.control_retries + 1} attempts")

    def _on_control(self, event):
        receiver = self.nodes[event.node]
        sender = event.data['sender']
        message = event.data['message']
        if not self._link(sender, receiver.id).up or not receiver.alive(self.now):
            self._record(EventKind.CONTROL, receiver.id, sender, f"lost {describe(message)}")
            return
        self._record(EventKind.CONTROL, receiver.id, sender, f"recv {describe(message)}")
        if isinstance(message, BatteryBeacon):
            receiver.neighbors[sender].record_battery(BatterySample(time=message.time, level=message.level))
            return
        self._execute(receiver, receiver.routing.process(message, sender, self.now))

    def _on_battery_broadcast(self, event):
        self.broadcast_battery(self.nodes[event.node], self.now)

    def broadcast_battery(self, node: NodeRuntime, now):
        """Beacon the current level to every neighbor and schedule the next beacon"""
        level = node.level(now)
        if level <= 0:
            self._record(EventKind.BATTERY_BROADCAST, node.id, None, 'dead')
            return
        self._record(EventKind.BATTERY_BROADCAST, node.id, None, f"level={level:.6g}")
        self._send_control(node, None, BatteryBeacon(node=node.id, time=now, level=level))
        self._schedule(now + self.params.battery_period, EventKind.BATTERY_BROADCAST, node.id)

    def _on_link_state_change(self, event):
        a, b, up = event.node, event.data['peer'], event.data['up']
        link = self._link(a, b)
        if link.up == up:
            return
        link.up = up
        self._record(EventKind.LINK_STATE_CHANGE, a, b, 'up' if up else 'down')
        for here, there in ((a, b), (b, a)):
            node = self.nodes[here]
            if up:
                self._pump(node, there)
                continue
            self._execute(node, node.routing.handle_link_failure(there, self.now))
            self._reroute(node, there)

    # -- sampling -------------------------------------------------------------

    def _sample_trust(self, node, neighbor):
        assessment = node.neighbors[neighbor]
        self.trust_samples.append(TrustSample(
            time=self.now,
            node=node.id,
            neighbor=neighbor,
            estimate=trust_expectation(assessment.trust),
            ground_truth=self._link(node.id, neighbor).q,
        ))

    def _on_trust_sample(self, event):
        taken = 0
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            for neighbor in sorted(node.neighbors):
                if node.neighbors[neighbor].trust.outcomes:
                    self._sample_trust(node, neighbor)
                    taken += 1
        self._record(EventKind.TRUST_SAMPLE, -1, None, f"samples={taken}")
        self._schedule(self.now + self.params.sample_period, EventKind.TRUST_SAMPLE, -1)


def run(scenario: Scenario) -> RunReport:
    return Simulator(scenario).run()


def run_with_trace(scenario: Scenario):
    """Run and also return the event trace records"""
    simulator = Simulator(scenario, trace=True)
    report = simulator.run()
    return report, simulator.trace_records
