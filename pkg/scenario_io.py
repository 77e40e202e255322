"""
Scenario documents, run reports and traces.

Scenario grammar (see SCENARIO_GUIDE.md for the full description):

    version 1
    [scenario]
    protocol = trust_aomdv
    horizon = 600
    seed = 7
    [params]
    window = 50
    [nodes]
    0
    1 battery=0.8 tx_cost=0
    [links]
    0 1 q=0.9 t=0.1
    [flows]
    0 1 count=500 start=0
    [events]
    12.5 down 0 1

Parsing never raises on bad input: parse_scenario returns (scenario, [])
or (None, diagnostics), each diagnostic naming the line and the key.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from models import GroundTruthLink, Protocol, link_key

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_SEED = 2 ** 64
SECTIONS = ('scenario', 'params', 'nodes', 'links', 'flows', 'events')


class ScenarioError(ValueError):
    """Invalid scenario; `diagnostics` lists every problem found"""

    def __init__(self, diagnostics, source=None):
        self.diagnostics = list(diagnostics)
        self.source = source
        prefix = f"{source}: " if source else ''
        super().__init__(prefix + '; '.join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    line: int
    key: str
    message: str

    def __str__(self):
        location = f"line {self.line}" if self.line else 'document'
        return f"{location}: {self.key}: {self.message}"


@dataclass
class Params:
    window: int = config.DEFAULT_WINDOW_SIZE
    gamma: float = config.DEFAULT_GAMMA
    regen_rate: float = config.DEFAULT_REGEN_RATE
    degradation: float = config.DEFAULT_DEGRADATION
    max_paths: int = config.DEFAULT_MAX_PATHS
    batch: int = config.DEFAULT_BATCH_SIZE
    timeout_epsilon: float = config.DEFAULT_TIMEOUT_EPSILON
    battery_period: float = config.DEFAULT_BATTERY_PERIOD
    route_lifetime: float = config.DEFAULT_ROUTE_LIFETIME
    ttl: int = config.DEFAULT_RREQ_TTL
    rreq_retry: float = config.DEFAULT_RREQ_RETRY
    replenish_interval: float = config.DEFAULT_REPLENISH_INTERVAL
    control_retries: int = config.DEFAULT_CONTROL_RETRIES
    transmission_time: float = config.DEFAULT_TRANSMISSION_TIME
    idle_drain: float = config.DEFAULT_IDLE_DRAIN
    tx_cost: float = config.DEFAULT_TX_COST
    sample_period: float = config.DEFAULT_SAMPLE_PERIOD


PARAM_TYPES = {f.name: f.type for f in fields(Params)}
INT_PARAMS = {'window', 'max_paths', 'batch', 'ttl', 'control_retries'}

# name -> (lowest allowed, whether the bound is exclusive)
PARAM_BOUNDS = {
    'window': (1, False),
    'gamma': (0, True),
    'regen_rate': (0, True),
    'degradation': (0, False),
    'max_paths': (1, False),
    'batch': (1, False),
    'timeout_epsilon': (0, False),
    'battery_period': (0, True),
    'route_lifetime': (0, True),
    'ttl': (1, False),
    'rreq_retry': (0, True),
    'replenish_interval': (0, False),
    'control_retries': (0, False),
    'transmission_time': (0, True),
    'idle_drain': (0, False),
    'tx_cost': (0, False),
    'sample_period': (0, True),
}

NODE_OVERRIDES = ('window', 'gamma', 'regen_rate', 'degradation', 'max_paths', 'batch', 'idle_drain', 'tx_cost')


@dataclass
class NodeSpec:
    id: int
    battery: float = config.DEFAULT_BATTERY_LEVEL
    overrides: Dict[str, float] = field(default_factory=dict)


@dataclass
class FlowSpec:
    source: int
    dest: int
    count: int
    start: float = 0.0
    rate: Optional[float] = None

    def arrival_times(self):
        if self.rate is None:
            return [self.start] * self.count
        return [self.start + i / self.rate for i in range(self.count)]


@dataclass
class LinkEvent:
    time: float
    up: bool
    a: int
    b: int


@dataclass
class Scenario:
    nodes: List[NodeSpec]
    links: List[GroundTruthLink]
    flows: List[FlowSpec] = field(default_factory=list)
    events: List[LinkEvent] = field(default_factory=list)
    protocol: Protocol = Protocol.TRUST_AOMDV
    params: Params = field(default_factory=Params)
    horizon: float = 100.0
    seed: int = 0

    def node_param(self, node_id, name):
        for node in self.nodes:
            if node.id == node_id and name in node.overrides:
                return node.overrides[name]
        return getattr(self.params, name)

    def with_params(self, **changes):
        """Copy with some [params]/[scenario] values replaced"""
        scenario = from_dict(to_dict(self))
        for name, value in changes.items():
            if name == 'protocol':
                scenario.protocol = Protocol.parse(value)
            elif name in ('horizon', 'seed'):
                setattr(scenario, name, type(getattr(scenario, name))(value))
            elif name in PARAM_TYPES:
                setattr(scenario.params, name, int(value) if name in INT_PARAMS else float(value))
            else:
                raise ScenarioError([Diagnostic(0, name, 'unknown parameter')])
        return scenario


def _strip_comment(line):
    return line.split('#', 1)[0].strip()


def _number(text, integer=False):
    value = int(text) if integer else float(text)
    if not integer and not math.isfinite(value):
        raise ValueError(f"'{text}' is not finite")
    return value


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ('true', 'yes', '1', 'up'):
        return True
    if lowered in ('false', 'no', '0', 'down'):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _key_values(tokens, lineno, section, allowed, diagnostics):
    values = {}
    for token in tokens:
        if '=' not in token:
            diagnostics.append(Diagnostic(lineno, section, f"expected key=value, got '{token}'"))
            continue
        key, _, raw = token.partition('=')
        if key not in allowed:
            diagnostics.append(Diagnostic(lineno, f"{section}.{key}", 'unknown key'))
            continue
        if key in values:
            diagnostics.append(Diagnostic(lineno, f"{section}.{key}", 'given twice'))
            continue
        values[key] = raw
    return values


def _check_bound(name, value, lineno, key, diagnostics):
    low, exclusive = PARAM_BOUNDS[name]
    if value < low or (exclusive and value == low):
        relation = '>' if exclusive else '>='
        diagnostics.append(Diagnostic(lineno, key, f"must be {relation} {low}, got {value}"))
        return False
    return True


def _node_id(token, lineno, key, diagnostics):
    try:
        node = int(token)
    except ValueError:
        diagnostics.append(Diagnostic(lineno, key, f"node id must be a non-negative integer, got '{token}'"))
        return None
    if node < 0:
        diagnostics.append(Diagnostic(lineno, key, f"node id must be a non-negative integer, got '{token}'"))
        return None
    return node


def parse_scenario(text) -> Tuple[Optional[Scenario], List[Diagnostic]]:
    """Parse and validate a scenario document"""
    diagnostics: List[Diagnostic] = []
    section = None
    saw_version = False
    header = {}
    params = Params()
    nodes: List[NodeSpec] = []
    node_lines: Dict[int, int] = {}
    raw_links = []
    raw_flows = []
    raw_events = []

    for lineno, raw_line in enumerate(str(text).splitlines(), start=1):
        line = _strip_comment(raw_line)
        if not line:
            continue

        if not saw_version:
            tokens = line.split()
            if len(tokens) == 2 and tokens[0] == 'version':
                saw_version = True
                if tokens[1] != str(FORMAT_VERSION):
                    diagnostics.append(Diagnostic(lineno, 'version', f"unsupported version '{tokens[1]}'"))
                continue
            diagnostics.append(Diagnostic(lineno, 'version', f"document must start with 'version {FORMAT_VERSION}'"))
            saw_version = True

        if line.startswith('['):
            name = line.strip('[]').strip()
            if not line.endswith(']') or name not in SECTIONS:
                diagnostics.append(Diagnostic(lineno, 'section', f"unknown section '{line}'"))
                section = '?'
            else:
                section = name
            continue

        if section is None:
            diagnostics.append(Diagnostic(lineno, 'section', 'content before the first section header'))
            continue
        if section == '?':
            continue

        if section in ('scenario', 'params'):
            key, sep, raw = line.partition('=')
            key, raw = key.strip(), raw.strip()
            if not sep or not key or not raw:
                diagnostics.append(Diagnostic(lineno, section, f"expected 'key = value', got '{line}'"))
                continue
            qualified = f"{section}.{key}"
            try:
                if section == 'scenario':
                    if key == 'protocol':
                        header[key] = Protocol.parse(raw)
                    elif key == 'horizon':
                        header[key] = _number(raw)
                    elif key == 'seed':
                        header[key] = _number(raw, integer=True)
                    else:
                        diagnostics.append(Diagnostic(lineno, qualified, 'unknown key'))
                        continue
                    header.setdefault('_lines', {})[key] = lineno
                else:
                    if key not in PARAM_TYPES:
                        diagnostics.append(Diagnostic(lineno, qualified, 'unknown key'))
                        continue
                    value = _number(raw, integer=key in INT_PARAMS)
                    if _check_bound(key, value, lineno, qualified, diagnostics):
                        setattr(params, key, value)
            except ValueError as e:
                diagnostics.append(Diagnostic(lineno, qualified, str(e)))
            continue

        tokens = line.split()
        if section == 'nodes':
            node = _node_id(tokens[0], lineno, 'nodes.id', diagnostics)
            if node is None:
                continue
            if node in node_lines:
                diagnostics.append(Diagnostic(lineno, 'nodes.id', f"node {node} already declared on line {node_lines[node]}"))
                continue
            values = _key_values(tokens[1:], lineno, 'nodes', ('battery',) + NODE_OVERRIDES, diagnostics)
            spec = NodeSpec(id=node)
            for key, raw in values.items():
                qualified = f"nodes.{key}"
                try:
                    value = _number(raw, integer=key in INT_PARAMS)
                except ValueError as e:
                    diagnostics.append(Diagnostic(lineno, qualified, str(e)))
                    continue
                if key == 'battery':
                    if not (0.0 <= value <= 1.0):
                        diagnostics.append(Diagnostic(lineno, qualified, f"must be in [0, 1], got {value}"))
                        continue
                    spec.battery = value
                elif _check_bound(key, value, lineno, qualified, diagnostics):
                    spec.overrides[key] = value
            node_lines[node] = lineno
            nodes.append(spec)

        elif section == 'links':
            if len(tokens) < 2:
                diagnostics.append(Diagnostic(lineno, 'links', "expected '<a> <b> q=<prob> [t=<seconds>] [up=<bool>]'"))
                continue
            a = _node_id(tokens[0], lineno, 'links.a', diagnostics)
            b = _node_id(tokens[1], lineno, 'links.b', diagnostics)
            values = _key_values(tokens[2:], lineno, 'links', ('q', 't', 'up'), diagnostics)
            raw_links.append((lineno, a, b, values))

        elif section == 'flows':
            if len(tokens) < 2:
                diagnostics.append(Diagnostic(lineno, 'flows', "expected '<source> <dest> count=<n> [start=<s>] [rate=<r>]'"))
                continue
            source = _node_id(tokens[0], lineno, 'flows.source', diagnostics)
            dest = _node_id(tokens[1], lineno, 'flows.dest', diagnostics)
            values = _key_values(tokens[2:], lineno, 'flows', ('count', 'start', 'rate'), diagnostics)
            raw_flows.append((lineno, source, dest, values))

        elif section == 'events':
            if len(tokens) != 4 or tokens[1] not in ('up', 'down'):
                diagnostics.append(Diagnostic(lineno, 'events', "expected '<time> up|down <a> <b>'"))
                continue
            try:
                when = _number(tokens[0])
            except ValueError as e:
                diagnostics.append(Diagnostic(lineno, 'events.time', str(e)))
                continue
            a = _node_id(tokens[2], lineno, 'events.a', diagnostics)
            b = _node_id(tokens[3], lineno, 'events.b', diagnostics)
            raw_events.append((lineno, when, tokens[1] == 'up', a, b))

    if not saw_version:
        diagnostics.append(Diagnostic(0, 'version', f"document must start with 'version {FORMAT_VERSION}'"))
    if 'horizon' not in header:
        diagnostics.append(Diagnostic(0, 'scenario.horizon', 'missing required field'))
    elif header['horizon'] <= 0:
        diagnostics.append(Diagnostic(header['_lines']['horizon'], 'scenario.horizon', f"must be > 0, got {header['horizon']}"))
    if 'seed' in header and not (0 <= header['seed'] < MAX_SEED):
        diagnostics.append(Diagnostic(header['_lines']['seed'], 'scenario.seed',
                                      f"must be a 64-bit unsigned integer, got {header['seed']}"))
    if not nodes:
        diagnostics.append(Diagnostic(0, 'nodes', 'no nodes declared'))

    declared = set(node_lines)
    links: List[GroundTruthLink] = []
    link_lines = {}
    for lineno, a, b, values in raw_links:
        ok = a is not None and b is not None
        for key, node in (('links.a', a), ('links.b', b)):
            if node is not None and node not in declared:
                diagnostics.append(Diagnostic(lineno, key, f"node {node} is not declared"))
                ok = False
        if 'q' not in values:
            diagnostics.append(Diagnostic(lineno, 'links.q', 'missing required field'))
            ok = False
        try:
            q = _number(values['q']) if 'q' in values else None
            t = _number(values['t']) if 't' in values else params.transmission_time
            up = _parse_bool(values['up']) if 'up' in values else True
        except ValueError as e:
            diagnostics.append(Diagnostic(lineno, 'links', str(e)))
            continue
        if q is not None and not (0.0 <= q <= 1.0):
            diagnostics.append(Diagnostic(lineno, 'links.q', f"must be in [0, 1], got {q}"))
            ok = False
        if t <= 0:
            diagnostics.append(Diagnostic(lineno, 'links.t', f"must be > 0, got {t}"))
            ok = False
        if ok and a == b:
            diagnostics.append(Diagnostic(lineno, 'links', f"self-link {a}-{b}"))
            ok = False
        if ok and link_key(a, b) in link_lines:
            diagnostics.append(Diagnostic(lineno, 'links', f"link {a}-{b} already declared on line {link_lines[link_key(a, b)]}"))
            ok = False
        if ok:
            link_lines[link_key(a, b)] = lineno
            links.append(GroundTruthLink(a=a, b=b, q=q, t=t, up=up))

    flows: List[FlowSpec] = []
    for lineno, source, dest, values in raw_flows:
        ok = source is not None and dest is not None
        for key, node in (('flows.source', source), ('flows.dest', dest)):
            if node is not None and node not in declared:
                diagnostics.append(Diagnostic(lineno, key, f"node {node} is not declared"))
                ok = False
        if ok and source == dest:
            diagnostics.append(Diagnostic(lineno, 'flows', f"flow from {source} to itself"))
            ok = False
        if 'count' not in values:
            diagnostics.append(Diagnostic(lineno, 'flows.count', 'missing required field'))
            continue
        try:
            count = _number(values['count'], integer=True)
            start = _number(values['start']) if 'start' in values else 0.0
            rate = _number(values['rate']) if 'rate' in values else None
        except ValueError as e:
            diagnostics.append(Diagnostic(lineno, 'flows', str(e)))
            continue
        if count < 1:
            diagnostics.append(Diagnostic(lineno, 'flows.count', f"must be >= 1, got {count}"))
            ok = False
        if start < 0:
            diagnostics.append(Diagnostic(lineno, 'flows.start', f"must be >= 0, got {start}"))
            ok = False
        if rate is not None and rate <= 0:
            diagnostics.append(Diagnostic(lineno, 'flows.rate', f"must be > 0, got {rate}"))
            ok = False
        if ok:
            flows.append(FlowSpec(source=source, dest=dest, count=count, start=start, rate=rate))

    events: List[LinkEvent] = []
    for lineno, when, up, a, b in raw_events:
        if a is None or b is None:
            continue
        if when < 0:
            diagnostics.append(Diagnostic(lineno, 'events.time', f"must be >= 0, got {when}"))
            continue
        if link_key(a, b) not in link_lines:
            diagnostics.append(Diagnostic(lineno, 'events', f"no declared link {a}-{b}"))
            continue
        events.append(LinkEvent(time=when, up=up, a=a, b=b))

    if diagnostics:
        return None, diagnostics

    scenario = Scenario(
        nodes=nodes,
        links=links,
        flows=flows,
        events=events,
        protocol=header.get('protocol', Protocol.TRUST_AOMDV),
        params=params,
        horizon=header['horizon'],
        seed=header.get('seed', 0),
    )
    return scenario, []


def validate_scenario(scenario: Scenario) -> List[Diagnostic]:
    """Re-check a Scenario built in code rather than parsed"""
    _, diagnostics = parse_scenario(format_scenario(scenario))
    return diagnostics


def load_scenario(path) -> Scenario:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError([Diagnostic(0, 'file', f"cannot read: {e.strerror or e}")], source=str(path))
    scenario, diagnostics = parse_scenario(text)
    if diagnostics:
        raise ScenarioError(diagnostics, source=str(path))
    logger.info(f"Loaded scenario {path}: {len(scenario.nodes)} nodes, {len(scenario.links)} links, "
                f"{len(scenario.flows)} flows")
    return scenario


def _fmt(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_scenario(scenario: Scenario) -> str:
    """Inverse of parse_scenario"""
    lines = [f"version {FORMAT_VERSION}", '', '[scenario]',
             f"protocol = {scenario.protocol.value}",
             f"horizon = {_fmt(float(scenario.horizon))}",
             f"seed = {scenario.seed}", '', '[params]']
    for f in fields(Params):
        value = getattr(scenario.params, f.name)
        lines.append(f"{f.name} = {_fmt(int(value) if f.name in INT_PARAMS else float(value))}")
    lines += ['', '[nodes]']
    for node in scenario.nodes:
        parts = [str(node.id), f"battery={_fmt(float(node.battery))}"]
        for key in sorted(node.overrides):
            value = node.overrides[key]
            parts.append(f"{key}={_fmt(int(value) if key in INT_PARAMS else float(value))}")
        lines.append(' '.join(parts))
    lines += ['', '[links]']
    for link in scenario.links:
        lines.append(f"{link.a} {link.b} q={_fmt(float(link.q))} t={_fmt(float(link.t))} up={_fmt(link.up)}")
    lines += ['', '[flows]']
    for flow in scenario.flows:
        line = f"{flow.source} {flow.dest} count={flow.count} start={_fmt(float(flow.start))}"
        if flow.rate is not None:
            line += f" rate={_fmt(float(flow.rate))}"
        lines.append(line)
    lines += ['', '[events]']
    for event in scenario.events:
        lines.append(f"{_fmt(float(event.time))} {'up' if event.up else 'down'} {event.a} {event.b}")
    return '\n'.join(lines) + '\n'


def to_dict(scenario: Scenario):
    data = asdict(scenario)
    data['protocol'] = scenario.protocol.value
    return data


def from_dict(data) -> Scenario:
    return Scenario(
        nodes=[NodeSpec(id=n['id'], battery=n['battery'], overrides=dict(n['overrides'])) for n in data['nodes']],
        links=[GroundTruthLink(**link) for link in data['links']],
        flows=[FlowSpec(**flow) for flow in data['flows']],
        events=[LinkEvent(**event) for event in data['events']],
        protocol=Protocol.parse(data['protocol']),
        params=Params(**data['params']),
        horizon=data['horizon'],
        seed=data['seed'],
    )


# -- run reports -----------------------------------------------------------

@dataclass
class FlowMetrics:
    flow: int
    source: int
    dest: int
    offered: int = 0
    delivered: int = 0
    dropped: int = 0
    retransmissions: int = 0
    mean_delay: float = math.nan
    median_delay: float = math.nan
    p95_delay: float = math.nan
    mean_service_delay: float = math.nan


@dataclass
class ControlOverhead:
    rreq: int = 0
    rrep: int = 0
    rerr: int = 0
    beacons: int = 0
    control_retries: int = 0
    malformed_rreq: int = 0
    duplicate_rreq: int = 0
    rrep_dropped: int = 0
    unmatched_acks: int = 0
    uniform_fallbacks: int = 0


@dataclass
class TrustSample:
    time: float
    node: int
    neighbor: int
    estimate: float
    ground_truth: float


@dataclass
class SplitSample:
    time: float
    node: int
    dest: int
    next_hop: int
    fraction: float
    packets: int


@dataclass
class DeliveryRecord:
    packet: int
    flow: int
    created: float
    delivered: float
    hops: int


@dataclass
class RunReport:
    protocol: str
    seed: int
    horizon: float
    end_time: float = 0.0
    events_processed: int = 0
    flows: List[FlowMetrics] = field(default_factory=list)
    control: ControlOverhead = field(default_factory=ControlOverhead)
    trust_samples: List[TrustSample] = field(default_factory=list)
    split_samples: List[SplitSample] = field(default_factory=list)
    deliveries: List[DeliveryRecord] = field(default_factory=list)

    @property
    def offered(self):
        return sum(flow.offered for flow in self.flows)

    @property
    def delivered(self):
        return sum(flow.delivered for flow in self.flows)

    def mean_delay(self):
        """Packet-weighted mean end-to-end delay over all flows"""
        delays = [record.delivered - record.created for record in self.deliveries]
        return float(np.mean(delays)) if delays else math.nan


def summarize_delays(delays):
    if len(delays) == 0:
        return math.nan, math.nan, math.nan
    values = np.asarray(delays, dtype=float)
    return float(values.mean()), float(np.median(values)), float(np.percentile(values, 95))


def _round(value):
    """Six significant digits; non-finite values become null"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{config.SIGNIFICANT_DIGITS}g}")
    if isinstance(value, dict):
        return {key: _round(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_round(item) for item in value]
    return value


def report_to_dict(report: RunReport):
    data = asdict(report)
    data['trust_samples'] = sorted(data['trust_samples'], key=lambda s: (s['time'], s['node'], s['neighbor']))
    data['split_samples'] = sorted(data['split_samples'], key=lambda s: (s['time'], s['node'], s['dest'], s['next_hop']))
    data['summary'] = {
        'offered': report.offered,
        'delivered': report.delivered,
        'mean_delay': report.mean_delay(),
    }
    return _round(data)


def report_tables(report: RunReport) -> Dict[str, pd.DataFrame]:
    """Report sections as DataFrames, rows in deterministic order"""
    tables = {
        'flows': pd.DataFrame([asdict(flow) for flow in report.flows],
                              columns=[f.name for f in fields(FlowMetrics)]),
        'control': pd.DataFrame([asdict(report.control)]),
        'trust': pd.DataFrame([asdict(sample) for sample in report.trust_samples],
                              columns=[f.name for f in fields(TrustSample)]),
        'splits': pd.DataFrame([asdict(sample) for sample in report.split_samples],
                               columns=[f.name for f in fields(SplitSample)]),
    }
    tables['trust'] = tables['trust'].sort_values(['time', 'node', 'neighbor'], kind='stable').reset_index(drop=True)
    tables['splits'] = tables['splits'].sort_values(['time', 'node', 'dest', 'next_hop'], kind='stable').reset_index(drop=True)
    return tables


def _float_text(value):
    return f"{value:.{config.SIGNIFICANT_DIGITS}g}"


def write_report(report: RunReport, fmt='json') -> str:
    """Serialize a report as 'json' (machine) or 'table' (human)"""
    if fmt == 'json':
        return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + '\n'
    if fmt != 'table':
        raise ValueError(f"unknown report format '{fmt}' (expected 'json' or 'table')")

    out = [
        f"protocol: {report.protocol}",
        f"seed: {report.seed}",
        f"horizon: {_float_text(float(report.horizon))}",
        f"end_time: {_float_text(float(report.end_time))}",
        f"events: {report.events_processed}",
        f"offered: {report.offered}",
        f"delivered: {report.delivered}",
    ]
    for name, table in report_tables(report).items():
        out.append('')
        out.append(f"== {name} ==")
        if table.empty:
            out.append('(none)')
        else:
            out.append(table.to_string(index=False, float_format=_float_text, na_rep='nan'))
    return '\n'.join(out) + '\n'


def save_report(report: RunReport, directory, trace=None):
    """Write report.json, report.txt, the CSV tables and optionally trace.tsv into `directory`"""
    try:
        os.makedirs(directory, exist_ok=True)
        written = []
        for name, fmt in (('report.json', 'json'), ('report.txt', 'table')):
            path = os.path.join(directory, name)
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(write_report(report, fmt))
            written.append(path)
        for name, table in report_tables(report).items():
            if name == 'control':
                continue
            path = os.path.join(directory, f"{name}.csv")
            table.to_csv(path, index=False, float_format='%.6g', lineterminator='\n')
            written.append(path)
        if trace is not None:
            written.append(write_trace(trace, os.path.join(directory, 'trace.tsv')))
        return written
    except OSError as e:
        raise OSError(f"cannot write report to {directory}: {e}") from e


# -- traces ------------------------------------------------------------------

TRACE_HEADER = ('time', 'seq', 'kind', 'node', 'peer', 'detail')


def format_trace(records) -> str:
    lines = ['\t'.join(TRACE_HEADER)]
    for time, seq, kind, node, peer, detail in records:
        lines.append(f"{time:.9f}\t{seq}\t{kind}\t{node}\t{'' if peer is None else peer}\t{detail}")
    return '\n'.join(lines) + '\n'


def write_trace(records, path):
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(format_trace(records))
    except OSError as e:
        raise OSError(f"cannot write trace to {path}: {e}") from e
    return path


def read_trace(path):
    """Load a trace file as a DataFrame (used by regression tests and notebooks)"""
    return pd.read_csv(path, sep='\t', dtype={'detail': str}, keep_default_na=False)
