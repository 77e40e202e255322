import os

import pytest

from models import GroundTruthLink, Protocol
from scenario_io import FlowSpec, LinkEvent, NodeSpec, Params, Scenario, load_scenario

ROOT = os.path.dirname(os.path.abspath(__file__))
SCENARIO_DIR = os.path.join(ROOT, 'scenarios')
GOLDEN_DIR = os.path.join(ROOT, 'golden')
BUNDLED = sorted(name[:-4] for name in os.listdir(SCENARIO_DIR) if name.endswith('.scn'))


def build_scenario(links, flows=(), protocol=Protocol.TRUST_AOMDV, horizon=100.0, seed=1,
                   events=(), nodes=None, **params):
    """
    Scenario from compact tuples.

    links: (a, b, q) or (a, b, q, t); flows: (source, dest, count) or
    (source, dest, count, start); events: (time, up, a, b).
    """
    if nodes is None:
        ids = sorted({node for link in links for node in link[:2]}
                     | {node for flow in flows for node in flow[:2]})
        nodes = [NodeSpec(id=node) for node in ids]
    return Scenario(
        nodes=nodes,
        links=[GroundTruthLink(a=l[0], b=l[1], q=l[2], t=l[3] if len(l) > 3 else 0.1) for l in links],
        flows=[FlowSpec(source=f[0], dest=f[1], count=f[2], start=f[3] if len(f) > 3 else 0.0) for f in flows],
        events=[LinkEvent(time=e[0], up=e[1], a=e[2], b=e[3]) for e in events],
        protocol=Protocol.parse(protocol),
        params=Params(**params),
        horizon=horizon,
        seed=seed,
    )


def chain(length, q=1.0):
    return [(i, i + 1, q) for i in range(length - 1)]


@pytest.fixture
def bundled():
    """Load a scenario shipped under scenarios/ by name"""
    return lambda name: load_scenario(os.path.join(SCENARIO_DIR, f"{name}.scn"))
