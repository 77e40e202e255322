"""
End-to-end checks on whole runs: delay law, trust convergence, split
optimality, the diamond comparison, loop freedom, determinism and the
single-path degeneracy of AOMDV.
"""

import math

import numpy as np
import pytest

from conftest import BUNDLED, build_scenario, chain
from dispatch import PathScore, completion_bound, optimal_fractions
from models import Protocol
from scenario_io import format_trace, write_report
from simulator import RngStreams, Simulator, run, run_with_trace
from trust_core import empty_window, record_outcome, trust_expectation


@pytest.mark.parametrize('q', [0.3, 0.5, 0.9])
def test_stop_and_wait_delay_is_2t_over_q(q):
    scenario = build_scenario([(0, 1, q, 0.1)], flows=[(0, 1, 10_000)], protocol='aodv', horizon=1e6,
                              seed=3, timeout_epsilon=0.0, tx_cost=0.0, idle_drain=0.0)
    report = run(scenario)
    [flow] = report.flows
    assert flow.delivered == 10_000
    assert flow.mean_service_delay == pytest.approx(2 * 0.1 / q, rel=0.05)


def coverage_probability(q, window, tolerance):
    """Exact chance that a full window's estimate lands within tolerance of q"""
    total = 0.0
    for successes in range(window + 1):
        if abs((successes + 1) / (window + 2) - q) <= tolerance:
            total += math.comb(window, successes) * q ** successes * (1 - q) ** (window - successes)
    return total


def test_trust_converges_on_iid_link():
    q, window, tolerance = 0.7, 50, 0.12
    hits = 0
    for seed in range(100):
        streams = RngStreams(seed)
        state = empty_window(window)
        for _ in range(500):
            state = record_outcome(state, streams.draw(0, 1, 'data', q))
        hits += abs(trust_expectation(state) - q) <= tolerance
    # a 50-outcome window lands inside the band with probability ~0.93
    expected = coverage_probability(q, window, tolerance)
    assert 0.9 < expected < 0.96
    assert hits >= 85


def test_proportional_split_minimizes_completion_bound():
    grid = np.round(np.arange(1, 101) * 0.01, 2)
    shares = np.linspace(0.0, 1.0, 1001)
    violations = 0
    for p1 in grid:
        # every share against every p2 at once
        brute = np.maximum(shares[None, :] / p1, (1 - shares[None, :]) / grid[:, None]) * 2.0
        best_on_grid = brute.min(axis=1)
        for p2, floor in zip(grid, best_on_grid):
            scores = [PathScore(1, float(p1)), PathScore(2, float(p2))]
            bound = completion_bound(optimal_fractions(scores), scores, 1.0)
            violations += bound > floor * (1 + 1e-12)
    assert violations == 0


def test_trust_split_beats_single_path_on_diamond(bundled):
    diamond = bundled('diamond')
    assert diamond.params.degradation == 0.01
    delays = {protocol: [] for protocol in Protocol}
    for seed in range(1, 21):
        for protocol in Protocol:
            report = run(diamond.with_params(protocol=protocol.value, seed=seed))
            assert report.delivered == 500
            delays[protocol].append(report.mean_delay())
    trust = np.array(delays[Protocol.TRUST_AOMDV])
    assert (trust < np.array(delays[Protocol.AOMDV])).sum() >= 18
    assert (trust < np.array(delays[Protocol.AODV])).sum() >= 18


def random_topology(rng, protocol):
    size = int(rng.integers(3, 9))
    order = rng.permutation(size)
    # random spanning tree, then extra links
    links = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, size)}
    for a in range(size):
        for b in range(a + 1, size):
            if rng.random() < 0.3:
                links.add((a, b))
    dest = int(rng.integers(0, size))
    flows = [(node, dest, 1) for node in range(size) if node != dest]
    scenario = build_scenario([(a, b, 1.0) for a, b in sorted(links)], flows=flows, protocol=protocol,
                              horizon=50.0, seed=int(rng.integers(0, 1000)))
    return scenario, dest


def walk(sim, dest, node, hop_count, visited):
    assert node not in visited, f"loop through {node}"
    if node == dest:
        assert hop_count == 1
        return
    paths = sim.nodes[node].routing.table.usable_paths(dest, sim.now)
    assert paths, f"chain breaks at {node}"
    for path in paths:
        assert path.hop_count < hop_count
        walk(sim, dest, path.next_hop, path.hop_count, visited | {node})


@pytest.mark.parametrize('protocol', [Protocol.AOMDV, Protocol.TRUST_AOMDV])
def test_next_hop_chains_are_loop_free(protocol):
    rng = np.random.default_rng(5 if protocol is Protocol.AOMDV else 6)
    for _ in range(100):
        scenario, dest = random_topology(rng, protocol)
        sim = Simulator(scenario)
        report = sim.run()
        assert report.delivered == report.offered
        for node_id, node in sim.nodes.items():
            for path in node.routing.table.usable_paths(dest, sim.now):
                walk(sim, dest, path.next_hop, path.hop_count, {node_id})


@pytest.mark.parametrize('name', BUNDLED)
def test_runs_are_byte_identical(name, bundled):
    scenario = bundled(name)
    first_report, first_trace = run_with_trace(scenario)
    second_report, second_trace = run_with_trace(scenario)
    assert format_trace(first_trace) == format_trace(second_trace)
    for fmt in ('json', 'table'):
        assert write_report(first_report, fmt) == write_report(second_report, fmt)


def test_aomdv_with_one_path_behaves_like_aodv(bundled):
    scenario = bundled('chain5')
    assert scenario.params.max_paths == 1
    aomdv = run(scenario.with_params(protocol='aomdv'))
    aodv = run(scenario.with_params(protocol='aodv'))
    assert aomdv.deliveries == aodv.deliveries
    assert aomdv.delivered == aodv.delivered == 40
    assert [f.mean_delay for f in aomdv.flows] == [f.mean_delay for f in aodv.flows]


def test_chain_delivers_over_every_hop():
    report = run(build_scenario(chain(6), flows=[(0, 5, 5)], protocol='aomdv'))
    assert report.delivered == 5
    assert {record.hops for record in report.deliveries} == {5}
