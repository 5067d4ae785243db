import pytest

from entangle_games import topology as topo


def line_topology(n, gen_prob=0.9, latency_us=100.0, payoff=0.95, decoherence_rate=1e-4,
                  coherence_us=50_000.0):
    """Simple n-node chain with uniform link parameters, for game fixtures."""
    nodes = tuple(topo.Node(i, topo.NodeRole.REPEATER, float(i), 0.0) for i in range(n))
    params = topo.LinkParams(
        latency_us=latency_us,
        coherence_us=coherence_us,
        decoherence_rate=decoherence_rate,
        gen_prob=gen_prob,
    )
    links = tuple(topo.Link(i, i + 1, params, latency_us, payoff) for i in range(n - 1))
    return topo.NetworkTopology(nodes, links, topo.ScenarioTag.CUSTOM)


@pytest.fixture
def five_line():
    return line_topology(5)
