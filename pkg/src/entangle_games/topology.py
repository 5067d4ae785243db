"""Fixed network topologies: the leader/repeater/end-node mesh, the two-tree
leaf network, and the distance-decay random link model.

Topologies are immutable after construction and safe to share across trial
workers; all randomness is drawn from an explicit seed, so identical arguments
always produce byte-identical serialized output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import networkx as nx
import numpy as np

from .errors import ParameterError

SCHEMA_VERSION = 1

# Quality defaults for links created by the builders. gen_prob = 1.0 keeps the
# trend sweeps deterministic; stochastic configs override it per link.
DEFAULT_LATENCY_US = 25.0
DEFAULT_COHERENCE_US = 20_000.0
DEFAULT_DECOHERENCE_RATE = 1e-4
DEFAULT_GEN_PROB = 1.0
DEFAULT_LINK_PAYOFF = 0.9


class NodeRole(Enum):
    LEADER = "leader"
    REPEATER = "repeater"
    END_NODE = "end_node"
    LEAF = "leaf"


class ScenarioTag(Enum):
    SCENARIO1 = 1
    SCENARIO2 = 2
    CUSTOM = "custom"


@dataclass(frozen=True)
class Node:
    id: int
    role: NodeRole
    x: float
    y: float


@dataclass(frozen=True)
class LinkParams:
    """Physical parameters of one undirected link."""

    latency_us: float = DEFAULT_LATENCY_US
    coherence_us: float = DEFAULT_COHERENCE_US
    decoherence_rate: float = DEFAULT_DECOHERENCE_RATE
    gen_prob: float = DEFAULT_GEN_PROB

    def __post_init__(self) -> None:
        if not self.latency_us > 0:
            raise ParameterError(f"latency_us must be > 0, got {self.latency_us}")
        if not self.coherence_us > 0:
            raise ParameterError(f"coherence_us must be > 0, got {self.coherence_us}")
        if not (self.decoherence_rate >= 0 and math.isfinite(self.decoherence_rate)):
            raise ParameterError(f"decoherence_rate must be finite and >= 0, got {self.decoherence_rate}")
        if not 0 < self.gen_prob <= 1:
            raise ParameterError(f"gen_prob must be in (0, 1], got {self.gen_prob}")


@dataclass(frozen=True)
class Link:
    """Undirected edge with physical params and abstract game weights.

    `cost` is the latency-based game cost and `payoff` the fidelity-based game
    payoff used by the consensus game and the classical fidelity proxy.
    """

    a: int
    b: int
    params: LinkParams
    cost: float
    payoff: float

    def endpoints(self) -> frozenset[int]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class ChoiceOption:
    """One candidate next hop of a two-way choice, with its game weights."""

    next_hop: int
    cost: float
    payoff: float


@dataclass(frozen=True)
class LinkModelParams:
    """Control parameters of the distance-decay link probability model."""

    mu: float
    lam: float
    delta: float

    def __post_init__(self) -> None:
        if not 0 < self.mu <= 1:
            raise ParameterError(f"mu must be in (0, 1], got {self.mu}")
        if not 0 < self.lam <= 1:
            raise ParameterError(f"lambda must be in (0, 1], got {self.lam}")
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")

    @classmethod
    def for_positions(cls, mu: float, lam: float, positions) -> "LinkModelParams":
        """Build params with delta set to the maximum pairwise node distance."""
        pts = np.asarray(positions, dtype=float)
        if len(pts) < 2:
            raise ParameterError("need at least two positions to derive delta")
        diffs = pts[:, None, :] - pts[None, :, :]
        delta = float(np.max(np.sqrt((diffs**2).sum(axis=2))))
        if delta <= 0:
            raise ParameterError("positions are all coincident; delta would be 0")
        return cls(mu, lam, delta)


def link_probability(d: float, params: LinkModelParams) -> float:
    """Probability that a link exists between two nodes at distance d.

    p = mu * exp(-d / (delta * lambda)); delta is the maximum node distance of
    the deployment, so the result lies in (0, mu].
    """
    if d < 0:
        raise ParameterError(f"distance must be >= 0, got {d}")
    return params.mu * math.exp(-d / (params.delta * params.lam))


@dataclass(frozen=True)
class NetworkTopology:
    """Typed node set plus undirected link set; immutable once built."""

    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    scenario: ScenarioTag
    choices: dict[int, tuple[ChoiceOption, ChoiceOption]] = field(default_factory=dict)

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def roles(self) -> set[NodeRole]:
        return {n.role for n in self.nodes}

    def link_between(self, a: int, b: int) -> Link | None:
        key = frozenset((a, b))
        for link in self.links:
            if link.endpoints() == key:
                return link
        return None

    def graph(self) -> nx.Graph:
        """networkx view; rebuilt on each call so the topology stays immutable."""
        g = nx.Graph()
        for n in self.nodes:
            g.add_node(n.id, role=n.role)
        for l in self.links:
            g.add_edge(l.a, l.b, link=l, latency=l.params.latency_us, cost=l.cost)
        return g

    def distance(self, a: int, b: int) -> float:
        na, nb = self.nodes[a], self.nodes[b]
        return math.hypot(na.x - nb.x, na.y - nb.y)

    def with_link_updates(self, **param_overrides) -> "NetworkTopology":
        """Copy with every link's LinkParams fields replaced by the overrides."""
        new_links = tuple(
            replace(l, params=replace(l.params, **param_overrides)) for l in self.links
        )
        return replace(self, links=new_links)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        doc = {
            "schema": SCHEMA_VERSION,
            "scenario": self.scenario.value,
            "nodes": [
                {"id": n.id, "role": n.role.value, "x": n.x, "y": n.y} for n in self.nodes
            ],
            "links": [
                {
                    "a": l.a,
                    "b": l.b,
                    "latency_us": l.params.latency_us,
                    "coherence_us": l.params.coherence_us,
                    "decoherence_rate": l.params.decoherence_rate,
                    "gen_prob": l.params.gen_prob,
                    "cost": l.cost,
                    "payoff": l.payoff,
                }
                for l in self.links
            ],
        }
        if self.choices:
            doc["choices"] = [
                {
                    "node": node_id,
                    "options": [
                        {"next_hop": o.next_hop, "cost": o.cost, "payoff": o.payoff}
                        for o in opts
                    ],
                }
                for node_id, opts in sorted(self.choices.items())
            ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> "NetworkTopology":
        if doc.get("schema") != SCHEMA_VERSION:
            raise ParameterError(f"unsupported topology schema {doc.get('schema')!r}")
        nodes = tuple(
            Node(d["id"], NodeRole(d["role"]), float(d["x"]), float(d["y"]))
            for d in sorted(doc["nodes"], key=lambda d: d["id"])
        )
        links = tuple(
            Link(
                d["a"],
                d["b"],
                LinkParams(
                    d["latency_us"], d["coherence_us"], d["decoherence_rate"], d["gen_prob"]
                ),
                float(d["cost"]),
                float(d["payoff"]),
            )
            for d in doc["links"]
        )
        choices = {
            c["node"]: tuple(
                ChoiceOption(o["next_hop"], float(o["cost"]), float(o["payoff"]))
                for o in c["options"]
            )
            for c in doc.get("choices", [])
        }
        return cls(nodes, links, ScenarioTag(doc["scenario"]), choices)

    @classmethod
    def from_json(cls, text: str) -> "NetworkTopology":
        return cls.from_json_dict(json.loads(text))


def validate(topology: NetworkTopology) -> list[str]:
    """Check all structural invariants; returns one message per violation.

    Violations are data, not exceptions: builders are tested to return zero of
    them, but hand-built or deserialized topologies may carry any number.
    """
    out: list[str] = []
    ids = [n.id for n in topology.nodes]
    if ids != list(range(len(ids))):
        out.append(f"node ids must be the dense range 0..{len(ids) - 1}, got {ids}")

    allowed = {
        ScenarioTag.SCENARIO1: {NodeRole.LEADER, NodeRole.REPEATER, NodeRole.END_NODE},
        ScenarioTag.SCENARIO2: {NodeRole.LEADER, NodeRole.LEAF},
    }.get(topology.scenario)
    if allowed is not None:
        for n in topology.nodes:
            if n.role not in allowed:
                out.append(f"node {n.id}: role {n.role.value} not allowed in {topology.scenario.name}")

    seen: set[frozenset[int]] = set()
    n_count = len(topology.nodes)
    for l in topology.links:
        tag = f"link {l.a}-{l.b}"
        if l.a == l.b:
            out.append(f"{tag}: self-loop")
            continue
        if not (0 <= l.a < n_count and 0 <= l.b < n_count):
            out.append(f"{tag}: endpoint outside node range")
            continue
        key = l.endpoints()
        if key in seen:
            out.append(f"{tag}: duplicate edge")
        seen.add(key)
        if l.params.latency_us >= l.params.coherence_us:
            out.append(f"{tag}: unusable, latency {l.params.latency_us} >= coherence {l.params.coherence_us}")

    if topology.scenario is ScenarioTag.SCENARIO2:
        leader_edges = [
            l
            for l in topology.links
            if topology.nodes[l.a].role is NodeRole.LEADER
            and topology.nodes[l.b].role is NodeRole.LEADER
        ]
        if len(leader_edges) != 1:
            out.append(f"scenario 2 needs exactly one leader-leader edge, found {len(leader_edges)}")
        # trees joined by the single leader-leader edge stay acyclic, so the
        # whole link graph must be a forest
        g = nx.Graph((l.a, l.b) for l in topology.links if l.a != l.b)
        if g.number_of_nodes() and not nx.is_forest(g):
            out.append("scenario 2 links must form a forest plus the one leader-leader edge")
        for node_id, opts in topology.choices.items():
            if not 0 <= node_id < n_count:
                out.append(f"node {node_id}: choice set for unknown node")
                continue
            if opts[0].next_hop == opts[1].next_hop:
                out.append(f"node {node_id}: choice options must be distinct")
            if topology.nodes[node_id].role is NodeRole.LEADER:
                out.append(f"node {node_id}: leaders do not carry a next-hop choice")
    return out


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _leader_pairs(n: int, adjacency: str) -> list[tuple[int, int]]:
    if adjacency == "auto":
        adjacency = "complete" if n <= 3 else "ring"
    if adjacency == "complete":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if adjacency == "ring":
        if n == 2:
            return [(0, 1)]
        return [(i, (i + 1) % n) for i in range(n)]
    if adjacency == "chain":
        return [(i, i + 1) for i in range(n - 1)]
    raise ParameterError(f"unknown leader adjacency {adjacency!r}")


def build_scenario1(
    n_leaders: int,
    end_nodes_per_leader: int,
    repeaters_per_pair: int,
    link_defaults: LinkParams | None = None,
    model: LinkModelParams | None = None,
    seed: int = 0,
    leader_adjacency: str = "auto",
    probabilistic_links: bool = True,
    link_payoff: float = DEFAULT_LINK_PAYOFF,
    placement: str = "random",
) -> NetworkTopology:
    """Leader mesh: N leaders, M end-nodes each, L-repeater chains per leader pair.

    Leaders are adjacent per `leader_adjacency` (auto: complete graph for
    N <= 3, ring above). Node positions are drawn uniformly in the unit square
    from `seed`, or placed on a fixed circular layout with
    placement="geometric". On top of the fixed skeleton, extra links between
    not-yet-linked node pairs are sampled with the distance-decay probability
    when `probabilistic_links` is set. Extra links never replace skeleton
    links, so the scenario's connectivity is preserved.
    """
    if n_leaders < 2:
        raise ParameterError(f"need at least 2 leaders, got {n_leaders}")
    if end_nodes_per_leader < 1:
        raise ParameterError(f"need at least 1 end-node per leader, got {end_nodes_per_leader}")
    if repeaters_per_pair < 0:
        raise ParameterError(f"repeater count must be >= 0, got {repeaters_per_pair}")
    if placement not in ("random", "geometric"):
        raise ParameterError(f"unknown placement {placement!r}")
    defaults = link_defaults or LinkParams()

    rng = np.random.default_rng(seed)
    pairs = _leader_pairs(n_leaders, leader_adjacency)

    nodes: list[Node] = []

    def add_node(role: NodeRole, pos: tuple[float, float] | None) -> int:
        node_id = len(nodes)
        if placement == "random" or pos is None:
            x, y = float(rng.random()), float(rng.random())
        else:
            x, y = pos
        nodes.append(Node(node_id, role, x, y))
        return node_id

    def leader_pos(i: int) -> tuple[float, float]:
        angle = 2.0 * math.pi * i / n_leaders - math.pi / 2.0
        return 0.5 + 0.35 * math.cos(angle), 0.5 + 0.35 * math.sin(angle)

    leaders = [add_node(NodeRole.LEADER, leader_pos(i)) for i in range(n_leaders)]
    ends = {}
    for i, leader in enumerate(leaders):
        lx, ly = leader_pos(i)
        fan = []
        for k in range(end_nodes_per_leader):
            angle = 2.0 * math.pi * (i + (k + 1) / (end_nodes_per_leader + 1)) / n_leaders
            fan.append(
                add_node(NodeRole.END_NODE, (lx + 0.12 * math.cos(angle), ly + 0.12 * math.sin(angle)))
            )
        ends[leader] = fan

    links: list[Link] = []

    def add_link(a: int, b: int, params: LinkParams) -> None:
        links.append(Link(a, b, params, cost=params.latency_us, payoff=link_payoff))

    for leader in leaders:
        for e in ends[leader]:
            add_link(leader, e, defaults)
    for la, lb in pairs:
        (ax, ay), (bx, by) = leader_pos(leaders.index(la)), leader_pos(leaders.index(lb))
        chain = [
            add_node(
                NodeRole.REPEATER,
                (
                    ax + (bx - ax) * (k + 1) / (repeaters_per_pair + 1),
                    ay + (by - ay) * (k + 1) / (repeaters_per_pair + 1),
                ),
            )
            for k in range(repeaters_per_pair)
        ]
        hops = [la, *chain, lb]
        for u, v in zip(hops, hops[1:]):
            add_link(u, v, defaults)

    if probabilistic_links:
        if model is None:
            model = LinkModelParams.for_positions(0.5, 0.5, [(n.x, n.y) for n in nodes])
        existing = {l.endpoints() for l in links}
        dist = lambda a, b: math.hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y)
        for a in range(len(nodes)):
            for b in range(a + 1, len(nodes)):
                if frozenset((a, b)) in existing:
                    continue
                if rng.random() < link_probability(dist(a, b), model):
                    add_link(a, b, defaults)

    return NetworkTopology(tuple(nodes), tuple(links), ScenarioTag.SCENARIO1)


def build_scenario2(
    tree_sizes: list[int],
    link_weights: dict[tuple[int, int], tuple[float, float]] | None = None,
    seed: int = 0,
    link_defaults: LinkParams | None = None,
    cost_to_us: float = 1.0,
) -> NetworkTopology:
    """Two-way-choice tree network: one leader per tree plus leaf fans.

    Nodes are numbered leader-first per tree. Each leaf's recorded choice set
    is {its leader, the next leaf of the same tree}; single-leaf trees have no
    alternative and therefore no choice set. The first two leaders share the
    single fixed inter-tree link.

    `link_weights` maps ordered (node, next_hop) pairs to (latency cost,
    fidelity payoff) and overrides the seeded defaults, which draw costs from
    60..100 and payoffs from 0.3..0.8. Latency in microseconds is
    cost * `cost_to_us`.
    """
    if len(tree_sizes) < 2:
        raise ParameterError(f"need at least 2 trees, got {len(tree_sizes)}")
    for size in tree_sizes:
        if size < 1:
            raise ParameterError(f"every tree needs at least 1 leaf, got {size}")
    defaults = link_defaults or LinkParams()
    weights = dict(link_weights or {})
    rng = np.random.default_rng(seed)

    def weight_for(node: int, hop: int) -> tuple[float, float]:
        if (node, hop) in weights:
            return weights[(node, hop)]
        cost = float(rng.integers(60, 101))
        payoff = round(float(rng.uniform(0.3, 0.8)), 2)
        return cost, payoff

    nodes: list[Node] = []
    leaders: list[int] = []
    leaves_by_tree: list[list[int]] = []
    for t, size in enumerate(tree_sizes):
        leader_id = len(nodes)
        nodes.append(Node(leader_id, NodeRole.LEADER, float(t), 0.0))
        leaders.append(leader_id)
        leaves = []
        for k in range(size):
            leaf_id = len(nodes)
            nodes.append(Node(leaf_id, NodeRole.LEAF, float(t) + 0.1 * (k + 1), 1.0))
            leaves.append(leaf_id)
        leaves_by_tree.append(leaves)

    links: list[Link] = []
    choices: dict[int, tuple[ChoiceOption, ChoiceOption]] = {}

    def params_for(cost: float) -> LinkParams:
        return replace(defaults, latency_us=max(cost * cost_to_us, 1e-9))

    for leader, leaves in zip(leaders, leaves_by_tree):
        for idx, leaf in enumerate(leaves):
            up_cost, up_payoff = weight_for(leaf, leader)
            links.append(Link(leaf, leader, params_for(up_cost), up_cost, up_payoff))
            if len(leaves) > 1:
                sibling = leaves[(idx + 1) % len(leaves)]
                alt_cost, alt_payoff = weight_for(leaf, sibling)
                choices[leaf] = (
                    ChoiceOption(leader, up_cost, up_payoff),
                    ChoiceOption(sibling, alt_cost, alt_payoff),
                )

    trunk_cost, trunk_payoff = weight_for(leaders[0], leaders[1])
    links.append(Link(leaders[0], leaders[1], params_for(trunk_cost), trunk_cost, trunk_payoff))

    return NetworkTopology(tuple(nodes), tuple(links), ScenarioTag.SCENARIO2, choices)


# ---------------------------------------------------------------------------
# canonical fixtures
# ---------------------------------------------------------------------------

# Weight table for the canonical two-tree demo (trees of 4 and 5 leaves,
# leaders 0 and 5). Node 1's pair is the worked example: switching its uplink
# from leader 0 (cost 100, payoff 0.3) to sibling 2 (cost 60, payoff 0.8) is
# the one strictly improving move. Node 8's two options tie exactly in
# utility at unit weights (0.9 - 200/200 == 0.15 - 50/200), which is what
# arms the coin-flip consensus of the quantum variant; every other leaf is
# already on its better option.
CANONICAL_TWO_TREE_SIZES = [4, 5]
CANONICAL_TWO_TREE_WEIGHTS: dict[tuple[int, int], tuple[float, float]] = {
    (1, 0): (100.0, 0.3),
    (1, 2): (60.0, 0.8),
    (2, 0): (70.0, 0.6),
    (2, 3): (90.0, 0.4),
    (3, 0): (80.0, 0.5),
    (3, 4): (95.0, 0.4),
    (4, 0): (90.0, 0.7),
    (4, 1): (85.0, 0.4),
    (6, 5): (60.0, 0.8),
    (6, 7): (75.0, 0.5),
    (7, 5): (65.0, 0.7),
    (7, 8): (80.0, 0.45),
    (8, 5): (200.0, 0.9),
    (8, 9): (50.0, 0.15),
    (9, 5): (70.0, 0.75),
    (9, 10): (85.0, 0.5),
    (10, 5): (80.0, 0.65),
    (10, 6): (100.0, 0.55),
    (0, 5): (50.0, 0.9),
}


def canonical_two_tree_topology(
    link_defaults: LinkParams | None = None, cost_to_us: float = 1.0
) -> NetworkTopology:
    """The labeled two-tree demo network used by the consensus examples."""
    return build_scenario2(
        CANONICAL_TWO_TREE_SIZES,
        link_weights=CANONICAL_TWO_TREE_WEIGHTS,
        seed=0,
        link_defaults=link_defaults,
        cost_to_us=cost_to_us,
    )


def canonical_leader_mesh_topology(
    link_defaults: LinkParams | None = None,
) -> NetworkTopology:
    """The 21-node demo mesh: 3 leaders, 4 end-nodes each, 2-repeater chains.

    Fixed circular coordinates, no probabilistic extras; the deterministic
    baseline for the coalition-game examples.
    """
    return build_scenario1(
        3,
        4,
        2,
        link_defaults=link_defaults,
        seed=0,
        probabilistic_links=False,
        placement="geometric",
    )
