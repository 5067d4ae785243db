"""Two-way next-hop consensus over the tree network.

Every non-leader node owns a choice between exactly two uplink candidates,
each carrying a latency cost and a fidelity payoff. Rounds evaluate all nodes
against the pre-round snapshot and apply switches in ascending node order; a
switch that would loop the next-hop pointer chain is blocked and recorded.

The classical round switches on strict utility improvement only. The quantum
round settles utility ties with a shared-Bell-pair coin flip (both parties
record the same bit) and runs every improving switch through an
entangled accept/decline game between the switcher and its new hop, built from
the (cost delta, payoff delta) of the move; at zero entanglement that game
reduces to the plain utility comparison, so tie-free fixtures behave
identically under both variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from . import quantum as q
from .errors import ParameterError, UnreachableError
from .topology import Link, NetworkTopology, NodeRole

TIE_EPSILON = 1e-6


@dataclass(frozen=True)
class HopEstimate:
    latency_cost: float
    fidelity_payoff: float

    def __post_init__(self) -> None:
        if not self.latency_cost > 0:
            raise ParameterError(f"latency_cost must be > 0, got {self.latency_cost}")
        if not 0.0 <= self.fidelity_payoff <= 1.0:
            raise ParameterError(f"fidelity_payoff must be in [0, 1], got {self.fidelity_payoff}")


@dataclass(frozen=True)
class ChoiceSet:
    """One node's two-way choice and its currently selected next hop."""

    node: int
    options: tuple[int, int]
    estimates: tuple[HopEstimate, HopEstimate]
    current: int

    def __post_init__(self) -> None:
        if self.options[0] == self.options[1]:
            raise ParameterError(f"node {self.node}: choice options must be distinct")
        if self.current not in self.options:
            raise ParameterError(f"node {self.node}: current hop {self.current} not among options")

    def estimate_for(self, hop: int) -> HopEstimate:
        return self.estimates[self.options.index(hop)]

    def alternative(self) -> int:
        return self.options[1] if self.current == self.options[0] else self.options[0]


@dataclass(frozen=True)
class SwitchRecord:
    node: int
    from_hop: int
    to_hop: int
    d_cost: float
    d_payoff: float

    def to_json_dict(self) -> dict:
        return {
            "node": self.node,
            "from": self.from_hop,
            "to": self.to_hop,
            "d_cost": self.d_cost,
            "d_payoff": self.d_payoff,
        }


@dataclass
class ConsensusOutcome:
    path: list[int]
    switches: list[SwitchRecord]
    total_cost: float
    end_to_end_fidelity: float
    converged: bool
    rounds: int = 0
    tie_events: list[dict] = field(default_factory=list)
    blocked: list[dict] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    realized_topology: NetworkTopology | None = None

    def to_json_dict(self) -> dict:
        return {
            "path": list(self.path),
            "switches": [s.to_json_dict() for s in self.switches],
            "total_cost": self.total_cost,
            "end_to_end_fidelity": self.end_to_end_fidelity,
            "converged": self.converged,
            "rounds": self.rounds,
            "tie_events": list(self.tie_events),
            "blocked": list(self.blocked),
        }


def hop_utility(est: HopEstimate, weights: tuple[float, float], cost_scale: float) -> float:
    """w_f * fidelity_payoff - w_c * latency_cost / cost_scale.

    `cost_scale` is the maximum cost in the node's choice set, which maps the
    cost term onto [0, 1] and makes it commensurable with the fidelity term.
    """
    w_f, w_c = weights
    if w_f < 0 or w_c < 0 or (w_f == 0 and w_c == 0):
        raise ParameterError(f"weights must be non-negative and not both zero, got {weights}")
    if not cost_scale > 0:
        raise ParameterError(f"cost_scale must be > 0, got {cost_scale}")
    return w_f * est.fidelity_payoff - w_c * est.latency_cost / cost_scale


def choice_state(topology: NetworkTopology) -> dict[int, ChoiceSet]:
    """Initial per-node choices; the current hop is the one with a live link."""
    state: dict[int, ChoiceSet] = {}
    for node_id, (opt_a, opt_b) in sorted(topology.choices.items()):
        linked = [o.next_hop for o in (opt_a, opt_b) if topology.link_between(node_id, o.next_hop)]
        if len(linked) != 1:
            raise ParameterError(
                f"node {node_id}: expected exactly one live option link, found {len(linked)}"
            )
        state[node_id] = ChoiceSet(
            node=node_id,
            options=(opt_a.next_hop, opt_b.next_hop),
            estimates=(
                HopEstimate(opt_a.cost, opt_a.payoff),
                HopEstimate(opt_b.cost, opt_b.payoff),
            ),
            current=linked[0],
        )
    return state


def _utilities(cs: ChoiceSet, weights) -> tuple[float, float]:
    scale = max(e.latency_cost for e in cs.estimates)
    cur = hop_utility(cs.estimate_for(cs.current), weights, scale)
    alt = hop_utility(cs.estimate_for(cs.alternative()), weights, scale)
    return cur, alt


def _creates_cycle(state: dict[int, ChoiceSet], node: int, new_hop: int) -> bool:
    """Would pointing `node` at `new_hop` loop the next-hop chain?"""
    seen = {node}
    cursor = new_hop
    while cursor in state:
        if cursor in seen:
            return True
        seen.add(cursor)
        cursor = state[cursor].current
    return False


def _apply_switches(state, desires, tie_nodes=frozenset()):
    """Commit desired switches in ascending node order, blocking cycles.

    Moves by nodes in `tie_nodes` were settled by a coin rather than a strict
    improvement, so they are reported separately from the switch records.
    """
    new_state = dict(state)
    switches: list[SwitchRecord] = []
    tie_moves: list[SwitchRecord] = []
    blocked: list[dict] = []
    for node in sorted(desires):
        target = desires[node]
        cs = new_state[node]
        if target == cs.current:
            continue
        if _creates_cycle(new_state, node, target):
            blocked.append({"node": node, "to": target, "reason": "cycle"})
            continue
        old = cs.estimate_for(cs.current)
        new = cs.estimate_for(target)
        record = SwitchRecord(
            node=node,
            from_hop=cs.current,
            to_hop=target,
            d_cost=new.latency_cost - old.latency_cost,
            d_payoff=new.fidelity_payoff - old.fidelity_payoff,
        )
        (tie_moves if node in tie_nodes else switches).append(record)
        new_state[node] = replace(cs, current=target)
    return new_state, switches, tie_moves, blocked


def classical_consensus_round(
    state: dict[int, ChoiceSet],
    weights: tuple[float, float] = (1.0, 1.0),
    order: list[int] | None = None,
    blocked_sink: list[dict] | None = None,
) -> tuple[dict[int, ChoiceSet], list[SwitchRecord]]:
    """One simultaneous-decision round: switch iff strictly better utility.

    Cycle-blocked switch attempts are appended to `blocked_sink` when given.
    """
    nodes = order if order is not None else sorted(state)
    desires: dict[int, int] = {}
    for node in nodes:
        cs = state[node]
        cur, alt = _utilities(cs, weights)
        desires[node] = cs.alternative() if alt > cur else cs.current
    new_state, switches, _, blocked = _apply_switches(state, desires)
    if blocked_sink is not None:
        blocked_sink.extend(blocked)
    return new_state, switches


def _ewl_accepts(gamma: float, d_utility: float, d_payoff: float) -> bool:
    """Accept/decline between switcher and new hop as a quantized 2x2 game.

    Outcome 11 (both commit) pays (utility gain, fidelity gain) and every
    other outcome pays nothing; the switch is accepted when joint commitment
    is a mutual best response over the classical moves.
    """
    matrix = np.zeros((4, 2))
    matrix[3] = (d_utility, max(d_payoff, 0.0))
    commit = q.SingleQubitUnitary(math.pi, 0.0)
    hold = q.SingleQubitUnitary(0.0, 0.0)
    joint = q.ewl_game(gamma, (commit, commit), matrix)
    switcher_holds = q.ewl_game(gamma, (hold, commit), matrix)
    hop_declines = q.ewl_game(gamma, (commit, hold), matrix)
    return joint[0] >= switcher_holds[0] - 1e-12 and joint[1] >= hop_declines[1] - 1e-12


def quantum_consensus_round(
    state: dict[int, ChoiceSet],
    weights: tuple[float, float],
    gamma: float,
    rng: np.random.Generator,
    tie_epsilon: float = TIE_EPSILON,
    coin_angle: float = 0.0,
    order: list[int] | None = None,
    settled: set[int] | None = None,
    blocked_sink: list[dict] | None = None,
) -> tuple[dict[int, ChoiceSet], list[SwitchRecord], list[dict]]:
    """Quantum round: coin-flip consensus on ties, entangled accept/decline
    on improvements.

    Ties within `tie_epsilon` are settled by a shared coin between the node
    and its candidate hop; both parties see the same bit (bit 1 = take the
    alternative). A settled tie is final: nodes listed in `settled` (updated
    in place) hold their decision in later rounds, so the round sequence
    still reaches a fixed point. Strict improvements must additionally pass
    `_ewl_accepts`. Returns (new state, switches, tie events); coin-settled
    moves appear in the tie events, not among the strict switches.
    """
    nodes = order if order is not None else sorted(state)
    settled = settled if settled is not None else set()
    desires: dict[int, int] = {}
    ties: list[dict] = []
    tie_nodes: set[int] = set()
    for node in nodes:
        cs = state[node]
        cur, alt = _utilities(cs, weights)
        if abs(alt - cur) <= tie_epsilon:
            if node in settled:
                desires[node] = cs.current
                continue
            bit_a, bit_b, agree = q.coin_flip_consensus(rng, coin_angle)
            desires[node] = cs.alternative() if bit_a == 1 else cs.current
            settled.add(node)
            tie_nodes.add(node)
            ties.append(
                {"node": node, "bit_node": bit_a, "bit_hop": bit_b, "agree": agree,
                 "chosen": desires[node]}
            )
        elif alt > cur:
            old = cs.estimate_for(cs.current)
            new = cs.estimate_for(cs.alternative())
            accepted = _ewl_accepts(gamma, alt - cur, new.fidelity_payoff - old.fidelity_payoff)
            desires[node] = cs.alternative() if accepted else cs.current
        else:
            desires[node] = cs.current
    new_state, switches, _, blocked = _apply_switches(state, desires, tie_nodes)
    if blocked_sink is not None:
        blocked_sink.extend(blocked)
    return new_state, switches, ties


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


def _tree_components(topology: NetworkTopology):
    g = topology.graph()
    leader_edges = [
        (l.a, l.b)
        for l in topology.links
        if topology.nodes[l.a].role is NodeRole.LEADER
        and topology.nodes[l.b].role is NodeRole.LEADER
    ]
    g.remove_edges_from(leader_edges)
    return [set(c) for c in nx.connected_components(g)]


def _chain_to_leader(state: dict[int, ChoiceSet], start: int, topology: NetworkTopology) -> list[int]:
    chain = [start]
    cursor = start
    while topology.nodes[cursor].role is not NodeRole.LEADER:
        if cursor in state:
            cursor = state[cursor].current
        else:
            # choice-less node (single-leaf tree): follow its only uplink
            ups = sorted(
                l.a if l.b == cursor else l.b
                for l in topology.links
                if cursor in (l.a, l.b)
            )
            if len(ups) != 1:
                raise UnreachableError(
                    f"node {cursor} has no choice set and {len(ups)} links; uplink ambiguous"
                )
            cursor = ups[0]
        if cursor in chain:
            raise RuntimeError(f"next-hop pointers loop at node {cursor}")
        chain.append(cursor)
    return chain


def current_path(
    state: dict[int, ChoiceSet], topology: NetworkTopology, source: int, destination: int
) -> list[int]:
    """Source chain up to its leader, across the trunk, down to the destination."""
    up = _chain_to_leader(state, source, topology)
    down = _chain_to_leader(state, destination, topology)
    if up[-1] == down[-1]:
        raise ParameterError("source and destination resolve to the same leader")
    if topology.link_between(up[-1], down[-1]) is None:
        raise UnreachableError(f"leaders {up[-1]} and {down[-1]} share no link")
    return up + list(reversed(down))


def realize_topology(topology: NetworkTopology, state: dict[int, ChoiceSet]) -> NetworkTopology:
    """Topology with every choosing node's link moved onto its current hop.

    A switch removes the old option's link and adds the new one; the new
    link inherits the old link's physical parameters with its latency rescaled
    by the same cost-to-microseconds ratio the old link used.
    """
    links = {l.endpoints(): l for l in topology.links}
    for node, cs in state.items():
        old_hop = cs.alternative()
        old_key = frozenset((node, old_hop))
        new_key = frozenset((node, cs.current))
        if new_key in links:
            continue
        if old_key not in links:
            raise ParameterError(f"node {node}: neither option link exists to move")
        old_link = links.pop(old_key)
        est = cs.estimate_for(cs.current)
        ratio = old_link.params.latency_us / old_link.cost if old_link.cost > 0 else 1.0
        params = replace(old_link.params, latency_us=max(est.latency_cost * ratio, 1e-9))
        links[new_key] = Link(node, cs.current, params, est.latency_cost, est.fidelity_payoff)
    return replace(topology, links=tuple(links.values()))


def path_cost_and_payoff(
    state: dict[int, ChoiceSet], topology: NetworkTopology, path: list[int]
) -> tuple[float, float]:
    """Sum of hop costs and product of hop fidelity payoffs along a path."""
    total, fidelity = 0.0, 1.0
    for a, b in zip(path, path[1:]):
        if a in state and b in state[a].options:
            est = state[a].estimate_for(b)
        elif b in state and a in state[b].options:
            est = state[b].estimate_for(a)
        else:
            link = topology.link_between(a, b)
            if link is None:
                raise UnreachableError(f"path hop {a}-{b} has no link or choice")
            est = HopEstimate(link.cost, link.payoff)
        total += est.latency_cost
        fidelity *= est.fidelity_payoff
    return total, fidelity


def run_consensus(
    topology: NetworkTopology,
    source: int,
    destination: int,
    weights: tuple[float, float] = (1.0, 1.0),
    variant: str = "classical",
    max_rounds: int | None = None,
    seed: int = 0,
    gamma: float = math.pi / 2.0,
    tie_epsilon: float = TIE_EPSILON,
    coin_angle: float = 0.0,
    sim_config=None,
) -> ConsensusOutcome:
    """Iterate consensus rounds until a fixed point, then score the path.

    `variant` is "classical" or "quantum" (the latter at entangling level
    `gamma`). The end-to-end fidelity of the converged path comes from one
    seeded distribution trial of the `simulation` module; the per-round trace
    carries the static product-of-payoffs proxy instead, which needs no
    sampling.
    """
    if variant not in ("classical", "quantum"):
        raise ParameterError(f"unknown variant {variant!r}")
    for endpoint in (source, destination):
        if not 0 <= endpoint < len(topology.nodes):
            raise ParameterError(f"node {endpoint} not in topology")
        if topology.nodes[endpoint].role is NodeRole.LEADER:
            raise ParameterError(f"node {endpoint} is a leader; endpoints must be leaves")
    components = _tree_components(topology)
    comp_of = {}
    for i, comp in enumerate(components):
        for n in comp:
            comp_of[n] = i
    if comp_of[source] == comp_of[destination]:
        raise ParameterError("source and destination must sit in different trees")

    state = choice_state(topology)
    rng = np.random.default_rng(seed)
    rounds_cap = max_rounds if max_rounds is not None else 2 * len(topology.nodes)

    switches: list[SwitchRecord] = []
    tie_events: list[dict] = []
    blocked: list[dict] = []
    trace: list[dict] = []
    settled: set[int] = set()
    converged = False
    rounds = 0
    for rounds in range(1, rounds_cap + 1):
        if variant == "classical":
            state, new_switches = classical_consensus_round(
                state, weights, blocked_sink=blocked
            )
            new_ties: list[dict] = []
        else:
            state, new_switches, new_ties = quantum_consensus_round(
                state,
                weights,
                gamma,
                rng,
                tie_epsilon=tie_epsilon,
                coin_angle=coin_angle,
                settled=settled,
                blocked_sink=blocked,
            )
        switches.extend(new_switches)
        for t in new_ties:
            tie_events.append({"round": rounds, **t})
        path = current_path(state, topology, source, destination)
        cost, proxy = path_cost_and_payoff(state, topology, path)
        trace.append(
            {
                "round": rounds,
                "switches": [s.to_json_dict() for s in new_switches],
                "total_cost": cost,
                "fidelity": proxy,
            }
        )
        if not new_switches and not new_ties:
            converged = True
            break

    path = current_path(state, topology, source, destination)
    total_cost, _ = path_cost_and_payoff(state, topology, path)
    realized = realize_topology(topology, state)
    fidelity = _simulated_path_fidelity(realized, path, seed, sim_config)
    return ConsensusOutcome(
        path=path,
        switches=switches,
        total_cost=total_cost,
        end_to_end_fidelity=fidelity,
        converged=converged,
        rounds=rounds,
        tie_events=tie_events,
        blocked=blocked,
        trace=trace,
        realized_topology=realized,
    )


def _simulated_path_fidelity(topology, path, seed, sim_config) -> float:
    from . import simulation  # deferred: simulation drives consensus sweeps

    cfg = sim_config or simulation.SimConfig(seed=seed)
    rng = np.random.default_rng([cfg.seed, 0xC0F1])
    return simulation.run_trial(topology, path, cfg, rng).end_to_end_fidelity
