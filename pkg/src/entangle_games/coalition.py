"""Coalition formation for an entangled source-to-destination path.

Classical variant: merge-and-split over candidate node coalitions, accepting
any merge (pairwise or wider) or two-way split that strictly increases the
combined characteristic value of the coalitions involved. Quantum variant:
the referee (the leader next to the source) prepares an entangled multi-party
state, each player rotates its own qubit, and the measured bitstring selects
the candidate coalition; strategies evolve by discretized best response until
the measured coalition holds steady.

The characteristic value of a node set combines the three routing objectives:
rate capped at the target throughput, plus path fidelity, minus a per-hop
operation cost. Outsiders receive nothing and cannot tax the coalition, so
payoffs always sum exactly to the coalition value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import networkx as nx
import numpy as np

from . import quantum as q
from .errors import CapacityError, ParameterError, UnreachableError
from .topology import NetworkTopology, NodeRole

STRICT_EPS = 1e-12


class PayoffSplit(Enum):
    EQUAL = "equal"
    PROPORTIONAL_TO_DEGREE = "proportional_to_degree"


@dataclass(frozen=True)
class Coalition:
    members: frozenset[int]
    value: float


@dataclass(frozen=True)
class CoalitionGameConfig:
    source: int
    destination: int
    target_throughput: float = 1000.0  # e-bits per second
    hop_cost: float = 0.05
    payoff_split: PayoffSplit = PayoffSplit.EQUAL
    max_path_hops: int | None = None

    def __post_init__(self) -> None:
        if self.source == self.destination:
            raise ParameterError("source and destination must differ")
        if not self.target_throughput > 0:
            raise ParameterError(f"target_throughput must be > 0, got {self.target_throughput}")
        if self.hop_cost < 0:
            raise ParameterError(f"hop_cost must be >= 0, got {self.hop_cost}")


@dataclass
class CoalitionOutcome:
    stable_coalition: Coalition
    path: list[int]
    per_node_payoff: dict[int, float]
    rounds: int
    history: list[dict] = field(default_factory=list)
    referee: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "members": sorted(self.stable_coalition.members),
            "value": self.stable_coalition.value,
            "path": list(self.path),
            "per_node_payoff": {str(k): v for k, v in sorted(self.per_node_payoff.items())},
            "rounds": self.rounds,
            "referee": self.referee,
        }


def link_rate(link) -> float:
    """Entanglement rate of one link in e-bits per second.

    Attempts are paced by the link round-trip, so the rate is the success
    probability per attempt divided by the latency in seconds.
    """
    return link.params.gen_prob / (link.params.latency_us * 1e-6)


class ValueModel:
    """Characteristic-value evaluator with memoization over node subsets."""

    def __init__(self, cfg: CoalitionGameConfig, topology: NetworkTopology) -> None:
        n = len(topology.nodes)
        if not (0 <= cfg.source < n and 0 <= cfg.destination < n):
            raise ParameterError("source/destination must be nodes of the topology")
        self.cfg = cfg
        self.topology = topology
        self.graph = topology.graph()
        self._cache: dict[frozenset[int], tuple[float, tuple[int, ...] | None]] = {}

    def _paths_within(self, members: frozenset[int]):
        cfg = self.cfg
        if cfg.source not in members or cfg.destination not in members:
            return
        sub = self.graph.subgraph(members)
        if not (sub.has_node(cfg.source) and sub.has_node(cfg.destination)):
            return
        yield from nx.all_simple_paths(sub, cfg.source, cfg.destination, cutoff=cfg.max_path_hops)

    def path_score(self, path: list[int]) -> float:
        rate = math.inf
        fidelity = 1.0
        for a, b in zip(path, path[1:]):
            link = self.graph.edges[a, b]["link"]
            rate = min(rate, link_rate(link))
            fidelity *= link.payoff
        hops = len(path) - 1
        return min(self.cfg.target_throughput, rate) + fidelity - self.cfg.hop_cost * hops

    def evaluate(self, members: frozenset[int]) -> tuple[float, tuple[int, ...] | None]:
        """(value, best path) for a node set; (0.0, None) when no path exists."""
        members = frozenset(members)
        hit = self._cache.get(members)
        if hit is not None:
            return hit
        best_score, best_path = -math.inf, None
        for path in self._paths_within(members):
            score = self.path_score(path)
            if score > best_score + STRICT_EPS or (
                abs(score - best_score) <= STRICT_EPS
                and best_path is not None
                and tuple(path) < best_path
            ):
                best_score, best_path = score, tuple(path)
        result = (best_score, best_path) if best_path is not None else (0.0, None)
        self._cache[members] = result
        return result

    def value(self, members) -> float:
        return self.evaluate(frozenset(members))[0]

    def candidate_nodes(self) -> list[int]:
        """Nodes lying on at least one simple source->destination path."""
        cfg = self.cfg
        if not nx.has_path(self.graph, cfg.source, cfg.destination):
            raise UnreachableError(
                f"no path between {cfg.source} and {cfg.destination}"
            )
        nodes: set[int] = set()
        for path in nx.all_simple_paths(
            self.graph, cfg.source, cfg.destination, cutoff=cfg.max_path_hops
        ):
            nodes.update(path)
        if not nodes:
            raise UnreachableError(
                f"no path between {cfg.source} and {cfg.destination} within "
                f"{cfg.max_path_hops} hops"
            )
        return sorted(nodes)

    def split_payoffs(self, coalition: Coalition) -> dict[int, float]:
        members = sorted(coalition.members)
        if not members:
            return {}
        if self.cfg.payoff_split is PayoffSplit.EQUAL:
            share = coalition.value / len(members)
            return {m: share for m in members}
        degrees = {m: max(self.graph.degree(m), 1) for m in members}
        total = sum(degrees.values())
        return {m: coalition.value * degrees[m] / total for m in members}


def characteristic_value(members, cfg: CoalitionGameConfig, topology: NetworkTopology) -> float:
    """Value of a node set: min(target, best path rate) + fidelity - hop cost.

    Zero when the set contains no source->destination path. Deterministic in
    its arguments.
    """
    if not members:
        raise ParameterError("coalition must be non-empty")
    return ValueModel(cfg, topology).value(members)


# ---------------------------------------------------------------------------
# classical merge-and-split
# ---------------------------------------------------------------------------


def _find_merge(model: ValueModel, partition: list[frozenset[int]]):
    """First coalition group whose union strictly beats the sum of its parts.

    Pairs are tried before wider merges so the dynamics stay local when they
    can; wider merges are what let zero-value singletons assemble a full path.
    """
    order = sorted(range(len(partition)), key=lambda i: sorted(partition[i]))
    for k in range(2, len(partition) + 1):
        for group in combinations(order, k):
            parts = [partition[i] for i in group]
            union = frozenset().union(*parts)
            if model.value(union) > sum(model.value(p) for p in parts) + STRICT_EPS:
                return group, union
    return None


def _find_split(model: ValueModel, partition: list[frozenset[int]]):
    # exhaustive 2-way splits; intended for the small candidate sets these
    # games produce (the search is exponential in coalition size)
    for i, coalition in enumerate(partition):
        if len(coalition) < 2:
            continue
        members = sorted(coalition)
        whole = model.value(coalition)
        # enumerate 2-way splits; fix members[0] on one side to halve the count
        for mask in range(1, 2 ** (len(members) - 1)):
            left = frozenset(
                m for j, m in enumerate(members) if j == 0 or (mask >> (j - 1)) & 1
            )
            right = coalition - left
            if not right:
                continue
            if model.value(left) + model.value(right) > whole + STRICT_EPS:
                return i, left, right
    return None


def classical_coalition_form(
    cfg: CoalitionGameConfig,
    topology: NetworkTopology,
    seed: int = 0,
    model: ValueModel | None = None,
    max_rounds: int = 1000,
) -> CoalitionOutcome:
    """Merge-and-split until no operation strictly increases combined value.

    The iteration starts from singletons of the candidate nodes (those on some
    source->destination path). Every accepted operation strictly increases the
    partition's total value, which is bounded, so termination is guaranteed.
    The result is deterministic: `seed` is accepted for interface symmetry
    with the quantum variant but never consulted.
    """
    model = model or ValueModel(cfg, topology)
    candidates = model.candidate_nodes()
    partition: list[frozenset[int]] = [frozenset([n]) for n in candidates]
    history: list[dict] = []
    rounds = 0
    while rounds < max_rounds:
        merge = _find_merge(model, partition)
        if merge is not None:
            group, union = merge
            partition = [p for i, p in enumerate(partition) if i not in group]
            partition.append(union)
            rounds += 1
            history.append(
                {"round": rounds, "op": "merge", "members": sorted(union), "value": model.value(union)}
            )
            continue
        split = _find_split(model, partition)
        if split is not None:
            i, left, right = split
            partition = [p for j, p in enumerate(partition) if j != i] + [left, right]
            rounds += 1
            history.append(
                {
                    "round": rounds,
                    "op": "split",
                    "members": [sorted(left), sorted(right)],
                    "value": model.value(left) + model.value(right),
                }
            )
            continue
        break
    else:
        raise RuntimeError(f"merge-and-split did not stabilize within {max_rounds} operations")

    best = max(partition, key=lambda p: (model.value(p), -len(p)))
    value, path = model.evaluate(best)
    if path is None:
        raise UnreachableError(
            f"stable partition contains no coalition with a {cfg.source}->{cfg.destination} path"
        )
    coalition = Coalition(best, value)
    return CoalitionOutcome(
        stable_coalition=coalition,
        path=list(path),
        per_node_payoff=model.split_payoffs(coalition),
        rounds=rounds,
        history=history,
    )


def stability_violations(model: ValueModel, partition: list[frozenset[int]]) -> list[str]:
    """Improving merges or splits still available; empty at a stable point."""
    out = []
    if _find_merge(model, partition) is not None:
        out.append("an improving merge remains")
    if _find_split(model, partition) is not None:
        out.append("an improving split remains")
    return out


# ---------------------------------------------------------------------------
# quantum variant
# ---------------------------------------------------------------------------


def referee_state(n_players: int, gamma: float) -> q.StateVector:
    """Shared state the referee hands out, at entangling level gamma.

    Each qubit is rotated from |0> by gamma and neighboring qubits pick up a
    controlled phase of 2*gamma: gamma = 0 leaves the unentangled |0...0>
    (each player's rotation alone decides its bit), while gamma = pi/2
    produces exactly the linear cluster state.
    """
    if not 0.0 <= gamma <= math.pi / 2.0 + 1e-12:
        raise ParameterError(f"gamma {gamma} outside [0, pi/2]")
    if not 2 <= n_players <= q.MAX_QUBITS:
        raise CapacityError(
            f"{n_players} players outside supported range 2..{q.MAX_QUBITS}"
        )
    c, s = math.cos(gamma / 2.0), math.sin(gamma / 2.0)
    rot = np.array([[c, -s], [s, c]], dtype=complex)
    state = q.StateVector.computational_basis(n_players, 0)
    for i in range(n_players):
        state = q.apply_unitary(state, i, rot)
    for i in range(n_players - 1):
        state = q.apply_controlled_phase(state, i, i + 1, 2.0 * gamma)
    return state


def find_referee(topology: NetworkTopology, source: int) -> int:
    """The leader adjacent to the source arbitrates; the source itself if none."""
    g = topology.graph()
    for nb in sorted(g.neighbors(source)):
        if topology.nodes[nb].role is NodeRole.LEADER:
            return nb
    return source


THETA_GRID = np.linspace(0.0, math.pi, 9)
PHI_GRID = np.linspace(0.0, 2.0 * math.pi, 9, endpoint=False)

# fixed best-response search grid, theta-major; ties keep the earliest entry
GRID_STRATEGIES = tuple(
    q.SingleQubitUnitary(float(theta), float(phi))
    for theta in THETA_GRID
    for phi in PHI_GRID
)
GRID_MATRICES = tuple(u.matrix() for u in GRID_STRATEGIES)


class _QuantumRound:
    """Per-game machinery: payoff tables over bitstrings and best responses."""

    def __init__(self, model: ValueModel, players: list[int], gamma: float):
        self.model = model
        self.players = players
        self.base = referee_state(len(players), gamma)
        self._coalition_values = None
        self._payoffs_by_player: dict[int, np.ndarray] = {}

    def coalition_of(self, outcome_bits: int) -> frozenset[int]:
        m = len(self.players)
        return frozenset(
            p for i, p in enumerate(self.players) if (outcome_bits >> (m - 1 - i)) & 1
        )

    def coalition_values(self) -> np.ndarray:
        if self._coalition_values is None:
            vals = np.zeros(2 ** len(self.players))
            for bits in range(1, vals.size):
                vals[bits] = self.model.value(self.coalition_of(bits))
            self._coalition_values = vals
        return self._coalition_values

    def payoff_table(self, player_index: int) -> np.ndarray:
        """Expected payoff of one player for every measured bitstring."""
        table = self._payoffs_by_player.get(player_index)
        if table is None:
            m = len(self.players)
            values = self.coalition_values()
            table = np.zeros_like(values)
            for bits in range(1, values.size):
                if not (bits >> (m - 1 - player_index)) & 1:
                    continue
                coalition = Coalition(self.coalition_of(bits), float(values[bits]))
                table[bits] = self.model.split_payoffs(coalition)[
                    self.players[player_index]
                ]
            self._payoffs_by_player[player_index] = table
        return table

    def played_state(self, strategies: dict[int, q.SingleQubitUnitary]) -> q.StateVector:
        state = self.base
        for i, p in enumerate(self.players):
            state = q.apply_unitary(state, i, strategies[p])
        return state

    def best_response(
        self, player_index: int, strategies: dict[int, q.SingleQubitUnitary]
    ) -> q.SingleQubitUnitary:
        """Exact expected-payoff argmax over the 9x9 (theta, phi) grid.

        Ties keep the earliest grid point (theta-major order), so updates are
        reproducible.
        """
        others = self.base
        for i, p in enumerate(self.players):
            if i != player_index:
                others = q.apply_unitary(others, i, strategies[p])
        payoffs = self.payoff_table(player_index)
        best_u, best_val = None, -math.inf
        for u, matrix in zip(GRID_STRATEGIES, GRID_MATRICES):
            probs = q.apply_unitary(others, player_index, matrix).probabilities()
            val = float(probs @ payoffs)
            if val > best_val + STRICT_EPS:
                best_u, best_val = u, val
        return best_u


def quantum_coalition_form(
    cfg: CoalitionGameConfig,
    topology: NetworkTopology,
    strategies: dict[int, q.SingleQubitUnitary] | None = None,
    gamma: float = math.pi / 2.0,
    seed: int = 0,
    players: list[int] | None = None,
    max_rounds: int = 60,
    confirm_window: int = 3,
    model: ValueModel | None = None,
) -> CoalitionOutcome:
    """Referee-mediated coalition formation over an entangled shared state.

    Each round the referee distributes one qubit of `referee_state` per
    player, every player applies its strategy rotation, and the measured
    bitstring picks the candidate coalition (bit 1 = join). Payoffs follow the
    configured split of the coalition's value; between rounds one player at a
    time replaces its strategy with a grid best response. The game stops once
    the measured coalition repeats across `confirm_window` consecutive rounds
    (or at `max_rounds`).

    The reported coalition is the stabilized one when it carries a
    source->destination path; otherwise the best-valued path-carrying
    coalition seen in any round; otherwise the maximum-likelihood decoding
    (join iff P(bit=1) >= 1/2) of the final strategy state, with the grand
    candidate coalition as the last resort (it always carries a path).

    `strategies` defaults to everyone proposing to join (theta = pi), the
    all-in starting point whose gamma = 0 behavior coincides with the
    classical game on path fixtures.
    """
    model = model or ValueModel(cfg, topology)
    if players is None:
        players = model.candidate_nodes()
    if len(players) > q.MAX_QUBITS:
        raise CapacityError(f"{len(players)} candidate players exceed {q.MAX_QUBITS}")
    if len(players) < 2:
        raise ParameterError("quantum game needs at least two players")
    players = sorted(players)
    index_of = {p: i for i, p in enumerate(players)}
    if cfg.source not in index_of or cfg.destination not in index_of:
        raise ParameterError("source and destination must be players")

    if strategies is None:
        strategies = {p: q.SingleQubitUnitary(math.pi, 0.0) for p in players}
    else:
        missing = [p for p in players if p not in strategies]
        if missing:
            raise ParameterError(f"strategies missing for players {missing}")
        strategies = dict(strategies)

    rng = np.random.default_rng(seed)
    engine = _QuantumRound(model, players, gamma)
    history: list[dict] = []
    recent: list[frozenset[int]] = []
    best_seen: tuple[float, frozenset[int]] | None = None
    stable: frozenset[int] | None = None
    rounds = 0

    for rounds in range(1, max_rounds + 1):
        state = engine.played_state(strategies)
        outcome_bits, _ = q.measure_computational(state, rng)
        measured = engine.coalition_of(int(outcome_bits, 2))
        value, path = model.evaluate(measured) if measured else (0.0, None)
        history.append(
            {
                "round": rounds,
                "strategies": {p: [strategies[p].theta, strategies[p].phi] for p in players},
                "outcome": outcome_bits,
                "members": sorted(measured),
                "value": value,
            }
        )
        if path is not None and (best_seen is None or value > best_seen[0] + STRICT_EPS):
            best_seen = (value, measured)
        recent.append(measured)
        if len(recent) >= confirm_window and len(set(recent[-confirm_window:])) == 1:
            stable = measured
            break
        updater = (rounds - 1) % len(players)
        strategies[players[updater]] = engine.best_response(updater, strategies)

    chosen: frozenset[int] | None = None
    if stable is not None and model.evaluate(stable)[1] is not None:
        chosen = stable
    elif best_seen is not None:
        chosen = best_seen[1]
    else:
        final = engine.played_state(strategies)
        marginals = _join_marginals(final)
        chosen = frozenset(p for i, p in enumerate(players) if marginals[i] >= 0.5)
        if model.evaluate(chosen)[1] is None:
            chosen = frozenset(players)

    value, path = model.evaluate(chosen)
    coalition = Coalition(chosen, value)
    return CoalitionOutcome(
        stable_coalition=coalition,
        path=list(path),
        per_node_payoff=model.split_payoffs(coalition),
        rounds=rounds,
        history=history,
        referee=find_referee(topology, cfg.source),
    )


def _join_marginals(state: q.StateVector) -> np.ndarray:
    probs = state.probabilities()
    n = state.n_qubits
    idx = np.arange(probs.size)
    return np.array(
        [probs[((idx >> (n - 1 - i)) & 1) == 1].sum() for i in range(n)]
    )
