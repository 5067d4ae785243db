"""Time-stepped entanglement-distribution trials over a chosen path, and the
metric sweeps built on them (normalized delay vs. network size, end-to-end
fidelity vs. link decoherence rate).

Trial timing model: generation attempts on a hop fire once per sync step and
succeed with the link's gen_prob, so a hop waits (attempts - 1) * sync_step
before its pair exists, then spends the link latency in flight. Every
completed hop beyond the first costs one extra sync step for the entanglement
swap at the junction node. A ready pair left idle longer than the qubit
lifetime while the next hop keeps retrying aborts the trial. On quantum-net
regimes the delivered pair is tracked as an explicit two-qubit density matrix:
each hop contributes a depolarizing channel of strength 1 - exp(-rate * held),
where `held` runs from the hop pair's creation to final delivery. Classical
regimes skip generation and decoherence entirely: one sync step plus latency
per hop, fidelity pinned to the product of the links' fidelity payoffs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import networkx as nx
import numpy as np

from . import quantum as q
from .errors import ParameterError
from .topology import LinkParams, NetworkTopology, build_scenario1

THREADS_ENV = "ENTANGLE_GAMES_THREADS"


class Regime(Enum):
    NO_GAME_CLASSICAL_NET = "no_game_classical_net"
    CLASSICAL_GAME_CLASSICAL_NET = "classical_game_classical_net"
    CLASSICAL_GAME_QUANTUM_NET = "classical_game_quantum_net"
    QUANTUM_GAME_QUANTUM_NET = "quantum_game_quantum_net"

    @property
    def quantum_net(self) -> bool:
        return self in (Regime.CLASSICAL_GAME_QUANTUM_NET, Regime.QUANTUM_GAME_QUANTUM_NET)


ALL_REGIMES = tuple(Regime)


@dataclass(frozen=True)
class SimConfig:
    sync_step_us: float = 300.0
    qubit_lifetime_us: float = 500.0
    trials: int = 1000
    regime: Regime = Regime.QUANTUM_GAME_QUANTUM_NET
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sync_step_us > 0:
            raise ParameterError(f"sync_step_us must be > 0, got {self.sync_step_us}")
        if self.sync_step_us > self.qubit_lifetime_us:
            raise ParameterError(
                f"sync_step_us {self.sync_step_us} exceeds qubit_lifetime_us {self.qubit_lifetime_us}"
            )
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")


@dataclass(frozen=True)
class TrialMetrics:
    total_latency_us: float
    hops: int
    normalized_delay_us: float
    end_to_end_fidelity: float
    ebits_delivered: int
    entanglement_rate: float  # e-bits per second of simulated time
    success: bool

    def as_numbers(self) -> dict[str, float]:
        return {
            "total_latency_us": self.total_latency_us,
            "hops": float(self.hops),
            "normalized_delay_us": self.normalized_delay_us,
            "end_to_end_fidelity": self.end_to_end_fidelity,
            "ebits_delivered": float(self.ebits_delivered),
            "entanglement_rate": self.entanglement_rate,
            "success": 1.0 if self.success else 0.0,
        }


METRIC_FIELDS = tuple(
    TrialMetrics(1.0, 1, 1.0, 1.0, 1, 1.0, True).as_numbers().keys()
)


def _path_links(topology: NetworkTopology, path: list[int]):
    if len(path) < 2:
        raise ParameterError(f"path needs at least two nodes, got {path}")
    links = []
    for a, b in zip(path, path[1:]):
        link = topology.link_between(a, b)
        if link is None:
            raise ParameterError(f"path hop {a}-{b} has no link in the topology")
        links.append(link)
    return links


def run_trial(
    topology: NetworkTopology, path: list[int], cfg: SimConfig, rng: np.random.Generator
) -> TrialMetrics:
    """One distribution attempt over `path` under the configured regime."""
    links = _path_links(topology, path)
    hops = len(links)
    budget = min(l.params.coherence_us for l in links)
    payoff_proxy = math.prod(l.payoff for l in links)

    if not cfg.regime.quantum_net:
        total = sum(l.params.latency_us + cfg.sync_step_us for l in links)
        success = total <= budget
        return _metrics(total, hops, payoff_proxy, success)

    total = 0.0
    created: list[float] = []
    for i, link in enumerate(links):
        attempts = int(rng.geometric(link.params.gen_prob))
        wait = (attempts - 1) * cfg.sync_step_us
        if i > 0 and wait > cfg.qubit_lifetime_us:
            # the pair waiting at the junction sat idle too long
            total += wait
            return _metrics(total, hops, 0.0, False)
        total += wait
        created.append(total)
        total += link.params.latency_us
        if i > 0:
            total += cfg.sync_step_us  # swap at the junction node
    if total > budget:
        return _metrics(total, hops, 0.0, False)

    rho = q.bell_pair().density_matrix()
    for i, link in enumerate(links):
        held = total - created[i]
        strength = q.depolarizing_strength(link.params.decoherence_rate, held)
        rho = q.apply_channel(rho, i % 2, q.NoiseChannel(q.ChannelKind.DEPOLARIZING, strength))
    fidelity = q.fidelity(rho, q.bell_pair())
    return _metrics(total, hops, fidelity, True)


def _metrics(total: float, hops: int, fidelity: float, success: bool) -> TrialMetrics:
    ebits = 1 if success else 0
    return TrialMetrics(
        total_latency_us=total,
        hops=hops,
        normalized_delay_us=total / hops,
        end_to_end_fidelity=fidelity,
        ebits_delivered=ebits,
        entanglement_rate=ebits / (total * 1e-6),
        success=success,
    )


def aggregate(trials: list[TrialMetrics]) -> tuple[dict[str, float], dict[str, float]]:
    """Arithmetic mean and sample standard deviation per metric field.

    Success contributes as a 0/1 fraction. A single trial has stddev 0.
    """
    if not trials:
        raise ParameterError("cannot aggregate an empty trial list")
    columns = {f: np.array([t.as_numbers()[f] for t in trials]) for f in METRIC_FIELDS}
    means = {f: float(np.mean(col)) for f, col in columns.items()}
    stds = {
        f: float(np.std(col, ddof=1)) if len(trials) > 1 else 0.0
        for f, col in columns.items()
    }
    return means, stds


def _trial_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def run_trials(
    topology: NetworkTopology,
    path: list[int],
    cfg: SimConfig,
    seed_parts: tuple[int, ...],
) -> list[TrialMetrics]:
    """cfg.trials independent trials with per-trial generators derived from
    (seed_parts, trial index); aggregation order is by trial index regardless
    of the worker count, so results are reproducible under ENTANGLE_GAMES_THREADS.
    """

    def one(i: int) -> TrialMetrics:
        return run_trial(topology, path, cfg, np.random.default_rng([*seed_parts, i]))

    workers = _trial_workers()
    if workers == 1:
        return [one(i) for i in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(cfg.trials)))


# ---------------------------------------------------------------------------
# sweep results
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    x_label: str
    x_values: list[float]
    series: list[str]
    n: int
    cells: dict[tuple[float, str], tuple[dict[str, float], dict[str, float]]]

    def rows(self) -> list[tuple]:
        out = []
        for (x, series), (means, stds) in self.cells.items():
            for metric in METRIC_FIELDS:
                out.append((x, series, metric, means[metric], stds[metric], self.n))
        out.sort(key=lambda r: (r[0], r[1], r[2]))
        return out

    def to_csv(self) -> str:
        lines = ["x,regime,metric,mean,stddev,n"]
        for x, series, metric, mean, std, n in self.rows():
            lines.append(f"{x!r},{series},{metric},{mean!r},{std!r},{n}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "x_label": self.x_label,
            "x_values": list(self.x_values),
            "n": self.n,
            "rows": [
                {"x": x, "regime": series, "metric": metric, "mean": mean, "stddev": std, "n": n}
                for x, series, metric, mean, std, n in self.rows()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def mean_of(self, x: float, series: str, metric: str) -> float:
        return self.cells[(x, series)][0][metric]


# ---------------------------------------------------------------------------
# node-count sweep
# ---------------------------------------------------------------------------


def backbone_topology(count: int, link_defaults: LinkParams | None = None) -> NetworkTopology:
    """Sweep topology for a given coordinating-node count: two leaders joined
    by a (count - 2)-repeater chain, one end-node on each leader.

    The count parameter is the number of infrastructure nodes playing the
    game (leaders plus repeaters); the end-nodes are the fixed communicating
    pair. Probabilistic extras stay off so the delay trend isolates the
    hop/swap scaling.
    """
    if count < 2:
        raise ParameterError(f"node count must be >= 2, got {count}")
    return build_scenario1(
        2,
        1,
        count - 2,
        link_defaults=link_defaults,
        probabilistic_links=False,
        placement="geometric",
    )


def _sweep_endpoints(topology: NetworkTopology) -> tuple[int, int]:
    # build_scenario1 ids: leaders 0..N-1, then end-nodes per leader
    return 2, 3


def select_path(
    topology: NetworkTopology,
    source: int,
    destination: int,
    regime: Regime,
    seed,
    player_count: int,
) -> list[int]:
    """Per-regime path choice: hop-shortest for no-game, coalition outcomes
    for the game regimes. The quantum game needs more than two coordinating
    nodes to differ from the classical one and falls back below that (and
    above the dense-simulation qubit cap, which admits the backbone player
    set only up to player_count + 2 qubits).
    """
    from . import coalition as co  # deferred: coalition builds on simulation clients

    if regime is Regime.NO_GAME_CLASSICAL_NET:
        return nx.shortest_path(topology.graph(), source, destination)
    cfg = co.CoalitionGameConfig(source=source, destination=destination)
    if (
        regime is Regime.QUANTUM_GAME_QUANTUM_NET
        and 2 < player_count
        and player_count + 2 <= q.MAX_QUBITS
    ):
        return co.quantum_coalition_form(cfg, topology, seed=seed).path
    return co.classical_coalition_form(cfg, topology, seed=seed).path


def sweep_nodes(
    base_cfg: SimConfig,
    node_counts: list[int],
    regimes: tuple[Regime, ...] = ALL_REGIMES,
    seed: int = 0,
    link_defaults: LinkParams | None = None,
) -> SweepResult:
    """Normalized-delay sweep across network sizes for each strategy regime."""
    if list(node_counts) != sorted(node_counts):
        raise ParameterError("node_counts must be ascending")
    cells = {}
    for xi, count in enumerate(node_counts):
        topology = backbone_topology(count, link_defaults)
        source, destination = _sweep_endpoints(topology)
        for ri, regime in enumerate(regimes):
            cfg = SimConfig(
                sync_step_us=base_cfg.sync_step_us,
                qubit_lifetime_us=base_cfg.qubit_lifetime_us,
                trials=base_cfg.trials,
                regime=regime,
                seed=base_cfg.seed,
            )
            path = select_path(topology, source, destination, regime, [seed, xi, ri], count)
            trials = run_trials(topology, path, cfg, (seed, xi, ri))
            cells[(float(count), regime.value)] = aggregate(trials)
    return SweepResult(
        x_label="node_count",
        x_values=[float(c) for c in node_counts],
        series=[r.value for r in regimes],
        n=base_cfg.trials,
        cells=cells,
    )


# ---------------------------------------------------------------------------
# decoherence sweep
# ---------------------------------------------------------------------------

# default rate grid: two orders of magnitude, shallow enough that the
# depolarized fidelity keeps a numerically strict slope above its 1/4 floor
DECOHERENCE_SWEEP_RATES = (1e-6, 3e-6, 1e-5, 3e-5, 1e-4)

# cost units to microseconds for the sweep fixture; stretched link latencies
# make one extra swap cheaper than one slow hop, so the coin-settled tie can
# matter
SWEEP_COST_TO_US = 10.0


def sweep_decoherence(
    base_cfg: SimConfig,
    rates: list[float],
    variants: tuple[str, ...] = ("classical", "quantum"),
    seed: int = 0,
    topology: NetworkTopology | None = None,
    source: int | None = None,
    destination: int | None = None,
) -> SweepResult:
    """End-to-end fidelity sweep over link decoherence rates.

    For each rate the two-tree consensus fixture is rebuilt with that rate on
    every link, consensus runs per variant, and the converged path is measured
    over `trials` quantum-net trials. Trial seeds pair across variants so the
    comparison is noise-matched.
    """
    from .consensus import run_consensus  # deferred: consensus pulls trial fidelities
    from .topology import canonical_two_tree_topology

    if list(rates) != sorted(rates) or (rates and rates[0] < 0):
        raise ParameterError("rates must be ascending and non-negative")
    base_topology = (
        topology
        if topology is not None
        else canonical_two_tree_topology(cost_to_us=SWEEP_COST_TO_US)
    )
    if source is None or destination is None:
        source, destination = 1, 8
    cells = {}
    for xi, rate in enumerate(rates):
        rated = base_topology.with_link_updates(decoherence_rate=rate)
        for variant in variants:
            cfg = SimConfig(
                sync_step_us=base_cfg.sync_step_us,
                qubit_lifetime_us=base_cfg.qubit_lifetime_us,
                trials=base_cfg.trials,
                regime=Regime.QUANTUM_GAME_QUANTUM_NET
                if variant == "quantum"
                else Regime.CLASSICAL_GAME_QUANTUM_NET,
                seed=base_cfg.seed,
            )
            outcome = run_consensus(
                rated, source, destination, variant=variant, seed=seed, sim_config=cfg
            )
            trials = run_trials(outcome.realized_topology, outcome.path, cfg, (seed, xi))
            cells[(float(rate), variant)] = aggregate(trials)
    return SweepResult(
        x_label="decoherence_rate",
        x_values=[float(r) for r in rates],
        series=list(variants),
        n=base_cfg.trials,
        cells=cells,
    )
