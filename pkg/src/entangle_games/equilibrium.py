"""Equilibrium solvers: damped best-response Nash iteration for the 2-player
classical games, and a latency-equalizing Wardrop assignment for allocating
entanglement-attempt rate across a node's outgoing links.

Both solvers are pure functions of their inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import ParameterError

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(f: Callable[[float], float], lo: float, hi: float, xtol: float) -> float:
    """Derivative-free 1-D minimizer of a unimodal function on [lo, hi]."""
    if hi <= lo:
        raise ParameterError(f"empty interval [{lo}, {hi}]")
    a, b = lo, hi
    c = b - GOLDEN_RATIO * (b - a)
    d = a + GOLDEN_RATIO * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_RATIO * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_RATIO * (b - a)
            fd = f(d)
    return (a + b) / 2.0


# ---------------------------------------------------------------------------
# Nash best response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BestResponseProblem:
    """Two players, action = information-exchange rate in [0, 1], each
    minimizing its own cost function of the joint action."""

    cost_fns: tuple[Callable[[float, float], float], Callable[[float, float], float]]
    damping: float = 1.0
    tol: float = 1e-6
    max_iter: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ParameterError(f"damping must be in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class NashPoint:
    actions: tuple[float, float]
    residual: float
    iterations: int
    converged: bool


def _best_response(problem: BestResponseProblem, player: int, other_action: float) -> float:
    cost = problem.cost_fns[player]
    if player == 0:
        return golden_section_minimize(lambda x: cost(x, other_action), 0.0, 1.0, problem.tol / 10.0)
    return golden_section_minimize(lambda y: cost(other_action, y), 0.0, 1.0, problem.tol / 10.0)


def solve_nash_best_response(
    problem: BestResponseProblem,
    start: tuple[float, float] = (0.5, 0.5),
    trace_sink=None,
) -> NashPoint:
    """Damped alternating best responses until the joint action settles.

    The inner minimizer is golden-section at tolerance tol/10, so cost
    functions may be non-smooth simulation lookups. Non-convergence within
    max_iter is reported on the result, not raised. `trace_sink`, when given,
    receives one "iteration,x0,x1,residual" CSV line per iteration.
    """
    x = [float(start[0]), float(start[1])]
    iterations = 0
    for iterations in range(1, problem.max_iter + 1):
        moved = 0.0
        for player in (0, 1):
            br = _best_response(problem, player, x[1 - player])
            new = (1.0 - problem.damping) * x[player] + problem.damping * br
            moved = max(moved, abs(new - x[player]))
            x[player] = new
        if trace_sink is not None:
            trace_sink.write(f"{iterations},{x[0]!r},{x[1]!r},{moved!r}\n")
        if moved < problem.tol:
            break
    residual = max(abs(_best_response(problem, p, x[1 - p]) - x[p]) for p in (0, 1))
    return NashPoint(
        actions=(x[0], x[1]),
        residual=residual,
        iterations=iterations,
        converged=residual <= problem.tol,
    )


# ---------------------------------------------------------------------------
# Wardrop assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineLatency:
    """l(x) = intercept + slope * x, non-decreasing in flow."""

    intercept: float
    slope: float

    def __post_init__(self) -> None:
        if self.intercept < 0 or self.slope < 0:
            raise ParameterError("latency coefficients must be non-negative")

    def __call__(self, x: float) -> float:
        return self.intercept + self.slope * x


@dataclass(frozen=True)
class WardropProblem:
    """Split `demand` over one node's outgoing links so used links equalize."""

    latencies: tuple[AffineLatency, ...]
    demand: float
    tol: float = 1e-9
    step: float = 0.1
    max_iter: int = 200_000

    def __post_init__(self) -> None:
        if len(self.latencies) < 1:
            raise ParameterError("need at least one outgoing link")
        if not self.demand > 0:
            raise ParameterError(f"demand must be > 0, got {self.demand}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class WardropFlow:
    flows: tuple[float, ...]
    common_latency: float
    gap: float
    iterations: int = 0


USED_FLOW_EPS = 1e-12


def wardrop_gap(flows: Sequence[float], problem: WardropProblem) -> float:
    """Max spread between any used link's latency and the best link's latency.

    Zero exactly at equilibrium. Raises on infeasible flows (negative entries
    or wrong total).
    """
    flows = list(flows)
    if len(flows) != len(problem.latencies):
        raise ParameterError("flow vector length does not match link count")
    if any(x < -1e-9 for x in flows):
        raise ParameterError(f"negative flow in {flows}")
    if abs(sum(flows) - problem.demand) > 1e-9:
        raise ParameterError(f"flows sum to {sum(flows)}, demand is {problem.demand}")
    lat = [l(x) for l, x in zip(problem.latencies, flows)]
    floor = min(lat)
    used = [v for v, x in zip(lat, flows) if x > USED_FLOW_EPS]
    return max(used) - floor if used else 0.0


def solve_wardrop(problem: WardropProblem, trace_sink=None) -> WardropFlow:
    """Iterative flow shifting until the Wardrop condition holds.

    Each step moves flow from the highest-latency used link to the
    lowest-latency link, sized as `step` times the exact pairwise equalizer,
    with the step halved whenever the gap fails to shrink. All-constant equal
    latencies are split uniformly (documented tie rule).
    """
    m = len(problem.latencies)
    slopes = [l.slope for l in problem.latencies]
    if all(s == 0.0 for s in slopes):
        # constant latencies: route everything to the cheapest links,
        # splitting uniformly among ties
        vals = [l(0.0) for l in problem.latencies]
        best = min(vals)
        winners = [i for i, v in enumerate(vals) if v <= best + problem.tol]
        flows = [problem.demand / len(winners) if i in winners else 0.0 for i in range(m)]
        return WardropFlow(tuple(flows), best, wardrop_gap(flows, problem), 0)

    flows = [problem.demand / m] * m
    eta = problem.step
    prev_gap = math.inf
    iterations = 0
    for iterations in range(1, problem.max_iter + 1):
        lat = [l(x) for l, x in zip(problem.latencies, flows)]
        lo = min(range(m), key=lambda i: lat[i])
        used = [i for i in range(m) if flows[i] > USED_FLOW_EPS]
        hi = max(used, key=lambda i: lat[i])
        gap = lat[hi] - lat[lo]
        if trace_sink is not None:
            flows_cell = ";".join(repr(x) for x in flows)
            trace_sink.write(f"{iterations},{flows_cell},{gap!r}\n")
        if gap <= problem.tol:
            break
        if gap > prev_gap:  # oscillating: damp the step
            eta = max(eta / 2.0, 1e-6)
        prev_gap = gap
        denom = slopes[hi] + slopes[lo]
        shift = gap if denom == 0.0 else gap / denom
        move = min(flows[hi], eta * shift)
        flows[hi] -= move
        flows[lo] += move
    lat = [l(x) for l, x in zip(problem.latencies, flows)]
    used = [i for i in range(m) if flows[i] > USED_FLOW_EPS]
    common = sum(lat[i] for i in used) / len(used)
    return WardropFlow(tuple(flows), common, wardrop_gap(flows, problem), iterations)
