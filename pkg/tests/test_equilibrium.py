import io
import math

import numpy as np
import pytest

from entangle_games import equilibrium as eq
from entangle_games.errors import ParameterError


def affine_problem(coeffs, demand, **kw):
    return eq.WardropProblem(
        tuple(eq.AffineLatency(a, b) for a, b in coeffs), demand, **kw
    )


def waterfill_oracle(coeffs, demand):
    """Closed-form equalization for strictly increasing affine latencies.

    Independent of the iterative solver: picks the used set by scanning
    intercepts in ascending order and solving the equal-latency linear system.
    """
    order = sorted(range(len(coeffs)), key=lambda i: coeffs[i][0])
    for k in range(1, len(coeffs) + 1):
        used = order[:k]
        inv_b = sum(1.0 / coeffs[i][1] for i in used)
        c = (demand + sum(coeffs[i][0] / coeffs[i][1] for i in used)) / inv_b
        if all(c >= coeffs[i][0] - 1e-12 for i in used) and (
            k == len(coeffs) or c <= coeffs[order[k]][0] + 1e-12
        ):
            flows = [0.0] * len(coeffs)
            for i in used:
                flows[i] = (c - coeffs[i][0]) / coeffs[i][1]
            return flows, c
    raise AssertionError("oracle failed to find a used set")


# ---------------------------------------------------------------------------
# Nash best response
# ---------------------------------------------------------------------------


def test_separable_quadratic_costs():
    p = eq.BestResponseProblem(
        (lambda x, y: (x - 0.5) ** 2, lambda x, y: (y - 0.5) ** 2), tol=1e-6
    )
    res = eq.solve_nash_best_response(p)
    assert res.converged
    assert res.actions[0] == pytest.approx(0.5, abs=1e-6)
    assert res.actions[1] == pytest.approx(0.5, abs=1e-6)
    assert res.residual <= 1e-6


def test_coupled_linear_reactions_reach_origin():
    p = eq.BestResponseProblem(
        (lambda x, y: (x - 0.5 * y) ** 2, lambda x, y: (y - 0.5 * x) ** 2), tol=1e-6
    )
    res = eq.solve_nash_best_response(p)
    assert res.converged
    assert res.actions[0] == pytest.approx(0.0, abs=1e-5)
    assert res.actions[1] == pytest.approx(0.0, abs=1e-5)


def calibrated_problem():
    # affine reaction curves crossing at (0.695, 0.74)
    beta = 0.3
    r0 = lambda y: 0.695 + beta * (y - 0.74)
    r1 = lambda x: 0.74 + beta * (x - 0.695)
    return eq.BestResponseProblem(
        (lambda x, y: (x - r0(y)) ** 2, lambda x, y: (y - r1(x)) ** 2), tol=1e-6
    )


def test_calibrated_fixture_hits_target_point():
    res = eq.solve_nash_best_response(calibrated_problem())
    assert res.converged
    assert res.actions[0] == pytest.approx(0.695, abs=1e-3)
    assert res.actions[1] == pytest.approx(0.74, abs=1e-3)


def test_residual_definition_holds_at_solution():
    res = eq.solve_nash_best_response(calibrated_problem())
    assert res.residual <= 1e-6


def test_cost_scaling_leaves_equilibrium_unchanged():
    base = eq.solve_nash_best_response(calibrated_problem())
    beta = 0.3
    scaled = eq.BestResponseProblem(
        (
            lambda x, y: 17.0 * (x - (0.695 + beta * (y - 0.74))) ** 2,
            lambda x, y: (y - (0.74 + beta * (x - 0.695))) ** 2,
        ),
        tol=1e-6,
    )
    res = eq.solve_nash_best_response(scaled)
    assert res.actions[0] == pytest.approx(base.actions[0], abs=1e-6)
    assert res.actions[1] == pytest.approx(base.actions[1], abs=1e-6)


def test_nonconvergence_is_flagged_not_raised():
    # undamped best responses on anti-coordination costs oscillate
    p = eq.BestResponseProblem(
        (lambda x, y: (x - (1 - y)) ** 2, lambda x, y: (y - x) ** 2),
        damping=1.0,
        tol=1e-9,
        max_iter=5,
    )
    res = eq.solve_nash_best_response(p, start=(0.0, 1.0))
    assert not res.converged
    assert res.iterations == 5


def test_nash_trace_sink_receives_rows():
    sink = io.StringIO()
    eq.solve_nash_best_response(calibrated_problem(), trace_sink=sink)
    lines = sink.getvalue().strip().splitlines()
    assert len(lines) >= 1
    assert lines[0].startswith("1,")


def test_bad_damping_rejected():
    with pytest.raises(ParameterError):
        eq.BestResponseProblem((lambda x, y: x, lambda x, y: y), damping=0.0)


# ---------------------------------------------------------------------------
# Wardrop
# ---------------------------------------------------------------------------


def test_two_link_analytic_split():
    p = affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0, tol=1e-9)
    res = eq.solve_wardrop(p)
    assert res.flows[0] == pytest.approx(2 / 3, abs=1e-6)
    assert res.flows[1] == pytest.approx(1 / 3, abs=1e-6)
    assert res.common_latency == pytest.approx(2 / 3, abs=1e-6)
    assert res.gap <= 1e-9


def test_single_link_takes_all_demand():
    p = affine_problem([(1.0, 3.0)], 2.5)
    res = eq.solve_wardrop(p)
    assert res.flows == (2.5,)
    assert res.gap == 0.0


def test_identical_constant_links_split_uniformly():
    p = eq.WardropProblem((eq.AffineLatency(1.0, 0.0), eq.AffineLatency(1.0, 0.0)), 1.0)
    res = eq.solve_wardrop(p)
    assert res.flows == (0.5, 0.5)


def test_identical_affine_links_split_evenly():
    p = affine_problem([(1.0, 1.0), (1.0, 1.0)], 1.0, tol=1e-9)
    res = eq.solve_wardrop(p)
    assert res.flows[0] == pytest.approx(0.5, abs=1e-6)
    assert res.flows[1] == pytest.approx(0.5, abs=1e-6)


def test_expensive_link_left_unused():
    p = affine_problem([(0.0, 1.0), (10.0, 1.0)], 1.0, tol=1e-9)
    res = eq.solve_wardrop(p)
    assert res.flows[0] == pytest.approx(1.0, abs=1e-6)
    assert res.flows[1] == pytest.approx(0.0, abs=1e-6)


def test_gap_of_equilibrium_is_zero():
    p = affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0)
    assert eq.wardrop_gap([2 / 3, 1 / 3], p) == pytest.approx(0.0, abs=1e-9)


def test_gap_of_worst_assignment():
    p = affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0)
    # all demand on the slope-2 link: used latency 2, empty link latency 0
    assert eq.wardrop_gap([0.0, 1.0], p) == pytest.approx(2.0)


def test_gap_perturbation_scales_linearly():
    p = affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0)
    for epsilon in (1e-3, 1e-4, 1e-5):
        g = eq.wardrop_gap([2 / 3 + epsilon, 1 / 3 - epsilon], p)
        assert g == pytest.approx(3.0 * epsilon, rel=1e-6)


def test_gap_rejects_infeasible_flows():
    p = affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0)
    with pytest.raises(ParameterError):
        eq.wardrop_gap([0.9, 0.3], p)
    with pytest.raises(ParameterError):
        eq.wardrop_gap([1.2, -0.2], p)


def test_wardrop_trace_sink_rows_are_csv_safe():
    sink = io.StringIO()
    eq.solve_wardrop(affine_problem([(0.0, 1.0), (0.0, 2.0)], 1.0, tol=1e-6), trace_sink=sink)
    lines = sink.getvalue().strip().splitlines()
    assert lines
    for line in lines:
        assert len(line.split(",")) == 3  # iteration, flows (semicolon-joined), gap


def test_randomized_instances_match_waterfill_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        m = int(rng.integers(2, 6))
        coeffs = [(float(rng.uniform(0, 2)), float(rng.uniform(0.1, 2))) for _ in range(m)]
        demand = float(rng.uniform(0.2, 5.0))
        problem = affine_problem(coeffs, demand, tol=1e-8)
        res = eq.solve_wardrop(problem)
        oracle_flows, oracle_latency = waterfill_oracle(coeffs, demand)
        assert res.gap <= 1e-6
        assert sum(res.flows) == pytest.approx(demand, abs=1e-9)
        assert all(x >= 0 for x in res.flows)
        for got, want in zip(res.flows, oracle_flows):
            assert got == pytest.approx(want, abs=1e-6)
        if any(f > 1e-9 for f in oracle_flows):
            assert res.common_latency == pytest.approx(oracle_latency, abs=1e-6)
