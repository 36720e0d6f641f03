import math

import numpy as np
import pytest

from acopf.builders import build
from acopf.formulation import FormulationBuilder, evaluate
from acopf.solvers import bound_report, optimality_gap, solve_jabr_barrier, solve_polar_local
from acopf.solvers.barrier import BarrierSolver, _problem_from
from shared.errors import BoundChainViolation, InvalidBoundKinds
from shared.schemas import BoundKind, SolveOptions, SolveResult, SolveStatus

FEASIBLE = {SolveStatus.OPTIMAL, SolveStatus.FEASIBLE}


def _result(kind: BoundKind, objective: float, status: SolveStatus = SolveStatus.OPTIMAL) -> SolveResult:
    return SolveResult(status=status, objective=objective, max_violation=0.0, bound_kind=kind)


def test_gap_formula():
    gap = optimality_gap(_result(BoundKind.LOWER, 90.0), _result(BoundKind.UPPER, 100.0))
    assert gap == pytest.approx(0.1)


def test_gap_uses_unit_floor():
    gap = optimality_gap(_result(BoundKind.LOWER, 0.0), _result(BoundKind.UPPER, 0.5))
    assert gap == pytest.approx(0.5)


def test_gap_tolerates_roundoff():
    gap = optimality_gap(_result(BoundKind.LOWER, 100.0 + 1e-5), _result(BoundKind.UPPER, 100.0))
    assert gap == pytest.approx(-1e-7)


def test_gap_rejects_crossed_bounds():
    with pytest.raises(BoundChainViolation):
        optimality_gap(_result(BoundKind.LOWER, 110.0), _result(BoundKind.UPPER, 100.0))


def test_gap_rejects_swapped_kinds():
    with pytest.raises(InvalidBoundKinds):
        optimality_gap(_result(BoundKind.UPPER, 90.0), _result(BoundKind.LOWER, 100.0))


def test_gap_rejects_failed_runs():
    with pytest.raises(InvalidBoundKinds):
        optimality_gap(
            _result(BoundKind.LOWER, 90.0, SolveStatus.NUMERICAL_FAILURE), _result(BoundKind.UPPER, 100.0)
        )


def test_options_from_settings_ignore_unset_overrides():
    opts = SolveOptions.from_settings(rng_seed=None, multistart_count=3)

    assert opts.rng_seed == 0
    assert opts.multistart_count == 3


def test_barrier_on_single_bus(one_bus):
    result = solve_jabr_barrier(one_bus, SolveOptions(max_iter=100))

    assert result.bound_kind == BoundKind.LOWER
    assert result.status == SolveStatus.OPTIMAL
    assert result.objective == pytest.approx(5.0, rel=1e-4)
    assert result.max_violation <= 1e-6


def test_rotated_cone_barrier_keeps_both_sides_positive():
    builder = FormulationBuilder("cone")
    u = builder.add_variable("u[1]")
    t = builder.add_variable("t[1]")
    w = builder.add_variable("w[1]")
    builder.add_cone("cone", (1,), [u], t, w)
    problem = _problem_from(builder.build())
    solver = BarrierSolver(problem, SolveOptions())
    x = np.array([0.0, 1.0, 4.0])

    grad, hess = solver.barrier(x, 0.0)

    assert problem.nu == 4.0
    # cone gap 4 plus the sides t = 1 and w = 4
    assert grad == pytest.approx(np.array([0.0, -2.0, -0.5]))
    assert np.allclose(hess, hess.T)
    assert np.all(np.linalg.eigvalsh(hess) > 0.0)
    assert not solver.strictly_interior(np.array([0.0, -1.0, -4.0]))


def test_local_on_single_bus(one_bus):
    result = solve_polar_local(one_bus, SolveOptions(multistart_count=2))

    assert result.bound_kind == BoundKind.UPPER
    assert result.status in FEASIBLE
    assert result.objective == pytest.approx(5.0, rel=1e-6)
    report = evaluate(build("polar", one_bus), result.point)
    assert report.max_violation <= 1e-6


def test_barrier_stops_at_iteration_limit(two_bus):
    result = solve_jabr_barrier(two_bus, SolveOptions(max_iter=1))

    assert result.status in {SolveStatus.ITERATION_LIMIT, SolveStatus.NUMERICAL_FAILURE, SolveStatus.INFEASIBLE_DETECTED}
    assert result.status != SolveStatus.OPTIMAL


def test_local_result_is_reproducible(two_bus):
    opts = SolveOptions(multistart_count=3, rng_seed=11)
    first = solve_polar_local(two_bus, opts)
    second = solve_polar_local(two_bus, opts)

    assert first.status == second.status
    assert first.objective == second.objective
    assert first.point == second.point


def test_bound_chain_on_two_bus(two_bus):
    report = bound_report(two_bus, SolveOptions(multistart_count=3))

    assert report.lower is not None and report.upper is not None
    if report.lower.status in FEASIBLE and report.upper.status in FEASIBLE:
        assert report.gap is not None
        assert report.gap >= -1e-6
        assert report.lower.objective <= report.upper.objective + 1e-6 * max(1.0, abs(report.upper.objective))


def test_case5_bounds_bracket_the_optimum(case5):
    report = bound_report(case5, SolveOptions(multistart_count=4, rng_seed=0))

    assert report.upper.status in FEASIBLE
    assert report.upper.max_violation <= 1e-6
    # no feasible dispatch can beat the relaxation; the known optimum is near 17551.89
    assert report.upper.objective >= 17551.89 * (1 - 1e-4)
    if report.lower.status in FEASIBLE:
        assert report.lower.objective <= 17551.89 * (1 + 1e-4)
        assert report.gap >= -1e-6


def test_only_requested_bounds_run(two_bus):
    report = bound_report(two_bus, SolveOptions(multistart_count=1), lb=False)

    assert report.lower is None
    assert report.gap is None
    assert math.isfinite(report.upper.objective) or report.upper.status == SolveStatus.NUMERICAL_FAILURE
