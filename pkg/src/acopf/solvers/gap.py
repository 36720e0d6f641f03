from __future__ import annotations

from loguru import logger

from shared.errors import BoundChainViolation, InvalidBoundKinds
from shared.schemas import BoundKind, BoundsReport, Grid, SolveOptions, SolveResult

from .barrier import solve_jabr_barrier
from .local import solve_polar_local


def optimality_gap(lb: SolveResult, ub: SolveResult, tol_opt: float = 1e-6) -> float:
    """Relative gap (ub − lb)/max(1, |ub|) between a relaxation bound and a feasible cost."""
    if lb.bound_kind != BoundKind.LOWER or ub.bound_kind != BoundKind.UPPER:
        raise InvalidBoundKinds(f"expected a lower and an upper bound, got {lb.bound_kind.value} and {ub.bound_kind.value}")
    if not (lb.has_feasible_status and ub.has_feasible_status):
        raise InvalidBoundKinds(f"bounds need a feasible status, got {lb.status.value} and {ub.status.value}")
    gap = (ub.objective - lb.objective) / max(1.0, abs(ub.objective))
    if gap < -tol_opt:
        raise BoundChainViolation(f"lower bound {lb.objective:.10g} exceeds upper bound {ub.objective:.10g}")
    return gap


def bound_report(grid: Grid, opts: SolveOptions | None = None, lb: bool = True, ub: bool = True) -> BoundsReport:
    """Runs the requested solvers and adds the gap when both bounds are usable."""
    opts = opts or SolveOptions.from_settings()
    lower = solve_jabr_barrier(grid, opts) if lb else None
    upper = solve_polar_local(grid, opts) if ub else None
    gap = None
    if lower is not None and upper is not None and lower.has_feasible_status and upper.has_feasible_status:
        gap = optimality_gap(lower, upper, opts.tol_opt)
        logger.info("Optimality gap {:.3e} (lower {:.8g}, upper {:.8g})", gap, lower.objective, upper.objective)
    return BoundsReport(lower=lower, upper=upper, gap=gap)
