"""Primal log-barrier path following for the conic relaxation.

Every inequality of the formulation is compiled to a quadratic g(x) ≤ 0 on a
small support of variables. The rotated cones use g = Σu² − t·w and carry
−log(t·w − Σu²) − log t − log w, which is self-concordant on the cone with
parameter 4.
Equalities must be affine and are kept as rows of A·x = b; each centering
step solves the regularized KKT system of an infeasible-start Newton method.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from loguru import logger

from shared.errors import UnsupportedConstraint
from shared.schemas import BoundKind, Grid, SolveOptions, SolveResult, SolveStatus

from ..builders.jabr import build_jabr_socp, c_name, s_name
from ..formulation import Formulation, Polynomial, Sense, evaluate
from ..network import require_valid

REG_START = 1e-10
REG_MAX = 1e-2
MAX_CENTERING_STEPS = 50
PAIR_SHRINK = 0.999


class _NumericalFailure(Exception):
    pass


@dataclass
class _Quad:
    """const + linᵀx_S + ½·x_Sᵀ·Q·x_S over the support S."""

    idx: np.ndarray
    const: float
    lin: np.ndarray
    quad: np.ndarray
    nu: float = 1.0
    # affine pieces that must stay positive (the t and w of a rotated cone)
    sides: List["_Quad"] = field(default_factory=list)

    def value(self, x: np.ndarray) -> float:
        xs = x[self.idx]
        return float(self.const + self.lin @ xs + 0.5 * xs @ self.quad @ xs)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.lin + self.quad @ x[self.idx]

    def with_slack(self, column: int) -> "_Quad":
        """g(x) − σ with σ stored at `column`."""
        k = len(self.idx)
        quad = np.zeros((k + 1, k + 1))
        quad[:k, :k] = self.quad
        return replace(
            self,
            idx=np.append(self.idx, column),
            lin=np.append(self.lin, -1.0),
            quad=quad,
        )


def _compile(poly: Polynomial) -> _Quad:
    if poly.degree() > 2:
        raise UnsupportedConstraint("barrier solver handles polynomials of degree at most 2")
    support = sorted(poly.variables())
    local = {v: k for k, v in enumerate(support)}
    lin = np.zeros(len(support))
    quad = np.zeros((len(support), len(support)))
    const = 0.0
    for monomial, coef in poly:
        if len(monomial) == 0:
            const += coef
        elif len(monomial) == 1:
            lin[local[monomial[0]]] += coef
        else:
            i, j = local[monomial[0]], local[monomial[1]]
            if i == j:
                quad[i, i] += 2.0 * coef
            else:
                quad[i, j] += coef
                quad[j, i] += coef
    return _Quad(np.asarray(support, dtype=int), const, lin, quad)


@dataclass
class _Problem:
    n: int
    objective: _Quad
    inequalities: List[_Quad]
    lower: np.ndarray
    upper: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def nu(self) -> float:
        bounds = np.count_nonzero(np.isfinite(self.lower) & (self.lower < self.upper))
        bounds += np.count_nonzero(np.isfinite(self.upper) & (self.lower < self.upper))
        return float(bounds) + sum(q.nu + len(q.sides) for q in self.inequalities)


def _problem_from(f: Formulation) -> _Problem:
    n = f.n_vars
    lower = np.array([v.lower for v in f.variables])
    upper = np.array([v.upper for v in f.variables])

    rows: List[np.ndarray] = []
    rhs: List[float] = []
    inequalities: List[_Quad] = []
    for constraint in f.constraints:
        if constraint.sense == Sense.EQ:
            if not constraint.poly.is_affine:
                raise UnsupportedConstraint(f"{constraint.tag}{constraint.key}: equality is not affine")
            row = np.zeros(n)
            for i, coef in constraint.poly.linear_coefficients().items():
                row[i] = coef
            rows.append(row)
            rhs.append(constraint.rhs)
        elif constraint.sense == Sense.LE:
            inequalities.append(_compile(constraint.poly - constraint.rhs))
        else:
            inequalities.append(_compile(constraint.rhs - constraint.poly))
    for cone in f.cones:
        compiled = _compile(cone.gap_polynomial())
        compiled.nu = 2.0
        compiled.sides = [_compile(-cone.t)] + ([_compile(-cone.w)] if cone.w is not None else [])
        inequalities.append(compiled)
    if f.psd_blocks:
        raise UnsupportedConstraint("barrier solver does not handle PSD blocks")

    for k in np.flatnonzero(lower == upper):
        row = np.zeros(n)
        row[k] = 1.0
        rows.append(row)
        rhs.append(float(lower[k]))

    a = np.vstack(rows) if rows else np.zeros((0, n))
    return _Problem(n, _compile(f.objective), inequalities, lower, upper, a, np.asarray(rhs, dtype=float))


def _interior(lower: float, upper: float) -> float:
    if math.isfinite(lower) and math.isfinite(upper):
        return 0.5 * (lower + upper)
    if math.isfinite(lower):
        return lower + 1.0
    if math.isfinite(upper):
        return upper - 1.0
    return 0.0


def jabr_start(grid: Grid, f: Formulation) -> np.ndarray:
    """Strictly interior start: equal squared magnitudes where possible, pairs inside their cones."""
    topo = require_valid(grid)
    x = np.array([_interior(v.lower, v.upper) for v in f.variables])

    lows = [max(0.0, bus.v_min) ** 2 for bus in grid.buses]
    highs = [bus.v_max**2 for bus in grid.buses]
    common_low, common_high = max(lows), min(highs)
    for bus, low, high in zip(grid.buses, lows, highs):
        if common_low < common_high:
            low, high = common_low, common_high
        x[f.index_of(c_name(bus.id))] = _interior(low, high) if low < high else low

    for b, a in topo.pairs:
        arcs = [arc for arc in topo.l0 if (arc.bus, arc.other) == (b, a)]
        eta_min = max(max(arc.branch.eta_min for arc in arcs), -math.pi / 2)
        eta_max = min(min(arc.branch.eta_max for arc in arcs), math.pi / 2)
        angle = 0.5 * (eta_min + eta_max)
        radius = PAIR_SHRINK * math.sqrt(x[f.index_of(c_name(b))] * x[f.index_of(c_name(a))])
        x[f.index_of(c_name(b, a))] = radius * math.cos(angle)
        x[f.index_of(s_name(b, a))] = radius * math.sin(angle)
    return x


class BarrierSolver:
    def __init__(self, problem: _Problem, opts: SolveOptions) -> None:
        self.p = problem
        self.opts = opts
        self.free_lower = np.isfinite(problem.lower) & (problem.lower < problem.upper)
        self.free_upper = np.isfinite(problem.upper) & (problem.lower < problem.upper)

    # barrier pieces

    def strictly_interior(self, x: np.ndarray) -> bool:
        p = self.p
        if np.any(x[self.free_lower] <= p.lower[self.free_lower]):
            return False
        if np.any(x[self.free_upper] >= p.upper[self.free_upper]):
            return False
        for q in p.inequalities:
            if q.value(x) >= 0.0:
                return False
            if any(side.value(x) >= 0.0 for side in q.sides):
                return False
        return True

    def barrier(self, x: np.ndarray, t: float, hessian: bool = True) -> Tuple[np.ndarray, np.ndarray | None]:
        p = self.p
        obj = p.objective
        grad = np.zeros(p.n)
        hess = np.zeros((p.n, p.n)) if hessian else None
        grad[obj.idx] += t * obj.grad(x)
        if hess is not None:
            hess[np.ix_(obj.idx, obj.idx)] += t * obj.quad

        lo = self.free_lower
        gap = x[lo] - p.lower[lo]
        grad[lo] -= 1.0 / gap
        if hess is not None:
            hess[lo, lo] += 1.0 / gap**2
        up = self.free_upper
        gap = p.upper[up] - x[up]
        grad[up] += 1.0 / gap
        if hess is not None:
            hess[up, up] += 1.0 / gap**2

        for q in p.inequalities:
            slack = -q.value(x)
            local = q.grad(x)
            grad[q.idx] += local / slack
            if hess is not None:
                hess[np.ix_(q.idx, q.idx)] += np.outer(local, local) / slack**2 + q.quad / slack
            for side in q.sides:
                slack = -side.value(x)
                local = side.grad(x)
                grad[side.idx] += local / slack
                if hess is not None:
                    hess[np.ix_(side.idx, side.idx)] += np.outer(local, local) / slack**2
        return grad, hess

    def kkt_step(self, hess: np.ndarray, rhs_dual: np.ndarray, rhs_primal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n, m = self.p.n, self.p.a.shape[0]
        reg = REG_START
        while reg <= REG_MAX:
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = hess + reg * np.eye(n)
            kkt[:n, n:] = self.p.a.T
            kkt[n:, :n] = self.p.a
            kkt[n:, n:] = -reg * np.eye(m)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                    step = scipy.linalg.solve(kkt, np.concatenate([rhs_dual, rhs_primal]), assume_a="sym")
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
                reg *= 10.0
                continue
            if np.all(np.isfinite(step)):
                return step[:n], step[n:]
            reg *= 10.0
        raise _NumericalFailure("KKT system stayed singular after regularization")

    def residual(self, x: np.ndarray, y: np.ndarray, t: float) -> float:
        grad, _ = self.barrier(x, t, hessian=False)
        dual = grad + self.p.a.T @ y
        primal = self.p.a @ x - self.p.b
        return float(math.sqrt(dual @ dual + primal @ primal))

    def center(self, x: np.ndarray, y: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        for _ in range(MAX_CENTERING_STEPS):
            grad, hess = self.barrier(x, t)
            dual = grad + self.p.a.T @ y
            primal = self.p.a @ x - self.p.b
            dx, dy = self.kkt_step(hess, -dual, -primal)
            decrement = float(dx @ hess @ dx)
            if np.linalg.norm(primal) <= 0.1 * self.opts.tol_feas and decrement <= 1e-10:
                break

            norm = math.sqrt(float(dual @ dual + primal @ primal))
            step = 1.0
            while step > 1e-12 and not self.strictly_interior(x + step * dx):
                step *= 0.5
            while step > 1e-12 and self.residual(x + step * dx, y + step * dy, t) > (1.0 - 0.01 * step) * norm:
                step *= 0.5
            if step <= 1e-12:
                break
            x = x + step * dx
            y = y + step * dy
            if not self.strictly_interior(x):
                raise _NumericalFailure("iterate left the interior")
        return x, y

    def objective(self, x: np.ndarray) -> float:
        return self.p.objective.value(x)

    def run(self, x: np.ndarray, stop_below: Optional[int] = None) -> Tuple[SolveStatus, np.ndarray, int]:
        """Path following from a strictly interior x.

        With `stop_below` set, returns as soon as that coordinate turns negative
        (phase I).
        """
        if not self.strictly_interior(x):
            raise _NumericalFailure("start is not strictly interior")
        nu = max(self.p.nu, 1.0)
        t = nu / max(1.0, abs(self.objective(x)))
        y = np.zeros(self.p.a.shape[0])
        for iteration in range(1, self.opts.max_iter + 1):
            x, y = self.center(x, y, t)
            primal = float(np.linalg.norm(self.p.a @ x - self.p.b, np.inf)) if len(self.p.b) else 0.0
            value = self.objective(x)
            logger.debug("barrier iter {}: t={:.3e} objective={:.8g} primal={:.2e}", iteration, t, value, primal)
            if stop_below is not None and x[stop_below] < 0.0:
                return SolveStatus.FEASIBLE, x, iteration
            if nu / t <= self.opts.tol_opt * max(1.0, abs(value)) and primal <= self.opts.tol_feas:
                return SolveStatus.OPTIMAL, x, iteration
            t /= self.opts.barrier_reduction
        return SolveStatus.ITERATION_LIMIT, x, self.opts.max_iter


def _phase_one(problem: _Problem, x: np.ndarray, opts: SolveOptions) -> Optional[np.ndarray]:
    """Finds x with every non-cone inequality strictly negative, or None."""
    n = problem.n
    worst = max((q.value(x) for q in problem.inequalities if not q.sides), default=-1.0)
    objective = _Quad(np.array([n]), 0.0, np.array([1.0]), np.zeros((1, 1)), nu=0.0)
    inequalities = [q.with_slack(n) if not q.sides else q for q in problem.inequalities]
    augmented = _Problem(
        n=n + 1,
        objective=objective,
        inequalities=inequalities,
        lower=np.append(problem.lower, -1.0),
        upper=np.append(problem.upper, math.inf),
        a=np.hstack([problem.a, np.zeros((problem.a.shape[0], 1))]),
        b=problem.b,
    )
    status, z, _ = BarrierSolver(augmented, opts).run(np.append(x, worst + 1.0), stop_below=n)
    if status == SolveStatus.FEASIBLE:
        return z[:n]
    return None


def solve_jabr_barrier(grid: Grid, opts: SolveOptions | None = None) -> SolveResult:
    """Lower bound on the optimal cost from the second-order cone relaxation."""
    opts = opts or SolveOptions.from_settings()
    f = build_jabr_socp(grid)
    problem = _problem_from(f)
    x = jabr_start(grid, f)
    logger.info("Barrier solve on {} variables, {} inequalities, {} equalities", problem.n, len(problem.inequalities), len(problem.b))

    def result(status: SolveStatus, x: np.ndarray, iterations: int) -> SolveResult:
        point: Dict[str, float] = {v.name: float(value) for v, value in zip(f.variables, x)}
        report = evaluate(f, point)
        return SolveResult(
            status=status,
            objective=report.objective,
            point=point,
            max_violation=report.max_violation,
            bound_kind=BoundKind.LOWER,
            iterations=iterations,
            formulation=f.kind,
        )

    try:
        solver = BarrierSolver(problem, opts)
        if not solver.strictly_interior(x):
            start = _phase_one(problem, x, opts)
            if start is None:
                logger.info("Phase I found no strictly feasible point")
                return result(SolveStatus.INFEASIBLE_DETECTED, x, 0)
            x = start
        status, x, iterations = solver.run(x)
    except _NumericalFailure as exc:
        logger.warning("Barrier solve failed: {}", exc)
        return result(SolveStatus.NUMERICAL_FAILURE, x, 0)

    outcome = result(status, x, iterations)
    if status == SolveStatus.OPTIMAL and outcome.max_violation > opts.tol_feas:
        outcome = outcome.model_copy(update={"status": SolveStatus.ITERATION_LIMIT})
    logger.info("Barrier solve finished: {} objective={:.8g} after {} iterations", outcome.status.value, outcome.objective, iterations)
    return outcome
