"""Multistart penalty method on the polar model.

The state is z = [θ, v, P, Q]. Power-flow mismatches and branch flows are
evaluated with sparse complex admittance matrices, and their Jacobians use
the usual polar derivatives of V∘conj(Y·V). Each start minimizes the
normalized cost plus a growing quadratic penalty with projected
Gauss-Newton steps, then a minimum-norm feasibility polish. A start only
counts once its point passes the exact evaluator of the polar formulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from shared.schemas import BoundKind, Grid, SolveOptions, SolveResult, SolveStatus

from ..builders.common import is_bounded, phase_sides, sg_im, sg_re
from ..builders.polar import build_polar, theta, v_mag
from ..formulation import evaluate
from ..network import network_admittance, require_valid

PENALTY_START = 10.0
PENALTY_GROWTH = 10.0
PENALTY_ROUNDS = 8
INNER_STEPS = 50
POLISH_STEPS = 30
START_ANGLE = math.pi / 6
# magnitudes are kept away from zero so V/|V| stays defined
MIN_MAGNITUDE = 1e-6


@dataclass
class _Attempt:
    start: int
    point: Dict[str, float]
    objective: float
    max_violation: float
    converged: bool


class PolarProblem:
    """Vectorized residuals of the polar model over z = [θ, v, P, Q]."""

    def __init__(self, grid: Grid) -> None:
        topo = require_valid(grid)
        self.grid = grid
        self.topo = topo
        n = len(topo.bus_ids)
        gens = [(b, g) for b in topo.bus_ids for g in topo.generators[b]]
        self.n, self.ng = n, len(gens)
        self.gens = gens

        self.ybus = network_admittance(grid)
        self.demand = np.array([bus.demand for bus in grid.buses])
        rows = [topo.position[b] for b, _ in gens]
        self.cg = sparse.csr_matrix((np.ones(len(gens)), (rows, range(len(gens)))), shape=(n, len(gens)))

        arcs = [arc for arc in topo.arcs if is_bounded(arc.s_max)]
        self.arcs = arcs
        m = len(arcs)
        frm = [topo.position[arc.bus] for arc in arcs]
        to = [topo.position[arc.other] for arc in arcs]
        self.cf = sparse.csr_matrix((np.ones(m), (range(m), frm)), shape=(m, n))
        self.yarc = sparse.csr_matrix(
            (np.array([arc.diag for arc in arcs] + [arc.off for arc in arcs], dtype=complex), (list(range(m)) * 2, frm + to)),
            shape=(m, n),
        )
        self.s_max_sq = np.array([arc.s_max**2 for arc in arcs])

        # phase rows: a·θ ≤ c
        phase_rows, phase_rhs = [], []
        for arc in topo.l0:
            lower, upper = phase_sides(arc)
            b, a = topo.position[arc.bus], topo.position[arc.other]
            if lower:
                row = np.zeros(n)
                row[b], row[a] = -1.0, 1.0
                phase_rows.append(row)
                phase_rhs.append(-arc.branch.eta_min)
            if upper:
                row = np.zeros(n)
                row[b], row[a] = 1.0, -1.0
                phase_rows.append(row)
                phase_rhs.append(arc.branch.eta_max)
        self.phase_a = np.array(phase_rows).reshape(len(phase_rows), n)
        self.phase_c = np.array(phase_rhs)

        r = topo.position[topo.reference]
        self.lower = np.concatenate(
            [
                np.full(n, -math.pi),
                [max(bus.v_min, MIN_MAGNITUDE) for bus in grid.buses],
                [gen.p_min for _, gen in gens],
                [gen.q_min for _, gen in gens],
            ]
        )
        self.upper = np.concatenate(
            [
                np.full(n, math.pi),
                [bus.v_max for bus in grid.buses],
                [gen.p_max for _, gen in gens],
                [gen.q_max for _, gen in gens],
            ]
        )
        self.lower[r] = self.upper[r] = 0.0

        costs = np.array([gen.cost for _, gen in gens]).reshape(len(gens), 3)
        self.c0, self.c1, self.c2 = costs[:, 0], costs[:, 1], costs[:, 2]
        self.cost_scale = max(1.0, float(np.max(np.abs(costs[:, 1:]), initial=0.0)))

    @property
    def size(self) -> int:
        return 2 * self.n + 2 * self.ng

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n, ng = self.n, self.ng
        return z[:n], z[n : 2 * n], z[2 * n : 2 * n + ng], z[2 * n + ng :]

    # objective

    def cost(self, z: np.ndarray) -> float:
        p = self.split(z)[2]
        return float(np.sum(self.c0 + self.c1 * p + self.c2 * p * p))

    def cost_grad(self, z: np.ndarray) -> np.ndarray:
        grad = np.zeros(self.size)
        p = self.split(z)[2]
        grad[2 * self.n : 2 * self.n + self.ng] = self.c1 + 2.0 * self.c2 * p
        return grad

    def cost_hess_diag(self) -> np.ndarray:
        diag = np.zeros(self.size)
        diag[2 * self.n : 2 * self.n + self.ng] = 2.0 * self.c2
        return diag

    # constraints

    def equalities(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Real and imaginary balance mismatch with its Jacobian."""
        va, vm, p, q = self.split(z)
        v = vm * np.exp(1j * va)
        ibus = self.ybus @ v
        mis = v * np.conj(ibus) + self.demand - self.cg @ (p + 1j * q)

        diag_v = sparse.diags(v)
        diag_i = sparse.diags(ibus)
        diag_vnorm = sparse.diags(v / np.abs(v))
        ds_dvm = (diag_v @ (self.ybus @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm).toarray()
        ds_dva = (1j * diag_v @ (diag_i - self.ybus @ diag_v).conj()).toarray()

        cg = self.cg.toarray()
        zeros = np.zeros_like(cg)
        jac = np.block(
            [
                [ds_dva.real, ds_dvm.real, -cg, zeros],
                [ds_dva.imag, ds_dvm.imag, zeros, -cg],
            ]
        )
        return np.concatenate([mis.real, mis.imag]), jac

    def inequalities(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flow limits |S|² − S̄² and phase rows, all required ≤ 0."""
        va, vm, _, _ = self.split(z)
        v = vm * np.exp(1j * va)
        blocks, jacs = [], []

        if self.arcs:
            i_arc = self.yarc @ v
            v_from = self.cf @ v
            s = v_from * np.conj(i_arc)
            diag_v = sparse.diags(v)
            diag_vnorm = sparse.diags(v / np.abs(v))
            conj_i = sparse.diags(np.conj(i_arc))
            diag_from = sparse.diags(v_from)
            ds_dva = (1j * (conj_i @ self.cf @ diag_v - diag_from @ (self.yarc @ diag_v).conj())).toarray()
            ds_dvm = (conj_i @ self.cf @ diag_vnorm + diag_from @ (self.yarc @ diag_vnorm).conj()).toarray()
            d_va = 2.0 * (s.real[:, None] * ds_dva.real + s.imag[:, None] * ds_dva.imag)
            d_vm = 2.0 * (s.real[:, None] * ds_dvm.real + s.imag[:, None] * ds_dvm.imag)
            blocks.append(np.abs(s) ** 2 - self.s_max_sq)
            jacs.append(np.hstack([d_va, d_vm, np.zeros((len(self.arcs), 2 * self.ng))]))

        if len(self.phase_c):
            blocks.append(self.phase_a @ va - self.phase_c)
            jacs.append(np.hstack([self.phase_a, np.zeros((len(self.phase_c), self.n + 2 * self.ng))]))

        if not blocks:
            return np.zeros(0), np.zeros((0, self.size))
        return np.concatenate(blocks), np.vstack(jacs)

    def violation(self, z: np.ndarray) -> float:
        h, _ = self.equalities(z)
        g, _ = self.inequalities(z)
        return float(max(np.max(np.abs(h), initial=0.0), np.max(g, initial=0.0)))

    def point(self, z: np.ndarray) -> Dict[str, float]:
        va, vm, p, q = self.split(z)
        point: Dict[str, float] = {}
        for k, b in enumerate(self.topo.bus_ids):
            point[v_mag(b)] = float(vm[k])
            point[theta(b)] = float(va[k])
        for k, (b, gen) in enumerate(self.gens):
            point[sg_re(b, gen.index)] = float(p[k])
            point[sg_im(b, gen.index)] = float(q[k])
        return point

    # starts

    def draw_start(self, rng: np.random.Generator) -> np.ndarray:
        z = np.zeros(self.size)
        n = self.n
        for k, bus in enumerate(self.grid.buses):
            low = max(bus.v_min, MIN_MAGNITUDE)
            high = bus.v_max if math.isfinite(bus.v_max) else max(low, 1.0) + 0.1
            z[n + k] = rng.uniform(low, high)
        z[:n] = rng.uniform(-START_ANGLE, START_ANGLE, size=n)
        z[self.topo.position[self.topo.reference]] = 0.0
        for k in range(2 * n, self.size):
            lo, hi = self.lower[k], self.upper[k]
            if math.isfinite(lo) and math.isfinite(hi):
                z[k] = 0.5 * (lo + hi)
            else:
                z[k] = float(np.clip(0.0, lo, hi))
        return z


class PenaltySolver:
    def __init__(self, problem: PolarProblem, opts: SolveOptions) -> None:
        self.p = problem
        self.opts = opts

    def merit(self, z: np.ndarray, weight: float) -> float:
        h, _ = self.p.equalities(z)
        g, _ = self.p.inequalities(z)
        g = np.maximum(g, 0.0)
        return self.p.cost(z) / self.p.cost_scale + weight * float(h @ h + g @ g)

    def _free(self, z: np.ndarray, grad: np.ndarray) -> np.ndarray:
        lo, hi = self.p.lower, self.p.upper
        eps = 1e-12
        fixed = lo == hi
        at_lower = (z <= lo + eps) & (grad > 0)
        at_upper = (z >= hi - eps) & (grad < 0)
        return ~(fixed | at_lower | at_upper)

    def minimize(self, z: np.ndarray, weight: float) -> Tuple[np.ndarray, bool]:
        """Projected Gauss-Newton on the penalized merit."""
        p = self.p
        for _ in range(INNER_STEPS):
            h, jh = p.equalities(z)
            g, jg = p.inequalities(z)
            active = g > 0
            ga, jga = g[active], jg[active]

            grad = p.cost_grad(z) / p.cost_scale + 2.0 * weight * (jh.T @ h + jga.T @ ga)
            hess = 2.0 * weight * (jh.T @ jh + jga.T @ jga) + np.diag(p.cost_hess_diag() / p.cost_scale)
            free = self._free(z, grad)
            if not free.any():
                return z, True

            sub = hess[np.ix_(free, free)] + 1e-10 * np.eye(int(free.sum()))
            step = np.zeros_like(z)
            try:
                step[free] = np.linalg.solve(sub, -grad[free])
            except np.linalg.LinAlgError:
                step[free] = -grad[free]

            current = self.merit(z, weight)
            alpha = 1.0
            while alpha > 1e-10:
                trial = np.clip(z + alpha * step, p.lower, p.upper)
                if self.merit(trial, weight) <= current + 1e-4 * float(grad @ (trial - z)):
                    break
                alpha *= 0.5
            else:
                return z, False
            if np.max(np.abs(trial - z)) <= 1e-12:
                return trial, True
            z = trial
        return z, False

    def polish(self, z: np.ndarray) -> np.ndarray:
        """Minimum-norm Gauss-Newton steps onto the constraint set."""
        p = self.p
        movable = p.lower < p.upper
        for _ in range(POLISH_STEPS):
            h, jh = p.equalities(z)
            g, jg = p.inequalities(z)
            active = g > 0
            residual = np.concatenate([h, g[active]])
            if np.max(np.abs(residual), initial=0.0) <= 0.1 * self.opts.tol_feas:
                break
            jac = np.vstack([jh, jg[active]])[:, movable]
            step = np.zeros_like(z)
            step[movable] = np.linalg.lstsq(jac, -residual, rcond=None)[0]
            norm = float(residual @ residual)
            alpha = 1.0
            while alpha > 1e-8:
                trial = np.clip(z + alpha * step, p.lower, p.upper)
                h_t, _ = p.equalities(trial)
                g_t, _ = p.inequalities(trial)
                g_t = np.maximum(g_t, 0.0)
                if float(h_t @ h_t + g_t @ g_t) < norm:
                    break
                alpha *= 0.5
            else:
                break
            z = trial
        return z

    def solve(self, z: np.ndarray) -> Tuple[np.ndarray, bool]:
        weight = PENALTY_START
        converged = False
        for _ in range(PENALTY_ROUNDS):
            z, converged = self.minimize(z, weight)
            if self.p.violation(z) <= 0.1 * self.opts.tol_feas and converged:
                break
            weight *= PENALTY_GROWTH
        return self.polish(z), converged


def solve_polar_local(grid: Grid, opts: SolveOptions | None = None) -> SolveResult:
    """Upper bound on the optimal cost from a certified feasible polar point."""
    opts = opts or SolveOptions.from_settings()
    f = build_polar(grid)
    problem = PolarProblem(grid)
    solver = PenaltySolver(problem, opts)
    rng = np.random.default_rng(opts.rng_seed)
    logger.info("Local polar solve with {} starts (seed {})", opts.multistart_count, opts.rng_seed)

    attempts: List[_Attempt] = []
    for start in range(opts.multistart_count):
        z0 = problem.draw_start(rng)
        try:
            with np.errstate(all="ignore"):
                z, converged = solver.solve(z0)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            logger.debug("start {} failed: {}", start, exc)
            continue
        if not np.all(np.isfinite(z)):
            continue
        point = problem.point(z)
        report = evaluate(f, point)
        logger.debug("start {}: objective={:.8g} violation={:.2e}", start, report.objective, report.max_violation)
        attempts.append(_Attempt(start, point, report.objective, report.max_violation, converged))

    feasible = [a for a in attempts if a.max_violation <= opts.tol_feas]
    best: Optional[_Attempt]
    if feasible:
        best = min(feasible, key=lambda a: (a.objective, a.start))
        status = SolveStatus.OPTIMAL if best.converged else SolveStatus.FEASIBLE
    else:
        best = min(attempts, key=lambda a: (a.max_violation, a.start), default=None)
        status = SolveStatus.NUMERICAL_FAILURE

    if best is None:
        logger.warning("Local polar solve produced no finite point")
        return SolveResult(
            status=SolveStatus.NUMERICAL_FAILURE,
            objective=math.inf,
            max_violation=math.inf,
            bound_kind=BoundKind.UPPER,
            iterations=opts.multistart_count,
            formulation=f.kind,
        )
    logger.info("Local polar solve finished: {} objective={:.8g} (start {})", status.value, best.objective, best.start)
    return SolveResult(
        status=status,
        objective=best.objective,
        point=best.point,
        max_violation=best.max_violation,
        bound_kind=BoundKind.UPPER,
        iterations=opts.multistart_count,
        formulation=f.kind,
    )
