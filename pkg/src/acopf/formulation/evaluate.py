from __future__ import annotations

import math
from typing import List, Mapping, Tuple

import numpy as np

from shared.errors import MissingVariable, PointFormatError
from shared.schemas import ConstraintKind, ConstraintResidual, PsdResidual, ResidualReport

from .ir import Formulation, Sense

Point = Mapping[str, float]

_KIND = {Sense.EQ: ConstraintKind.EQ, Sense.LE: ConstraintKind.LE, Sense.GE: ConstraintKind.GE}


def assignment(f: Formulation, p: Point) -> np.ndarray:
    """Dense value vector for f's variables.

    Trig-linked variables take cos/sin of their angle difference whenever both
    angles are assigned, so they may be omitted from the point.
    """
    x = np.full(f.n_vars, np.nan)
    for k, variable in enumerate(f.variables):
        if variable.name in p:
            x[k] = float(p[variable.name])
    for link in f.trig_links:
        if not (math.isnan(x[link.theta_from]) or math.isnan(x[link.theta_to])):
            delta = x[link.theta_from] - x[link.theta_to]
            x[link.cos_var] = math.cos(delta)
            x[link.sin_var] = math.sin(delta)
    missing = np.flatnonzero(np.isnan(x))
    if missing.size:
        raise MissingVariable(f.variables[int(missing[0])].name)
    return x


def _bound_residuals(f: Formulation, x: np.ndarray) -> List[ConstraintResidual]:
    entries = []
    for k, variable in enumerate(f.variables):
        if math.isinf(variable.lower) and math.isinf(variable.upper):
            continue
        below = variable.lower - x[k]
        above = x[k] - variable.upper
        worst = max(below, above)
        entries.append(
            ConstraintResidual(
                tag=variable.tag,
                key=(variable.name,),
                kind=ConstraintKind.BOUND,
                residual=worst,
                violation=max(0.0, worst),
            )
        )
    return entries


def evaluate(f: Formulation, p: Point) -> ResidualReport:
    x = assignment(f, p)
    values = x.tolist()
    entries = _bound_residuals(f, x)

    for constraint in f.constraints:
        residual = constraint.poly.evaluate(values) - constraint.rhs
        if constraint.sense == Sense.EQ:
            violation = abs(residual)
        elif constraint.sense == Sense.LE:
            violation = max(0.0, residual)
        else:
            violation = max(0.0, -residual)
        entries.append(
            ConstraintResidual(
                tag=constraint.tag,
                key=constraint.key,
                kind=_KIND[constraint.sense],
                residual=residual,
                violation=violation,
            )
        )

    for cone in f.cones:
        residual = sum(m.evaluate(values) ** 2 for m in cone.members)
        t = cone.t.evaluate(values)
        if cone.w is not None:
            w = cone.w.evaluate(values)
            residual -= t * w
            violation = max(0.0, residual, -t, -w)
        else:
            residual -= t * t
            violation = max(0.0, residual, -t)
        entries.append(
            ConstraintResidual(tag=cone.tag, key=cone.key, kind=ConstraintKind.SOC, residual=residual, violation=violation)
        )

    blocks = []
    for block in f.psd_blocks:
        eigenvalues = np.linalg.eigvalsh(block.oriented(values))
        blocks.append(PsdResidual(tag=block.tag, key=block.key, dim=block.dim, min_eigenvalue=float(eigenvalues[0])))

    worst = max((e.violation for e in entries), default=0.0)
    worst = max([worst] + [max(0.0, -b.min_eigenvalue) for b in blocks])
    return ResidualReport(
        formulation=f.kind,
        objective=f.objective.evaluate(values),
        constraints=entries,
        psd_blocks=blocks,
        max_violation=worst,
    )


def check_point_names(f: Formulation, p: Point) -> None:
    """Point files name only variables of the formulation they are checked against."""
    unknown = sorted(name for name in p if not f.has(name))
    if unknown:
        shown = ", ".join(unknown[:5]) + (" ..." if len(unknown) > 5 else "")
        raise PointFormatError(f"point names variables unknown to the {f.kind} formulation: {shown}")


def feasibility(f: Formulation, p: Point, tol: float) -> Tuple[bool, float]:
    if not tol > 0:
        raise ValueError("tol must be positive")
    report = evaluate(f, p)
    return report.max_violation <= tol, report.max_violation
