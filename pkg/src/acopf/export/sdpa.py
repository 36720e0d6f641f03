"""Sparse SDPA text for formulations made of linear rows, cones and PSD blocks.

The primal is read as: minimize cᵀx subject to F(x) = Σ_k F_k·x_k − F_0 ⪰ 0.
Blocks appear in this order: the formulation's PSD blocks, one 4×4 block
per second-order cone, then a single diagonal block holding every scalar
inequality, equality halves and finite variable bound.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, List, Tuple

from shared.errors import UnsupportedConstraint

from ..formulation import Formulation, MatrixSense, Polynomial, Sense

# (matrix index k, block, row, col) -> value, all 1-based
Entries = Dict[Tuple[int, int, int, int], float]


def _fmt(value: float) -> str:
    return format(value, ".17g")


def _affine(poly: Polynomial, what: str) -> Tuple[float, Dict[int, float]]:
    if not poly.is_affine:
        raise UnsupportedConstraint(f"{what} is not affine and cannot be written as SDPA")
    return poly.constant_term, poly.linear_coefficients()


class _Writer:
    def __init__(self) -> None:
        self.entries: Entries = defaultdict(float)
        self.sizes: List[int] = []

    def put(self, block: int, i: int, j: int, expr: Polynomial, what: str) -> None:
        """Places an affine expression at (i, j), upper triangle, of a block."""
        i, j = min(i, j), max(i, j)
        constant, linear = _affine(expr, what)
        if constant:
            self.entries[(0, block, i, j)] -= constant
        for k, coef in linear.items():
            self.entries[(k + 1, block, i, j)] += coef

    def add_block(self, size: int) -> int:
        self.sizes.append(size)
        return len(self.sizes)


def _cone_embedding(members, t: Polynomial, w: Polynomial) -> List[Tuple[int, int, Polynomial]]:
    """Upper triangle of the real form of [[t, u1 + i·u2], [u1 − i·u2, w]]."""
    u1 = members[0]
    u2 = members[1] if len(members) > 1 else Polynomial()
    return [
        (1, 1, t),
        (1, 2, u1),
        (1, 4, -u2),
        (2, 2, w),
        (2, 3, u2),
        (3, 3, t),
        (3, 4, u1),
        (4, 4, w),
    ]


def export_sdpa(f: Formulation) -> str:
    offset, objective = _affine(f.objective, "objective")
    writer = _Writer()

    for psd in f.psd_blocks:
        block = writer.add_block(psd.dim)
        sign = 1.0 if psd.sense == MatrixSense.PSD else -1.0
        for i, j, expr in psd.entries:
            writer.put(block, i + 1, j + 1, sign * expr, f"{psd.tag}{psd.key}")

    for cone in f.cones:
        if len(cone.members) > 2:
            raise UnsupportedConstraint(f"{cone.tag}{cone.key}: cones with more than two members are not exported")
        block = writer.add_block(4)
        w = cone.w if cone.w is not None else cone.t
        for i, j, expr in _cone_embedding(cone.members, cone.t, w):
            writer.put(block, i, j, expr, f"{cone.tag}{cone.key}")

    rows: List[Tuple[Polynomial, str]] = []
    for c in f.constraints:
        what = f"{c.tag}{c.key}"
        if c.sense in (Sense.GE, Sense.EQ):
            rows.append((c.poly - c.rhs, what))
        if c.sense in (Sense.LE, Sense.EQ):
            rows.append((c.rhs - c.poly, what))
    for k, variable in enumerate(f.variables):
        x = Polynomial.variable(k)
        if math.isfinite(variable.lower):
            rows.append((x - variable.lower, variable.name))
        if math.isfinite(variable.upper):
            rows.append((variable.upper - x, variable.name))
    if rows or not writer.sizes:
        # SDPA needs at least one block; an empty row reads 0 ≥ 0
        block = writer.add_block(-max(1, len(rows)))
        for r, (expr, what) in enumerate(rows, start=1):
            writer.put(block, r, r, expr, what)

    lines = [
        f"* acopf formulation {f.kind} grid {f.grid_hash}",
        f"* sense min sign +1 objective offset {_fmt(offset)}",
        f"{f.n_vars} = mDIM",
        f"{len(writer.sizes)} = nBLOCK",
        " ".join(str(size) for size in writer.sizes) + " = bLOCKsTRUCT",
        " ".join(_fmt(objective.get(k, 0.0)) for k in range(f.n_vars)),
    ]
    for (k, block, i, j), value in sorted(writer.entries.items()):
        if value != 0.0:
            lines.append(f"{k} {block} {i} {j} {_fmt(value)}")
    return "\n".join(lines) + "\n"
