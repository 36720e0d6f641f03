"""Line-oriented extractor for the MATPOWER case subset.

Only numeric literals are accepted inside the `mpc.bus`, `mpc.gen`,
`mpc.branch` and `mpc.gencost` matrices; anything else is a syntax error.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from loguru import logger

from shared.errors import CaseSemanticError, CaseSyntaxError, MissingReference, UnsupportedFeature
from shared.schemas import Branch, Bus, Generator, Grid

from .dat import _build

_MATRIX = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
_SCALAR = re.compile(r"mpc\.baseMVA\s*=\s*([^;\n]+);")
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_REQUIRED = ("bus", "gen", "branch")
_HALF_PI = math.pi / 2


@dataclass
class MatpowerCase:
    base_mva: float
    matrices: Dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, name: str) -> Optional[np.ndarray]:
        return self.matrices.get(name)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    column = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, column


def _parse_matrix(name: str, body: str, text: str, offset: int) -> np.ndarray:
    rows: List[List[float]] = []
    cursor = offset
    for chunk in re.split(r"[;\n]", body):
        start = cursor
        cursor += len(chunk) + 1
        values = [v for v in re.split(r"[\s,]+", chunk.strip()) if v]
        if not values:
            continue
        for value in values:
            if not _NUMBER.match(value):
                line, column = _position(text, start + max(chunk.find(value), 0))
                raise CaseSyntaxError(f"mpc.{name}: expected a numeric literal, found '{value}'", line, column)
        rows.append([float(v) for v in values])
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            line, column = _position(text, offset)
            raise CaseSyntaxError(f"mpc.{name}: row {k + 1} has {len(row)} columns, expected {width}", line, column)
    return np.array(rows, dtype=float)


def parse_case(text: str) -> MatpowerCase:
    clean = _strip_comments(text)
    scalar = _SCALAR.search(clean)
    if scalar is None:
        raise CaseSyntaxError("missing mpc.baseMVA", 1, 1)
    raw = scalar.group(1).strip()
    if not _NUMBER.match(raw):
        line, column = _position(clean, scalar.start(1))
        raise CaseSyntaxError(f"mpc.baseMVA: expected a numeric literal, found '{raw}'", line, column)
    case = MatpowerCase(base_mva=float(raw))
    for match in _MATRIX.finditer(clean):
        case.matrices[match.group(1)] = _parse_matrix(match.group(1), match.group(2), clean, match.start(2))
    for name in _REQUIRED:
        if name not in case.matrices:
            raise CaseSyntaxError(f"missing mpc.{name} matrix", 1, 1)
    return case


def _column(matrix: np.ndarray, index: int, default: float) -> np.ndarray:
    if matrix.shape[1] > index:
        return matrix[:, index]
    return np.full(matrix.shape[0], default)


def _require_width(name: str, matrix: np.ndarray, width: int) -> None:
    if matrix.shape[0] and matrix.shape[1] < width:
        raise CaseSyntaxError(f"mpc.{name} needs at least {width} columns", 1, 1)


def _integral(value: float, what: str) -> int:
    """Integer field of a numeric matrix; fractional or non-finite values are rejected."""
    if not math.isfinite(value) or value != math.floor(value):
        raise CaseSemanticError(f"{what} must be an integer, found {value}")
    return int(value)


def _angle_bound(degrees: float) -> float:
    # Limits at or beyond ±90° carry no tangent-form information.
    radians = math.radians(degrees)
    return max(-_HALF_PI, min(_HALF_PI, radians))


def parse_matpower(text: str) -> Grid:
    """Parse a MATPOWER case into a per-unit Grid."""
    case = parse_case(text)
    base = case.base_mva
    if not (math.isfinite(base) and base > 0):
        raise CaseSemanticError(f"baseMVA must be positive, found {base}")
    bus_m, gen_m, branch_m = case.matrices["bus"], case.matrices["gen"], case.matrices["branch"]
    _require_width("bus", bus_m, 13)
    _require_width("gen", gen_m, 10)
    _require_width("branch", branch_m, 11)

    buses: List[Bus] = []
    for k, row in enumerate(bus_m):
        bus_id = _integral(row[0], f"bus row {k + 1}: bus id")
        bus_type = _integral(row[1], f"bus {bus_id}: type")
        if bus_type == 4:
            raise UnsupportedFeature(f"bus {bus_id} is isolated (type 4)")
        if bus_type not in (1, 2, 3):
            raise CaseSemanticError(f"bus {bus_id} has invalid type {bus_type}")
        buses.append(
            _build(
                Bus,
                id=bus_id,
                bus_type=bus_type,
                demand_re=row[2] / base,
                demand_im=row[3] / base,
                shunt_re=row[4] / base,
                shunt_im=row[5] / base,
                vm_hint=row[7],
                va_hint=math.radians(row[8]),
                v_max=row[11],
                v_min=row[12],
            )
        )
    if not any(b.bus_type == 3 for b in buses):
        raise MissingReference("no bus has type 3")
    known = {b.id for b in buses}

    branches: List[Branch] = []
    counts: Dict[tuple, int] = defaultdict(int)
    ang_min = _column(branch_m, 11, -360.0)
    ang_max = _column(branch_m, 12, 360.0)
    for k, row in enumerate(branch_m):
        f = _integral(row[0], f"branch row {k + 1}: from bus")
        t = _integral(row[1], f"branch row {k + 1}: to bus")
        if f not in known or t not in known:
            raise CaseSemanticError(f"branch row {k + 1} references an unknown bus")
        counts[(f, t)] += 1
        rate_a = row[5]
        ratio = row[8]
        branches.append(
            _build(
                Branch,
                from_bus=f,
                to_bus=t,
                parallel_index=counts[(f, t)],
                r=row[2],
                x=row[3],
                b_ch=row[4],
                s_max=rate_a / base if rate_a > 0 else math.inf,
                tau=ratio if ratio != 0 else 1.0,
                nu=math.radians(row[9]),
                status=row[10] != 0,
                eta_min=_angle_bound(ang_min[k]),
                eta_max=_angle_bound(ang_max[k]),
            )
        )

    gencost = case.get("gencost")
    if gencost is not None and gencost.shape[0] > gen_m.shape[0]:
        logger.warning("Ignoring {} reactive gencost rows", gencost.shape[0] - gen_m.shape[0])
    generators: List[Generator] = []
    per_bus: Dict[int, int] = defaultdict(int)
    for k, row in enumerate(gen_m):
        bus_id = _integral(row[0], f"generator row {k + 1}: bus")
        if bus_id not in known:
            raise CaseSemanticError(f"generator row {k + 1} references an unknown bus")
        if row[7] == 0:
            continue
        per_bus[bus_id] += 1
        cost = _cost(gencost[k] if gencost is not None and k < gencost.shape[0] else None, base, k)
        generators.append(
            _build(
                Generator,
                bus=bus_id,
                index=per_bus[bus_id],
                q_max=row[3] / base,
                q_min=row[4] / base,
                p_max=row[8] / base,
                p_min=row[9] / base,
                cost=cost,
            )
        )
    # Generators are grouped per bus in bus order, matching the .dat layout.
    order = {b.id: k for k, b in enumerate(buses)}
    generators.sort(key=lambda g: (order[g.bus], g.index))
    grid = _build(Grid, buses=tuple(buses), branches=tuple(branches), generators=tuple(generators), base_mva=base)
    logger.debug("Parsed MATPOWER case: {}", grid.summary())
    return grid


def _cost(row: Optional[np.ndarray], base: float, k: int) -> List[float]:
    """Per-unit polynomial coefficients c0, c1, c2 from a gencost row."""
    if row is None:
        return [0.0, 1.0, 0.0]
    if len(row) < 4:
        raise CaseSyntaxError(f"gencost row {k + 1} needs at least 4 columns, found {len(row)}", 1, 1)
    model = _integral(row[0], f"gencost row {k + 1}: model")
    if model == 1:
        raise UnsupportedFeature(f"gencost row {k + 1}: piecewise-linear costs are not supported")
    if model != 2:
        raise CaseSemanticError(f"gencost row {k + 1}: unknown cost model {row[0]}")
    n = _integral(row[3], f"gencost row {k + 1}: coefficient count")
    if n < 0:
        raise CaseSemanticError(f"gencost row {k + 1}: negative coefficient count {n}")
    if n > len(row) - 4:
        raise CaseSyntaxError(f"gencost row {k + 1} declares {n} coefficients but has {len(row) - 4}", 1, 1)
    coefficients = row[4 : 4 + n]
    ascending = [float(c) for c in coefficients[::-1]]
    if any(c != 0.0 for c in ascending[3:]):
        raise UnsupportedFeature(f"gencost row {k + 1}: cost terms above degree 2 are not supported")
    scale = (1.0, base, base * base)
    return [c * s for c, s in zip(ascending[:3], scale)]
