"""Solver-agnostic optimization model: variables, constraints and objective."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .polynomial import ZERO, Polynomial

MAX_DEGREE = 4
Key = Tuple[int | str, ...]

_NAME = re.compile(r"^(?P<kind>[A-Za-z]\w*)(?:\.(?P<part>re|im|mag|angle))?\[(?P<index>[-\d,]*)\]$")


def var_name(kind: str, *index: int, part: str | None = None) -> str:
    """Structured variable label, e.g. `V.re[2]`, `S.im[1,2,1]`, `c[1,2]`."""
    label = kind if part is None else f"{kind}.{part}"
    return f"{label}[{','.join(str(i) for i in index)}]"


def split_name(name: str) -> Tuple[str, Optional[str], Tuple[int, ...]]:
    match = _NAME.match(name)
    if match is None:
        raise ValueError(f"malformed variable name '{name}'")
    raw = match.group("index")
    index = tuple(int(v) for v in raw.split(",")) if raw else ()
    return match.group("kind"), match.group("part"), index


class Sense(str, Enum):
    EQ = "=="
    LE = "<="
    GE = ">="


class MatrixSense(str, Enum):
    PSD = "psd"
    NSD = "nsd"


@dataclass(frozen=True)
class VarRef:
    name: str
    index: int


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = -math.inf
    upper: float = math.inf
    tag: str = "bound"


@dataclass(frozen=True)
class PolyConstraint:
    tag: str
    key: Key
    poly: Polynomial
    sense: Sense
    rhs: float = 0.0


@dataclass(frozen=True)
class SocConstraint:
    """u_1² + … + u_k² ≤ t·w when rotated, otherwise ≤ t² with t ≥ 0."""

    tag: str
    key: Key
    members: Tuple[Polynomial, ...]
    t: Polynomial
    w: Optional[Polynomial] = None

    @property
    def rotated(self) -> bool:
        return self.w is not None

    def gap_polynomial(self) -> Polynomial:
        """Σu² minus the right-hand side; the cone holds where this is ≤ 0."""
        lhs = ZERO
        for member in self.members:
            lhs = lhs + member * member
        return lhs - (self.t * self.w if self.w is not None else self.t * self.t)


@dataclass(frozen=True)
class PsdBlock:
    """Symmetric matrix of affine expressions; entries are stored for i ≤ j."""

    tag: str
    key: Key
    dim: int
    entries: Tuple[Tuple[int, int, Polynomial], ...]
    sense: MatrixSense = MatrixSense.PSD

    def matrix(self, x: Sequence[float]) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for i, j, expr in self.entries:
            value = expr.evaluate(x)
            m[i, j] = value
            m[j, i] = value
        return m

    def oriented(self, x: Sequence[float]) -> np.ndarray:
        m = self.matrix(x)
        return m if self.sense == MatrixSense.PSD else -m


@dataclass(frozen=True)
class TrigLink:
    """Binds cos_var/sin_var to cos/sin(θ_from − θ_to) when θ values are known."""

    cos_var: int
    sin_var: int
    theta_from: int
    theta_to: int


@dataclass(frozen=True)
class Formulation:
    kind: str
    variables: Tuple[Variable, ...] = ()
    objective: Polynomial = ZERO
    constraints: Tuple[PolyConstraint, ...] = ()
    cones: Tuple[SocConstraint, ...] = ()
    psd_blocks: Tuple[PsdBlock, ...] = ()
    trig_links: Tuple[TrigLink, ...] = ()
    grid_hash: str = ""
    _index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {v.name: k for k, v in enumerate(self.variables)})

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def index_of(self, name: str) -> int:
        return self._index[name]

    def has(self, name: str) -> bool:
        return name in self._index

    def ref(self, name: str) -> VarRef:
        return VarRef(name, self._index[name])

    @property
    def trig_indices(self) -> frozenset:
        return frozenset(i for link in self.trig_links for i in (link.cos_var, link.sin_var))

    def tags(self) -> set[str]:
        tags = {c.tag for c in self.constraints} | {c.tag for c in self.cones} | {b.tag for b in self.psd_blocks}
        return tags | {v.tag for v in self.variables if math.isfinite(v.lower) or math.isfinite(v.upper)}

    def constraints_tagged(self, tag: str) -> List[PolyConstraint]:
        return [c for c in self.constraints if c.tag == tag]

    def describe(self, poly: Polynomial) -> Tuple[Tuple[Tuple[str, ...], float], ...]:
        """Name-based form of a polynomial, independent of variable numbering."""
        return tuple(
            sorted((tuple(sorted(self.variables[i].name for i in m)), c) for m, c in poly)
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.grid_hash, self.n_vars, len(self.constraints)))


class FormulationBuilder:
    """Collects variables and constraints, then freezes them into a Formulation."""

    def __init__(self, kind: str, grid_hash: str = "") -> None:
        self.kind = kind
        self.grid_hash = grid_hash
        self._variables: List[Variable] = []
        self._index: Dict[str, int] = {}
        self._constraints: List[PolyConstraint] = []
        self._cones: List[SocConstraint] = []
        self._blocks: List[PsdBlock] = []
        self._links: List[TrigLink] = []
        self._trig: set[int] = set()
        self._objective: Polynomial = ZERO

    def add_variable(self, name: str, lower: float = -math.inf, upper: float = math.inf, tag: str = "bound") -> Polynomial:
        if name in self._index:
            raise ValueError(f"variable {name} declared twice")
        if math.isnan(lower) or math.isnan(upper):
            raise ValueError(f"variable {name} has a NaN bound")
        self._index[name] = len(self._variables)
        self._variables.append(Variable(name, lower, upper, tag))
        return Polynomial.variable(self._index[name])

    def var(self, name: str) -> Polynomial:
        return Polynomial.variable(self._index[name])

    def has(self, name: str) -> bool:
        return name in self._index

    def _check(self, poly: Polynomial, what: str) -> None:
        if not poly.is_finite():
            raise ValueError(f"{what}: non-finite coefficient")
        if poly.degree(frozenset(self._trig)) > MAX_DEGREE:
            raise ValueError(f"{what}: degree above {MAX_DEGREE}")

    def add_constraint(self, tag: str, key: Key, poly: Polynomial, sense: Sense, rhs: float = 0.0) -> None:
        # Constants move to the right-hand side so equal constraints compare equal.
        constant = poly.constant_term
        poly = poly - constant
        rhs = rhs - constant
        self._check(poly, f"{tag}{key}")
        if not math.isfinite(rhs):
            raise ValueError(f"{tag}{key}: non-finite right-hand side")
        self._constraints.append(PolyConstraint(tag, tuple(key), poly, sense, rhs))

    def add_cone(self, tag: str, key: Key, members: Sequence[Polynomial], t: Polynomial, w: Optional[Polynomial] = None) -> None:
        if not members:
            raise ValueError(f"{tag}{key}: cone needs at least one member")
        for expr in (*members, t, *(() if w is None else (w,))):
            if not expr.is_affine:
                raise ValueError(f"{tag}{key}: cone members must be affine")
            self._check(expr, f"{tag}{key}")
        self._cones.append(SocConstraint(tag, tuple(key), tuple(members), t, w))

    def add_psd(self, tag: str, key: Key, matrix: Sequence[Sequence[Polynomial]], sense: MatrixSense = MatrixSense.PSD) -> None:
        dim = len(matrix)
        entries = []
        for i in range(dim):
            for j in range(i, dim):
                expr = matrix[i][j]
                if not expr.is_affine:
                    raise ValueError(f"{tag}{key}: matrix entries must be affine")
                self._check(expr, f"{tag}{key}")
                if len(expr):
                    entries.append((i, j, expr))
        self._blocks.append(PsdBlock(tag, tuple(key), dim, tuple(entries), sense))

    def link_trig(self, cos_name: str, sin_name: str, theta_from: str, theta_to: str) -> None:
        link = TrigLink(self._index[cos_name], self._index[sin_name], self._index[theta_from], self._index[theta_to])
        self._trig.update((link.cos_var, link.sin_var))
        self._links.append(link)

    def set_objective(self, poly: Polynomial) -> None:
        if poly.degree() > 2:
            raise ValueError("objective degree above 2")
        self._check(poly, "objective")
        self._objective = poly

    def build(self) -> Formulation:
        formulation = Formulation(
            kind=self.kind,
            variables=tuple(self._variables),
            objective=self._objective,
            constraints=tuple(self._constraints),
            cones=tuple(self._cones),
            psd_blocks=tuple(self._blocks),
            trig_links=tuple(self._links),
            grid_hash=self.grid_hash,
        )
        logger.debug(
            "Built {} formulation: {} variables, {} polynomial constraints, {} cones, {} PSD blocks",
            self.kind,
            formulation.n_vars,
            len(formulation.constraints),
            len(formulation.cones),
            len(formulation.psd_blocks),
        )
        return formulation
