from __future__ import annotations

import math
from datetime import datetime
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import get_settings


class BusType(IntEnum):
    LOAD = 1
    GENERATOR = 2
    REFERENCE = 3


class Bus(BaseModel):
    """A network node. Power and admittance values are per-unit."""

    model_config = ConfigDict(frozen=True)

    id: int
    bus_type: BusType = BusType.LOAD
    demand_re: float = 0.0
    demand_im: float = 0.0
    v_min: float = 0.0
    v_max: float = math.inf
    shunt_re: float = 0.0
    shunt_im: float = 0.0
    # Initial-point hints; no constraint refers to them.
    vm_hint: float = 1.0
    va_hint: float = 0.0

    @property
    def demand(self) -> complex:
        return complex(self.demand_re, self.demand_im)

    @property
    def shunt(self) -> complex:
        return complex(self.shunt_re, self.shunt_im)


class Branch(BaseModel):
    """A π-model branch stored in its from→to orientation."""

    model_config = ConfigDict(frozen=True)

    from_bus: int
    to_bus: int
    parallel_index: int = 1
    r: float = 0.0
    x: float = 0.0
    b_ch: float = 0.0
    tau: float = 1.0
    nu: float = 0.0
    s_max: float = math.inf
    i_max: Optional[float] = None
    eta_min: float = -math.pi
    eta_max: float = math.pi
    status: bool = True

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.from_bus, self.to_bus, self.parallel_index)


class Generator(BaseModel):
    model_config = ConfigDict(frozen=True)

    bus: int
    index: int = 1
    p_min: float = -math.inf
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    cost: Tuple[float, float, float] = Field(
        default=(0.0, 1.0, 0.0),
        description="Polynomial cost coefficients c0, c1, c2 applied to real generation.",
    )

    @field_validator("cost", mode="before")
    @classmethod
    def _pad_cost(cls, value: object) -> object:
        if isinstance(value, (list, tuple)):
            coefficients = [float(c) for c in value]
            if len(coefficients) > 3:
                if any(c != 0.0 for c in coefficients[3:]):
                    raise ValueError("cost polynomials above degree 2 are not supported")
                coefficients = coefficients[:3]
            return tuple(coefficients + [0.0] * (3 - len(coefficients)))
        return value


class Grid(BaseModel):
    """Immutable network description. Branches hold L0 only; L1 is implied."""

    model_config = ConfigDict(frozen=True)

    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...] = ()
    generators: Tuple[Generator, ...] = ()
    base_mva: float = 100.0

    @property
    def active_branches(self) -> Tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.status)

    @property
    def reference_bus(self) -> int | None:
        for bus in self.buses:
            if bus.bus_type == BusType.REFERENCE:
                return bus.id
        return None

    def bus(self, bus_id: int) -> Bus:
        for bus in self.buses:
            if bus.id == bus_id:
                return bus
        raise KeyError(bus_id)

    def generators_at(self, bus_id: int) -> Tuple[Generator, ...]:
        return tuple(gen for gen in self.generators if gen.bus == bus_id)

    def summary(self) -> str:
        return (
            f"{len(self.buses)} buses, {len(self.active_branches)} lines, "
            f"{len(self.generators)} generators, reference bus {self.reference_bus}"
        )


class Violation(BaseModel):
    code: str
    message: str


class ValidationReport(BaseModel):
    violations: List[Violation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class ConstraintKind(str, Enum):
    EQ = "eq"
    LE = "le"
    GE = "ge"
    SOC = "soc"
    BOUND = "bound"


class ConstraintResidual(BaseModel):
    tag: str
    key: Tuple[int | str, ...]
    kind: ConstraintKind
    residual: float
    violation: float


class PsdResidual(BaseModel):
    tag: str
    key: Tuple[int | str, ...]
    dim: int
    min_eigenvalue: float


class ResidualReport(BaseModel):
    formulation: str
    objective: float
    constraints: List[ConstraintResidual] = Field(default_factory=list)
    psd_blocks: List[PsdResidual] = Field(default_factory=list)
    max_violation: float = 0.0

    def residual(self, tag: str, key: Tuple[int | str, ...]) -> ConstraintResidual:
        for entry in self.constraints:
            if entry.tag == tag and entry.key == key:
                return entry
        raise KeyError((tag, key))


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE_DETECTED = "infeasible_detected"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


class BoundKind(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


class SolveOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=200, ge=1)
    tol_feas: float = Field(default=1e-6, gt=0.0)
    tol_opt: float = Field(default=1e-6, gt=0.0)
    barrier_reduction: float = Field(default=0.1, gt=0.0, lt=1.0)
    multistart_count: int = Field(default=10, ge=1)
    rng_seed: int = 0

    @classmethod
    def from_settings(cls, **overrides: object) -> "SolveOptions":
        settings = get_settings()
        values = {
            "max_iter": settings.max_iter,
            "tol_feas": settings.tol_feas,
            "tol_opt": settings.tol_opt,
            "barrier_reduction": settings.barrier_reduction,
            "multistart_count": settings.multistart_count,
            "rng_seed": settings.rng_seed,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class SolveResult(BaseModel):
    status: SolveStatus
    objective: float
    point: Dict[str, float] = Field(default_factory=dict)
    max_violation: float
    bound_kind: BoundKind
    iterations: int = 0
    formulation: str = ""

    @property
    def has_feasible_status(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


class BoundsReport(BaseModel):
    lower: SolveResult | None = None
    upper: SolveResult | None = None
    gap: float | None = None


class GridRecord(BaseModel):
    id: str
    filename: str
    summary: str
    validation: ValidationReport
    created_at: datetime = Field(default_factory=datetime.utcnow)
