"""Formulation intermediate representation and exact point evaluation."""

from .evaluate import Point, assignment, check_point_names, evaluate, feasibility  # noqa: F401
from .ir import (  # noqa: F401
    Formulation,
    FormulationBuilder,
    MatrixSense,
    PolyConstraint,
    PsdBlock,
    Sense,
    SocConstraint,
    TrigLink,
    Variable,
    VarRef,
    split_name,
    var_name,
)
from .polynomial import ONE, ZERO, Polynomial  # noqa: F401
