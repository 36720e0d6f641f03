"""Quadratic model in cartesian voltages only.

Branch flows are expanded into products of voltages, so every constraint is
a quadratic in ReV/ImV. Flow limits must be given as current magnitudes for
the model to stay quadratic.
"""

from __future__ import annotations

from enum import Enum

from shared.errors import MissingCurrentBound, UnsupportedFeature
from shared.schemas import Grid

from ..formulation import Formulation, Sense
from ..network import require_valid
from .common import (
    CartesianProducts,
    PhaseTags,
    add_cartesian_voltages,
    add_generation,
    add_phase_bounds,
    add_power_balance,
    add_reference,
    arc_current_sq,
    arc_flow,
    is_bounded,
    new_builder,
    set_cost_objective,
)

KIND = "voltage_only"


class BoundMode(str, Enum):
    CURRENT_GIVEN = "current_given"
    CURRENT_DERIVED = "current_derived"
    POWER = "power"


def build_voltage_only(grid: Grid, mode: BoundMode = BoundMode.CURRENT_DERIVED) -> Formulation:
    mode = BoundMode(mode)
    if mode == BoundMode.POWER:
        raise UnsupportedFeature("the voltage-only model needs current-magnitude branch limits")
    topo = require_valid(grid)

    # limits are resolved before anything is declared so a missing one fails fast
    limits = {}
    for arc in topo.arcs:
        if mode == BoundMode.CURRENT_GIVEN:
            if arc.branch.i_max is None:
                if is_bounded(arc.s_max):
                    raise MissingCurrentBound(
                        f"branch {arc.branch.from_bus}-{arc.branch.to_bus}#{arc.h} has a flow limit but no current limit"
                    )
                continue
            limit = arc.branch.i_max
        else:
            if not is_bounded(arc.s_max):
                continue
            v_min = grid.bus(arc.bus).v_min
            limit = arc.s_max / v_min if v_min > 0 else None
        if is_bounded(limit):
            limits[arc.key] = limit

    builder = new_builder(KIND, grid)
    add_cartesian_voltages(builder, grid)
    generation = add_generation(builder, topo)
    products = CartesianProducts(builder)

    suffix = "" if mode == BoundMode.CURRENT_GIVEN else "rel"
    for arc in topo.arcs:
        if arc.key not in limits:
            continue
        tag = f"Vcurrentbound{2 if arc.reversed else 1}{suffix}"
        builder.add_constraint(tag, arc.key, arc_current_sq(products, arc), Sense.LE, limits[arc.key] ** 2)

    add_phase_bounds(builder, topo, products, PhaseTags("phasediffbound1VR", "phasediffbound2VR", "phasediffboundauxVR"))
    for bus in grid.buses:
        if bus.v_min > 0:
            builder.add_constraint("voltageboundR", ("lower", bus.id), products.sq(bus.id), Sense.GE, bus.v_min**2)
        if bus.v_max < float("inf"):
            builder.add_constraint("voltageboundR", ("upper", bus.id), products.sq(bus.id), Sense.LE, bus.v_max**2)
    add_reference(builder, topo)
    add_power_balance(builder, grid, topo, products.sq, lambda arc: arc_flow(products, arc), generation)

    set_cost_objective(builder, topo, generation)
    return builder.build()
