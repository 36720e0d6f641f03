"""Jabr's second-order cone relaxation and the exact model mixing it with cartesian voltages."""

from __future__ import annotations

from shared.schemas import Grid

from ..formulation import Formulation, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Topology, require_valid
from .common import (
    CartesianProducts,
    PhaseTags,
    add_cartesian_voltages,
    add_flow_bounds,
    add_generation,
    add_phase_bounds,
    add_power_balance,
    add_reference,
    arc_flow,
    new_builder,
    set_cost_objective,
)


def c_name(b: int, a: int | None = None) -> str:
    return var_name("c", b) if a is None else var_name("c", b, a)


def s_name(b: int, a: int) -> str:
    return var_name("s", b, a)


class JabrProducts:
    """c_bb = |V_b|², c_ba = Re(V_b conj V_a), s_ba = Im(V_b conj V_a) on canonical pairs."""

    def __init__(self, builder: FormulationBuilder, topo: Topology) -> None:
        self._b = builder
        self._topo = topo

    def sq(self, b: int) -> Polynomial:
        return self._b.var(c_name(b))

    def re_prod(self, b: int, a: int) -> Polynomial:
        (i, j), _ = self._topo.pair_orientation(b, a)
        return self._b.var(c_name(i, j))

    def im_prod(self, b: int, a: int) -> Polynomial:
        (i, j), sign = self._topo.pair_orientation(b, a)
        return sign * self._b.var(s_name(i, j))


def _add_jabr(builder: FormulationBuilder, grid: Grid, topo: Topology) -> JabrProducts:
    for bus in grid.buses:
        builder.add_variable(c_name(bus.id), max(0.0, bus.v_min) ** 2, bus.v_max**2, tag="voltageboundJ")
    for b, a in topo.pairs:
        builder.add_variable(c_name(b, a))
        builder.add_variable(s_name(b, a))
    generation = add_generation(builder, topo)
    products = JabrProducts(builder, topo)

    for b, a in topo.pairs:
        builder.add_cone(
            "relaxJ",
            (b, a),
            [builder.var(c_name(b, a)), builder.var(s_name(b, a))],
            builder.var(c_name(b)),
            builder.var(c_name(a)),
        )
    add_phase_bounds(builder, topo, products, PhaseTags("phasediffboundJ1", "phasediffboundJ1", "phasediffboundJ2"))
    add_power_balance(builder, grid, topo, products.sq, lambda arc: arc_flow(products, arc), generation)
    add_flow_bounds(builder, topo, lambda arc: arc_flow(products, arc), "powerbound1J", "powerbound2J")
    set_cost_objective(builder, topo, generation)
    return products


def build_jabr_socp(grid: Grid) -> Formulation:
    topo = require_valid(grid)
    builder = new_builder("jabr", grid)
    _add_jabr(builder, grid, topo)
    return builder.build()


def build_mixed(grid: Grid) -> Formulation:
    """Jabr's model tied back to cartesian voltages, which makes it exact."""
    topo = require_valid(grid)
    builder = new_builder("mixed", grid)
    jabr = _add_jabr(builder, grid, topo)
    add_cartesian_voltages(builder, grid)
    cartesian = CartesianProducts(builder)

    for bus in grid.buses:
        builder.add_constraint("csVrel1", (bus.id,), jabr.sq(bus.id) - cartesian.sq(bus.id), Sense.EQ)
    for b, a in topo.pairs:
        builder.add_constraint("csVrel2", (b, a), jabr.re_prod(b, a) - cartesian.re_prod(b, a), Sense.EQ)
        builder.add_constraint("csVrel3", (b, a), jabr.im_prod(b, a) - cartesian.im_prod(b, a), Sense.EQ)
    add_reference(builder, topo)
    return builder.build()
