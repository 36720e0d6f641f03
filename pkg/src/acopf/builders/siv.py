"""Cartesian model with explicit currents, flows and squared magnitudes."""

from __future__ import annotations

from shared.schemas import Grid

from ..formulation import Formulation, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Arc, require_valid
from .common import (
    CartesianProducts,
    PhaseTags,
    add_cartesian_voltages,
    add_generation,
    add_phase_bounds,
    add_power_balance,
    add_reference,
    is_bounded,
    new_builder,
    s_im,
    s_re,
    set_cost_objective,
    v_im,
    v_re,
)

KIND = "siv"


def _i_re(arc: Arc) -> str:
    return var_name("I", *arc.key, part="re")


def _i_im(arc: Arc) -> str:
    return var_name("I", *arc.key, part="im")


def _v2(b: int) -> str:
    return var_name("V2", b)


def _add_ohm_law(builder: FormulationBuilder, arc: Arc) -> None:
    """I = d·V_b + o·V_a on one end of a branch."""
    d, o = arc.diag, arc.off
    vb_re, vb_im = builder.var(v_re(arc.bus)), builder.var(v_im(arc.bus))
    va_re, va_im = builder.var(v_re(arc.other)), builder.var(v_im(arc.other))
    current_re = d.real * vb_re - d.imag * vb_im + o.real * va_re - o.imag * va_im
    current_im = d.real * vb_im + d.imag * vb_re + o.real * va_im + o.imag * va_re
    prefix = "ohmlaw2" if arc.reversed else "ohmlaw1"
    builder.add_constraint(f"{prefix}R", arc.key, builder.var(_i_re(arc)) - current_re, Sense.EQ)
    builder.add_constraint(f"{prefix}C", arc.key, builder.var(_i_im(arc)) - current_im, Sense.EQ)


def _add_power_current(builder: FormulationBuilder, arc: Arc) -> None:
    """S = V_b·conj(I) on the arc."""
    vb_re, vb_im = builder.var(v_re(arc.bus)), builder.var(v_im(arc.bus))
    i_re, i_im = builder.var(_i_re(arc)), builder.var(_i_im(arc))
    builder.add_constraint("powercurrentR", arc.key, builder.var(s_re(arc)) - (vb_re * i_re + vb_im * i_im), Sense.EQ)
    builder.add_constraint("powercurrentC", arc.key, builder.var(s_im(arc)) - (vb_im * i_re - vb_re * i_im), Sense.EQ)


def build_siv_cartesian(grid: Grid) -> Formulation:
    topo = require_valid(grid)
    builder = new_builder(KIND, grid)

    add_cartesian_voltages(builder, grid)
    for arc in topo.arcs:
        builder.add_variable(_i_re(arc))
        builder.add_variable(_i_im(arc))
    for arc in topo.arcs:
        builder.add_variable(s_re(arc))
        builder.add_variable(s_im(arc))
    generation = add_generation(builder, topo)
    for bus in grid.buses:
        builder.add_variable(_v2(bus.id), bus.v_min**2, bus.v_max**2, tag="voltageboundR")

    products = CartesianProducts(builder)
    for arc in topo.arcs:
        if is_bounded(arc.s_max):
            flow_re, flow_im = builder.var(s_re(arc)), builder.var(s_im(arc))
            builder.add_constraint("powerboundR", arc.key, flow_re * flow_re + flow_im * flow_im, Sense.LE, arc.s_max**2)
    add_phase_bounds(builder, topo, products, PhaseTags("phasediffbound1R", "phasediffbound2R", "phasediffboundauxR"))
    for bus in grid.buses:
        builder.add_constraint("V2def", (bus.id,), builder.var(_v2(bus.id)) - products.sq(bus.id), Sense.EQ)
    add_reference(builder, topo)

    def flow(arc: Arc) -> tuple[Polynomial, Polynomial]:
        return builder.var(s_re(arc)), builder.var(s_im(arc))

    add_power_balance(builder, grid, topo, lambda b: builder.var(_v2(b)), flow, generation)
    for arc in topo.arcs:
        _add_power_current(builder, arc)
    for arc in topo.arcs:
        _add_ohm_law(builder, arc)

    set_cost_objective(builder, topo, generation)
    return builder.build()
