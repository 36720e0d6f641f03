"""Polar model: magnitudes v, angles θ and per-pair cos/sin auxiliaries."""

from __future__ import annotations

import math

from shared.schemas import Grid

from ..formulation import Formulation, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Topology, require_valid
from .common import (
    add_generation,
    add_power_balance,
    arc_flow,
    is_bounded,
    new_builder,
    phase_sides,
    set_cost_objective,
)

KIND = "polar"


def v_mag(b: int) -> str:
    return var_name("v", b)


def theta(b: int) -> str:
    return var_name("theta", b)


def cs_name(b: int, a: int) -> str:
    return var_name("cs", b, a)


def sn_name(b: int, a: int) -> str:
    return var_name("sn", b, a)


class PolarProducts:
    """v_b·v_a·cos(θ_b − θ_a) and v_b·v_a·sin(θ_b − θ_a) through the pair auxiliaries."""

    def __init__(self, builder: FormulationBuilder, topo: Topology) -> None:
        self._b = builder
        self._topo = topo

    def sq(self, b: int) -> Polynomial:
        v = self._b.var(v_mag(b))
        return v * v

    def re_prod(self, b: int, a: int) -> Polynomial:
        (i, j), _ = self._topo.pair_orientation(b, a)
        return self._b.var(v_mag(b)) * self._b.var(v_mag(a)) * self._b.var(cs_name(i, j))

    def im_prod(self, b: int, a: int) -> Polynomial:
        (i, j), sign = self._topo.pair_orientation(b, a)
        return sign * (self._b.var(v_mag(b)) * self._b.var(v_mag(a)) * self._b.var(sn_name(i, j)))


def build_polar(grid: Grid) -> Formulation:
    topo = require_valid(grid)
    builder = new_builder(KIND, grid)

    for bus in grid.buses:
        builder.add_variable(v_mag(bus.id), max(0.0, bus.v_min), bus.v_max, tag="voltageboundvR")
    for bus in grid.buses:
        builder.add_variable(theta(bus.id), -math.pi, math.pi, tag="phasebounds")
    for b, a in topo.pairs:
        builder.add_variable(cs_name(b, a), -1.0, 1.0, tag="trigbox")
        builder.add_variable(sn_name(b, a), -1.0, 1.0, tag="trigbox")
        builder.link_trig(cs_name(b, a), sn_name(b, a), theta(b), theta(a))
    generation = add_generation(builder, topo)
    products = PolarProducts(builder, topo)

    for b, a in topo.pairs:
        cs, sn = builder.var(cs_name(b, a)), builder.var(sn_name(b, a))
        builder.add_constraint("trigidentity", (b, a), cs * cs + sn * sn, Sense.EQ, 1.0)

    for arc in topo.l0:
        lower, upper = phase_sides(arc)
        delta = builder.var(theta(arc.bus)) - builder.var(theta(arc.other))
        if lower:
            builder.add_constraint("phasediffboundvR", ("lower", *arc.key), delta, Sense.GE, arc.branch.eta_min)
        if upper:
            builder.add_constraint("phasediffboundvR", ("upper", *arc.key), delta, Sense.LE, arc.branch.eta_max)

    builder.add_constraint("reference", ("angle", topo.reference), builder.var(theta(topo.reference)), Sense.EQ)
    add_power_balance(builder, grid, topo, products.sq, lambda arc: arc_flow(products, arc), generation)

    # |S|² with cos² + sin² already folded in, so at most one trig factor per term
    for arc in topo.arcs:
        if not is_bounded(arc.s_max):
            continue
        d, o = arc.diag, arc.off
        w = d.conjugate() * o
        sq_b, sq_a = products.sq(arc.bus), products.sq(arc.other)
        cross = w.real * products.re_prod(arc.bus, arc.other) + w.imag * products.im_prod(arc.bus, arc.other)
        quartic = abs(d) ** 2 * sq_b * sq_b + abs(o) ** 2 * sq_b * sq_a + 2.0 * sq_b * cross
        tag = "powerbound2vR" if arc.reversed else "powerbound1vR"
        builder.add_constraint(tag, arc.key, quartic, Sense.LE, arc.s_max**2)

    set_cost_objective(builder, topo, generation)
    return builder.build()
