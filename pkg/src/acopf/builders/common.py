"""Pieces shared by every formulation builder.

Each builder describes the voltage products it works with through a
`Products` object: |V_b|², Re(V_b·conj V_a) and Im(V_b·conj V_a) written in
its own variables. Flows, currents, phase bounds and power balance are then
assembled the same way for every formulation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Dict, Protocol, Tuple

from shared.config import get_settings
from shared.schemas import Grid

from ..case_io.dat import write_dat
from ..formulation import ZERO, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Arc, Topology

ComplexPoly = Tuple[Polynomial, Polynomial]
GenKey = Tuple[int, int]


class Products(Protocol):
    def sq(self, b: int) -> Polynomial: ...

    def re_prod(self, b: int, a: int) -> Polynomial: ...

    def im_prod(self, b: int, a: int) -> Polynomial: ...


def grid_fingerprint(grid: Grid) -> str:
    return hashlib.sha256(write_dat(grid).encode("utf-8")).hexdigest()


def new_builder(kind: str, grid: Grid) -> FormulationBuilder:
    return FormulationBuilder(kind, grid_fingerprint(grid))


def is_bounded(limit: float | None) -> bool:
    """Flow and current limits only count when finite and positive."""
    return limit is not None and 0.0 < limit < math.inf


def current_limit(arc: Arc, grid: Grid, derive: bool = True) -> float | None:
    """Ī for an arc: the branch value, else S̄/V̲ of the arc's own bus."""
    if arc.branch.i_max is not None:
        return arc.branch.i_max
    if not derive or not is_bounded(arc.s_max):
        return None
    v_min = grid.bus(arc.bus).v_min
    return arc.s_max / v_min if v_min > 0 else None


# names


def v_re(b: int) -> str:
    return var_name("V", b, part="re")


def v_im(b: int) -> str:
    return var_name("V", b, part="im")


def sg_re(b: int, g: int) -> str:
    return var_name("Sg", b, g, part="re")


def sg_im(b: int, g: int) -> str:
    return var_name("Sg", b, g, part="im")


def s_re(arc: Arc) -> str:
    return var_name("S", *arc.key, part="re")


def s_im(arc: Arc) -> str:
    return var_name("S", *arc.key, part="im")


# shared assembly


class CartesianProducts:
    """Products written in ReV/ImV variables."""

    def __init__(self, builder: FormulationBuilder) -> None:
        self._b = builder

    def sq(self, b: int) -> Polynomial:
        re, im = self._b.var(v_re(b)), self._b.var(v_im(b))
        return re * re + im * im

    def re_prod(self, b: int, a: int) -> Polynomial:
        return self._b.var(v_re(b)) * self._b.var(v_re(a)) + self._b.var(v_im(b)) * self._b.var(v_im(a))

    def im_prod(self, b: int, a: int) -> Polynomial:
        return self._b.var(v_im(b)) * self._b.var(v_re(a)) - self._b.var(v_re(b)) * self._b.var(v_im(a))


def add_cartesian_voltages(builder: FormulationBuilder, grid: Grid) -> None:
    for bus in grid.buses:
        builder.add_variable(v_re(bus.id), -bus.v_max, bus.v_max, tag="voltagebox")
        builder.add_variable(v_im(bus.id), -bus.v_max, bus.v_max, tag="voltagebox")


def add_reference(builder: FormulationBuilder, topo: Topology, with_sign: bool = True) -> None:
    r = topo.reference
    builder.add_constraint("reference", ("im", r), builder.var(v_im(r)), Sense.EQ)
    if with_sign:
        builder.add_constraint("reference", ("re", r), builder.var(v_re(r)), Sense.GE)


def arc_flow(products: Products, arc: Arc) -> ComplexPoly:
    """S leaving arc.bus: conj(d)|V_b|² + conj(o)·V_b·conj(V_a)."""
    d, o = arc.diag, arc.off
    sq = products.sq(arc.bus)
    p_re = products.re_prod(arc.bus, arc.other)
    p_im = products.im_prod(arc.bus, arc.other)
    flow_re = d.real * sq + o.real * p_re + o.imag * p_im
    flow_im = -d.imag * sq + o.real * p_im - o.imag * p_re
    return flow_re, flow_im


def arc_current_sq(products: Products, arc: Arc) -> Polynomial:
    """|d·V_b + o·V_a|² written with the formulation's products."""
    d, o = arc.diag, arc.off
    z = d * o.conjugate()
    return (
        abs(d) ** 2 * products.sq(arc.bus)
        + abs(o) ** 2 * products.sq(arc.other)
        + 2.0 * z.real * products.re_prod(arc.bus, arc.other)
        - 2.0 * z.imag * products.im_prod(arc.bus, arc.other)
    )


def add_generation(builder: FormulationBuilder, topo: Topology) -> Dict[GenKey, ComplexPoly]:
    generation: Dict[GenKey, ComplexPoly] = {}
    for bus_id in topo.bus_ids:
        for gen in topo.generators[bus_id]:
            re = builder.add_variable(sg_re(bus_id, gen.index), gen.p_min, gen.p_max, tag="genpowerboundR")
            im = builder.add_variable(sg_im(bus_id, gen.index), gen.q_min, gen.q_max, tag="genpowerboundC")
            generation[(bus_id, gen.index)] = (re, im)
    return generation


def set_cost_objective(builder: FormulationBuilder, topo: Topology, generation: Dict[GenKey, ComplexPoly]) -> None:
    objective = ZERO
    for bus_id in topo.bus_ids:
        for gen in topo.generators[bus_id]:
            p = generation[(bus_id, gen.index)][0]
            c0, c1, c2 = gen.cost
            objective = objective + c0 + c1 * p + c2 * (p * p)
    builder.set_objective(objective)


def add_power_balance(
    builder: FormulationBuilder,
    grid: Grid,
    topo: Topology,
    sq: Callable[[int], Polynomial],
    flow: Callable[[Arc], ComplexPoly],
    generation: Dict[GenKey, ComplexPoly],
    tags: Tuple[str, str] = ("powerflowR", "powerflowC"),
) -> None:
    """Σ S_arc + S̃_b + conj(A_b)|V_b|² − Σ Sg = 0, split into real and imaginary rows."""
    for bus in grid.buses:
        real = ZERO + bus.demand_re + bus.shunt_re * sq(bus.id)
        imag = ZERO + bus.demand_im - bus.shunt_im * sq(bus.id)
        for arc in topo.arcs_from(bus.id):
            flow_re, flow_im = flow(arc)
            real = real + flow_re
            imag = imag + flow_im
        for gen in topo.generators[bus.id]:
            gen_re, gen_im = generation[(bus.id, gen.index)]
            real = real - gen_re
            imag = imag - gen_im
        builder.add_constraint(tags[0], (bus.id,), real, Sense.EQ)
        builder.add_constraint(tags[1], (bus.id,), imag, Sense.EQ)


@dataclass(frozen=True)
class PhaseTags:
    lower: str
    upper: str
    aux: str


def phase_sides(arc: Arc) -> Tuple[bool, bool]:
    """Which sides of the phase-difference bound carry information."""
    cutoff = get_settings().phase_cutoff
    lower = arc.branch.eta_min > -math.pi / 2 + cutoff
    upper = arc.branch.eta_max < math.pi / 2 - cutoff
    return lower, upper


def add_phase_bounds(builder: FormulationBuilder, topo: Topology, products: Products, tags: PhaseTags) -> None:
    """tan(η̲)·Re ≤ Im ≤ tan(η̄)·Re on each L0 arc, plus Re ≥ 0 once per bus pair."""
    constrained_pairs = []
    for arc in topo.l0:
        lower, upper = phase_sides(arc)
        if not (lower or upper):
            continue
        p_re = products.re_prod(arc.bus, arc.other)
        p_im = products.im_prod(arc.bus, arc.other)
        if lower:
            builder.add_constraint(tags.lower, ("lower", *arc.key), p_im - math.tan(arc.branch.eta_min) * p_re, Sense.GE)
        if upper:
            builder.add_constraint(tags.upper, ("upper", *arc.key), p_im - math.tan(arc.branch.eta_max) * p_re, Sense.LE)
        pair = (arc.bus, arc.other)
        if pair not in constrained_pairs:
            constrained_pairs.append(pair)
    for b, a in constrained_pairs:
        builder.add_constraint(tags.aux, (b, a), products.re_prod(b, a), Sense.GE)


def add_flow_bounds(builder: FormulationBuilder, topo: Topology, flow: Callable[[Arc], ComplexPoly], tag_l0: str, tag_l1: str) -> None:
    """(Re S)² + (Im S)² ≤ S̄² on every arc with a finite positive limit."""
    for arc in topo.arcs:
        if not is_bounded(arc.s_max):
            continue
        flow_re, flow_im = flow(arc)
        tag = tag_l1 if arc.reversed else tag_l0
        builder.add_constraint(tag, arc.key, flow_re * flow_re + flow_im * flow_im, Sense.LE, arc.s_max**2)
