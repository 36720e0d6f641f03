"""Convex relaxations over the Hermitian lifted matrix X = V·Vᴴ.

X is stored through real variables X.re[b,a] (b ≤ a) and X.im[b,a] (b < a),
ordered by bus position, so X_ab = conj(X_ba) holds by construction.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Iterable, List, Tuple

from shared.errors import MissingCurrentBound
from shared.schemas import Grid

from ..formulation import ZERO, Formulation, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Arc, Topology, require_valid
from .common import (
    PhaseTags,
    add_cartesian_voltages,
    add_generation,
    add_phase_bounds,
    add_power_balance,
    add_reference,
    arc_current_sq,
    arc_flow,
    current_limit,
    is_bounded,
    new_builder,
    s_im,
    s_re,
    set_cost_objective,
    v_im,
    v_re,
)

PHASE_TAGS = PhaseTags("phasediffbound1X", "phasediffbound2X", "phasediffboundauxX")


class ComplexVariant(str, Enum):
    V_SDP = "v_sdp"
    X_SDP = "x_sdp"


def x_re(b: int, a: int) -> str:
    return var_name("X", b, a, part="re")


def x_im(b: int, a: int) -> str:
    return var_name("X", b, a, part="im")


def _ordered(topo: Topology, b: int, a: int) -> Tuple[int, int, float]:
    if topo.position[b] <= topo.position[a]:
        return b, a, 1.0
    return a, b, -1.0


def x_pairs(topo: Topology, full: bool) -> List[Tuple[int, int]]:
    """Off-diagonal entries carried by the model, in position order."""
    if full:
        ids = topo.bus_ids
        return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
    pairs = []
    for b, a in topo.pairs:
        first, second, _ = _ordered(topo, b, a)
        if (first, second) not in pairs:
            pairs.append((first, second))
    return pairs


class XProducts:
    def __init__(self, builder: FormulationBuilder, topo: Topology) -> None:
        self._b = builder
        self._topo = topo

    def sq(self, b: int) -> Polynomial:
        return self._b.var(x_re(b, b))

    def re_prod(self, b: int, a: int) -> Polynomial:
        i, j, _ = _ordered(self._topo, b, a)
        return self._b.var(x_re(i, j))

    def im_prod(self, b: int, a: int) -> Polynomial:
        i, j, sign = _ordered(self._topo, b, a)
        return sign * self._b.var(x_im(i, j))


def _add_x(builder: FormulationBuilder, grid: Grid, pairs: Iterable[Tuple[int, int]]) -> None:
    for bus in grid.buses:
        builder.add_variable(x_re(bus.id, bus.id), max(0.0, bus.v_min) ** 2, bus.v_max**2, tag="voltageboundX")
    for b, a in pairs:
        builder.add_variable(x_re(b, a))
        builder.add_variable(x_im(b, a))


def hermitian_embedding(
    dim: int, re_entry: Callable[[int, int], Polynomial], im_entry: Callable[[int, int], Polynomial]
) -> List[List[Polynomial]]:
    """[[A, −B], [B, A]] for H = A + iB; H ⪰ 0 iff this real matrix is."""
    m = [[ZERO] * (2 * dim) for _ in range(2 * dim)]
    for i in range(dim):
        for j in range(dim):
            re, im = re_entry(i, j), im_entry(i, j)
            m[i][j] = re
            m[dim + i][dim + j] = re
            m[i][dim + j] = -im
            m[dim + i][j] = im
    return m


def _x_embedding(products: XProducts, ids: Tuple[int, ...]) -> List[List[Polynomial]]:
    return hermitian_embedding(
        len(ids),
        lambda i, j: products.sq(ids[i]) if i == j else products.re_prod(ids[i], ids[j]),
        lambda i, j: ZERO if i == j else products.im_prod(ids[i], ids[j]),
    )


def _add_flow_variables(builder: FormulationBuilder, topo: Topology, products: XProducts) -> Callable[[Arc], Tuple[Polynomial, Polynomial]]:
    for arc in topo.arcs:
        builder.add_variable(s_re(arc))
        builder.add_variable(s_im(arc))

    def flow(arc: Arc) -> Tuple[Polynomial, Polynomial]:
        return builder.var(s_re(arc)), builder.var(s_im(arc))

    for arc in topo.arcs:
        flow_re, flow_im = arc_flow(products, arc)
        builder.add_constraint("flowdefR", arc.key, builder.var(s_re(arc)) - flow_re, Sense.EQ)
        builder.add_constraint("flowdefC", arc.key, builder.var(s_im(arc)) - flow_im, Sense.EQ)
    return flow


def _build_v_sdp(grid: Grid, topo: Topology) -> Formulation:
    limits = {}
    for arc in topo.arcs:
        limit = current_limit(arc, grid, derive=True)
        if limit is None and is_bounded(arc.s_max):
            raise MissingCurrentBound(f"arc {arc.key} has a flow limit but no usable current limit")
        if is_bounded(limit):
            limits[arc.key] = limit

    builder = new_builder("sdp_v", grid)
    add_cartesian_voltages(builder, grid)
    _add_x(builder, grid, x_pairs(topo, full=True))
    generation = add_generation(builder, topo)
    products = XProducts(builder, topo)

    for arc in topo.arcs:
        if arc.key in limits:
            tag = "currentbound2X" if arc.reversed else "currentbound1X"
            builder.add_constraint(tag, arc.key, arc_current_sq(products, arc), Sense.LE, limits[arc.key] ** 2)
    add_phase_bounds(builder, topo, products, PHASE_TAGS)
    add_reference(builder, topo)
    add_power_balance(builder, grid, topo, products.sq, lambda arc: arc_flow(products, arc), generation)

    ids = topo.bus_ids
    one = ZERO + 1.0

    def re_entry(i: int, j: int) -> Polynomial:
        if i == 0 and j == 0:
            return one
        if i == 0 or j == 0:
            return builder.var(v_re(ids[max(i, j) - 1]))
        return products.sq(ids[i - 1]) if i == j else products.re_prod(ids[i - 1], ids[j - 1])

    def im_entry(i: int, j: int) -> Polynomial:
        if i == j:
            return ZERO
        if i == 0:
            return -builder.var(v_im(ids[j - 1]))
        if j == 0:
            return builder.var(v_im(ids[i - 1]))
        return products.im_prod(ids[i - 1], ids[j - 1])

    builder.add_psd("schurV", (), hermitian_embedding(len(ids) + 1, re_entry, im_entry))
    set_cost_objective(builder, topo, generation)
    return builder.build()


def _build_x_sdp(grid: Grid, topo: Topology) -> Formulation:
    builder = new_builder("sdp_x", grid)
    _add_x(builder, grid, x_pairs(topo, full=True))
    generation = add_generation(builder, topo)
    products = XProducts(builder, topo)
    flow = _add_flow_variables(builder, topo, products)

    for arc in topo.arcs:
        if is_bounded(arc.s_max):
            builder.add_cone("flowboundX", arc.key, list(flow(arc)), ZERO + arc.s_max)
    add_phase_bounds(builder, topo, products, PHASE_TAGS)
    add_power_balance(builder, grid, topo, products.sq, flow, generation)
    builder.add_psd("psdX", (), _x_embedding(products, topo.bus_ids))
    set_cost_objective(builder, topo, generation)
    return builder.build()


def build_sdp_complex(grid: Grid, variant: ComplexVariant | str = ComplexVariant.X_SDP) -> Formulation:
    variant = ComplexVariant(variant)
    topo = require_valid(grid)
    if variant == ComplexVariant.V_SDP:
        return _build_v_sdp(grid, topo)
    return _build_x_sdp(grid, topo)


def _add_minor_cones(builder: FormulationBuilder, pairs: Iterable[Tuple[int, int]]) -> None:
    for b, a in pairs:
        builder.add_cone(
            "minorsoc",
            (b, a),
            [builder.var(x_re(b, a)), builder.var(x_im(b, a))],
            builder.var(x_re(b, b)),
            builder.var(x_re(a, a)),
        )


def build_socp_xspace(grid: Grid) -> Formulation:
    """2×2 principal minors of X relaxed to rotated cones, one per adjacent pair."""
    topo = require_valid(grid)
    builder = new_builder("socp_x", grid)
    pairs = x_pairs(topo, full=False)
    _add_x(builder, grid, pairs)
    generation = add_generation(builder, topo)
    products = XProducts(builder, topo)

    _add_minor_cones(builder, pairs)
    add_power_balance(builder, grid, topo, products.sq, lambda arc: arc_flow(products, arc), generation)

    # net injection kept within the summed generator limits of the bus
    for bus in grid.buses:
        real = ZERO + bus.demand_re + bus.shunt_re * products.sq(bus.id)
        imag = ZERO + bus.demand_im - bus.shunt_im * products.sq(bus.id)
        for arc in topo.arcs_from(bus.id):
            flow_re, flow_im = arc_flow(products, arc)
            real = real + flow_re
            imag = imag + flow_im
        gens = topo.generators[bus.id]
        sides = (
            ("re", real, sum(g.p_min for g in gens), sum(g.p_max for g in gens)),
            ("im", imag, sum(g.q_min for g in gens), sum(g.q_max for g in gens)),
        )
        for part, expr, lower, upper in sides:
            if math.isfinite(lower):
                builder.add_constraint("injectionbound", (part, "lower", bus.id), expr, Sense.GE, lower)
            if math.isfinite(upper):
                builder.add_constraint("injectionbound", (part, "upper", bus.id), expr, Sense.LE, upper)

    set_cost_objective(builder, topo, generation)
    return builder.build()


def shat_re(arc: Arc) -> str:
    return var_name("Shat", *arc.key, part="re")


def shat_im(arc: Arc) -> str:
    return var_name("Shat", *arc.key, part="im")


def ihat(arc: Arc) -> str:
    return var_name("Ihat", *arc.key)


def wihat(arc: Arc) -> str:
    return var_name("WIhat", *arc.key)


def build_qc_lifted(grid: Grid) -> Formulation:
    """Quadratic-convex relaxation: squared flows and currents lifted to new variables.

    X carries every bus pair, as in the complex SDP, and its PSD condition is
    replaced by the 2×2 minor cones of all those pairs. The product |V_b|²·|I|²
    is enclosed by McCormick envelopes over the voltage and current boxes.
    """
    topo = require_valid(grid)
    builder = new_builder("qc", grid)
    pairs = x_pairs(topo, full=True)
    _add_x(builder, grid, pairs)
    generation = add_generation(builder, topo)
    products = XProducts(builder, topo)
    flow = _add_flow_variables(builder, topo, products)

    limits = {arc.key: current_limit(arc, grid, derive=True) for arc in topo.arcs}
    for arc in topo.arcs:
        builder.add_variable(shat_re(arc))
        builder.add_variable(shat_im(arc))
        limit = limits[arc.key]
        upper = limit**2 if is_bounded(limit) else math.inf
        builder.add_variable(ihat(arc), 0.0, upper, tag="currentboundhat")
        builder.add_variable(wihat(arc))

    add_phase_bounds(builder, topo, products, PHASE_TAGS)
    add_power_balance(builder, grid, topo, products.sq, flow, generation)
    _add_minor_cones(builder, pairs)

    for arc in topo.arcs:
        sr, si = builder.var(shat_re(arc)), builder.var(shat_im(arc))
        i2, wi = builder.var(ihat(arc)), builder.var(wihat(arc))
        flow_re, flow_im = flow(arc)

        builder.add_constraint("lift1", arc.key, sr + si - wi, Sense.EQ)
        builder.add_constraint("lift3" if arc.reversed else "lift2", arc.key, i2 - arc_current_sq(products, arc), Sense.EQ)
        if is_bounded(arc.s_max):
            builder.add_constraint("flowboundhat", arc.key, sr + si, Sense.LE, arc.s_max**2)

        x = products.sq(arc.bus)
        bus = grid.bus(arc.bus)
        x_lo, x_hi = max(0.0, bus.v_min) ** 2, bus.v_max**2
        limit = limits[arc.key]
        i_hi = limit**2 if is_bounded(limit) else math.inf
        builder.add_constraint("mccormick", ("lower1", *arc.key), wi - x_lo * i2, Sense.GE)
        if math.isfinite(x_hi):
            builder.add_constraint("mccormick", ("upper1", *arc.key), wi - x_hi * i2, Sense.LE)
        if math.isfinite(i_hi):
            if math.isfinite(x_hi):
                builder.add_constraint("mccormick", ("lower2", *arc.key), wi - x_hi * i2 - i_hi * x, Sense.GE, -x_hi * i_hi)
            builder.add_constraint("mccormick", ("upper2", *arc.key), wi - x_lo * i2 - i_hi * x, Sense.LE, -x_lo * i_hi)

        builder.add_constraint("squareenvR", arc.key, flow_re * flow_re - sr, Sense.LE)
        builder.add_constraint("squareenvC", arc.key, flow_im * flow_im - si, Sense.LE)
        if is_bounded(arc.s_max):
            # secant of the square over [−S̄, S̄] is flat at S̄²
            builder.add_constraint("secantR", arc.key, sr, Sense.LE, arc.s_max**2)
            builder.add_constraint("secantC", arc.key, si, Sense.LE, arc.s_max**2)

    set_cost_objective(builder, topo, generation)
    return builder.build()
