"""Trace formulations over the real lifted matrix W = x·xᵀ, x = [ReV; ImV]."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy import sparse

from shared.schemas import Grid

from ..formulation import ZERO, Formulation, FormulationBuilder, Polynomial, Sense, var_name
from ..network import Topology, require_valid
from .common import (
    PhaseTags,
    add_cartesian_voltages,
    add_generation,
    add_phase_bounds,
    add_reference,
    is_bounded,
    new_builder,
    set_cost_objective,
    v_im,
    v_re,
)

ArcKey = Tuple[int, int, int]
Pair = Tuple[int, int]


def _sym(dim: int, entries: list[tuple[int, int, float]]) -> sparse.csr_matrix:
    rows, cols, values = [], [], []
    for i, j, v in entries:
        rows.append(i)
        cols.append(j)
        values.append(v)
    return sparse.coo_matrix((values, (rows, cols)), shape=(dim, dim)).tocsr()


@dataclass(frozen=True)
class ConstraintMatrices:
    """Symmetric 2n×2n matrices whose traces against W give the network quantities.

    `bus_real[b]`/`bus_imag[b]` give the net injection of bus b without demand
    and generation, `arc_real`/`arc_imag` the flow on an arc, and
    `theta`/`theta_hat` the real and imaginary part of V_b·conj(V_a); the
    diagonal entry `theta[(b, b)]` gives |V_b|².
    """

    n: int
    position: Dict[int, int]
    bus_real: Dict[int, sparse.csr_matrix]
    bus_imag: Dict[int, sparse.csr_matrix]
    arc_real: Dict[ArcKey, sparse.csr_matrix]
    arc_imag: Dict[ArcKey, sparse.csr_matrix]
    theta: Dict[Pair, sparse.csr_matrix]
    theta_hat: Dict[Pair, sparse.csr_matrix]


def _theta(n: int, k: int, j: int) -> sparse.csr_matrix:
    if k == j:
        return _sym(2 * n, [(k, k, 1.0), (n + k, n + k, 1.0)])
    return _sym(2 * n, [(k, j, 0.5), (j, k, 0.5), (n + k, n + j, 0.5), (n + j, n + k, 0.5)])


def _theta_hat(n: int, k: int, j: int) -> sparse.csr_matrix:
    return _sym(2 * n, [(n + k, j, 0.5), (j, n + k, 0.5), (k, n + j, -0.5), (n + j, k, -0.5)])


def constraint_matrices(grid: Grid) -> ConstraintMatrices:
    topo = require_valid(grid)
    n = len(topo.bus_ids)
    pos = topo.position

    theta: Dict[Pair, sparse.csr_matrix] = {}
    theta_hat: Dict[Pair, sparse.csr_matrix] = {}
    for b in topo.bus_ids:
        theta[(b, b)] = _theta(n, pos[b], pos[b])
    for arc in topo.arcs:
        pair = (arc.bus, arc.other)
        if pair not in theta:
            theta[pair] = _theta(n, pos[arc.bus], pos[arc.other])
            theta_hat[pair] = _theta_hat(n, pos[arc.bus], pos[arc.other])

    arc_real: Dict[ArcKey, sparse.csr_matrix] = {}
    arc_imag: Dict[ArcKey, sparse.csr_matrix] = {}
    for arc in topo.arcs:
        d, o = arc.diag, arc.off
        sq = theta[(arc.bus, arc.bus)]
        re, im = theta[(arc.bus, arc.other)], theta_hat[(arc.bus, arc.other)]
        arc_real[arc.key] = (d.real * sq + o.real * re + o.imag * im).tocsr()
        arc_imag[arc.key] = (-d.imag * sq + o.real * im - o.imag * re).tocsr()

    bus_real: Dict[int, sparse.csr_matrix] = {}
    bus_imag: Dict[int, sparse.csr_matrix] = {}
    for bus in grid.buses:
        sq = theta[(bus.id, bus.id)]
        real = bus.shunt_re * sq
        imag = -bus.shunt_im * sq
        for arc in topo.arcs_from(bus.id):
            real = real + arc_real[arc.key]
            imag = imag + arc_imag[arc.key]
        bus_real[bus.id] = sparse.csr_matrix(real)
        bus_imag[bus.id] = sparse.csr_matrix(imag)

    return ConstraintMatrices(n, dict(pos), bus_real, bus_imag, arc_real, arc_imag, theta, theta_hat)


def w_name(i: int, j: int) -> str:
    """Entry of W, 1-based with i ≤ j."""
    i, j = min(i, j), max(i, j)
    return var_name("W", i + 1, j + 1)


def lifted_matrix(voltages: np.ndarray) -> np.ndarray:
    x = np.concatenate([voltages.real, voltages.imag])
    return np.outer(x, x)


def trace_value(matrix: sparse.spmatrix, w: np.ndarray) -> float:
    return float(matrix.multiply(w).sum())


class TraceProducts:
    """Products as traces against the W variables."""

    def __init__(self, builder: FormulationBuilder, matrices: ConstraintMatrices) -> None:
        self._b = builder
        self._m = matrices

    def trace(self, matrix: sparse.spmatrix) -> Polynomial:
        # W is symmetric, so W_ij for i < j collects M_ij + M_ji
        m = sparse.csr_matrix(matrix)
        coo = sparse.triu(m + m.T, k=1).tocoo()
        poly = ZERO
        for i, j, v in zip(coo.row, coo.col, coo.data):
            poly = poly + float(v) * self._b.var(w_name(int(i), int(j)))
        diag = m.diagonal()
        for i in np.flatnonzero(diag):
            poly = poly + float(diag[i]) * self._b.var(w_name(int(i), int(i)))
        return poly

    def sq(self, b: int) -> Polynomial:
        return self.trace(self._m.theta[(b, b)])

    def re_prod(self, b: int, a: int) -> Polynomial:
        return self.trace(self._m.theta[(b, a)])

    def im_prod(self, b: int, a: int) -> Polynomial:
        return self.trace(self._m.theta_hat[(b, a)])


def _add_w(builder: FormulationBuilder, n: int) -> None:
    for i in range(2 * n):
        for j in range(i, 2 * n):
            builder.add_variable(w_name(i, j))


def _add_trace_common(
    builder: FormulationBuilder,
    grid: Grid,
    topo: Topology,
    matrices: ConstraintMatrices,
    products: TraceProducts,
    bal_tags: Tuple[str, str],
    generation: dict,
) -> None:
    for bus in grid.buses:
        real = products.trace(matrices.bus_real[bus.id]) + bus.demand_re
        imag = products.trace(matrices.bus_imag[bus.id]) + bus.demand_im
        for gen in topo.generators[bus.id]:
            gen_re, gen_im = generation[(bus.id, gen.index)]
            real = real - gen_re
            imag = imag - gen_im
        builder.add_constraint(bal_tags[0], (bus.id,), real, Sense.EQ)
        builder.add_constraint(bal_tags[1], (bus.id,), imag, Sense.EQ)

    add_phase_bounds(builder, topo, products, PhaseTags("tracephase1", "tracephase2", "tracephaseaux"))
    for bus in grid.buses:
        sq = products.sq(bus.id)
        if bus.v_min > 0:
            builder.add_constraint("tracevoltage", ("lower", bus.id), sq, Sense.GE, bus.v_min**2)
        if math.isfinite(bus.v_max):
            builder.add_constraint("tracevoltage", ("upper", bus.id), sq, Sense.LE, bus.v_max**2)


def build_matrix_form(grid: Grid) -> Formulation:
    topo = require_valid(grid)
    matrices = constraint_matrices(grid)
    n = matrices.n
    builder = new_builder("matrix", grid)

    add_cartesian_voltages(builder, grid)
    _add_w(builder, n)
    generation = add_generation(builder, topo)
    products = TraceProducts(builder, matrices)

    _add_trace_common(builder, grid, topo, matrices, products, ("tracebalR", "tracebalC"), generation)
    for arc in topo.arcs:
        if is_bounded(arc.s_max):
            t_re = products.trace(matrices.arc_real[arc.key])
            t_im = products.trace(matrices.arc_imag[arc.key])
            builder.add_constraint("tracepow", arc.key, t_re * t_re + t_im * t_im, Sense.LE, arc.s_max**2)
    # the sign of ReV_r is free here: W is unchanged by V -> -V
    add_reference(builder, topo, with_sign=False)

    x = [builder.var(v_re(b)) for b in topo.bus_ids] + [builder.var(v_im(b)) for b in topo.bus_ids]
    for i in range(2 * n):
        for j in range(i, 2 * n):
            builder.add_constraint("rank1", (i + 1, j + 1), builder.var(w_name(i, j)) - x[i] * x[j], Sense.EQ)

    set_cost_objective(builder, topo, generation)
    return builder.build()


def build_sdp_real(grid: Grid) -> Formulation:
    topo = require_valid(grid)
    matrices = constraint_matrices(grid)
    n = matrices.n
    builder = new_builder("sdp_real", grid)

    _add_w(builder, n)
    generation = add_generation(builder, topo)
    products = TraceProducts(builder, matrices)

    _add_trace_common(builder, grid, topo, matrices, products, ("tracebalR", "tracebalC"), generation)
    one = ZERO + 1.0
    for arc in topo.arcs:
        if not is_bounded(arc.s_max):
            continue
        t_re = products.trace(matrices.arc_real[arc.key])
        t_im = products.trace(matrices.arc_imag[arc.key])
        block = [
            [ZERO + arc.s_max**2, t_re, t_im],
            [t_re, one, ZERO],
            [t_im, ZERO, one],
        ]
        builder.add_psd("tracepowsdp", arc.key, block)

    r = matrices.position[topo.reference]
    builder.add_constraint("reference", ("im", topo.reference), builder.var(w_name(n + r, n + r)), Sense.EQ)

    w = [[builder.var(w_name(i, j)) for j in range(2 * n)] for i in range(2 * n)]
    builder.add_psd("psdW", (), w)

    set_cost_objective(builder, topo, generation)
    return builder.build()
