"""Admittance data and topology derived from a Grid.

Every object here is immutable and safe to share between threads.
"""

from __future__ import annotations

import cmath
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from shared.errors import InvalidGrid, ZeroImpedance
from shared.schemas import Branch, BusType, Generator, Grid, ValidationReport, Violation


@dataclass(frozen=True)
class BranchAdmittance:
    yff: complex
    yft: complex
    ytf: complex
    ytt: complex

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.yff, self.yft], [self.ytf, self.ytt]], dtype=complex)


def branch_admittance(branch: Branch) -> BranchAdmittance:
    """π-model admittance entries with the transformer on the from side."""
    if branch.r == 0.0 and branch.x == 0.0:
        raise ZeroImpedance(f"branch {branch.key} has r = x = 0")
    series = 1.0 / complex(branch.r, branch.x)
    charging = 0.5j * branch.b_ch
    tau = branch.tau
    return BranchAdmittance(
        yff=(series + charging) / (tau * tau),
        yft=-series / (tau * cmath.exp(-1j * branch.nu)),
        ytf=-series / (tau * cmath.exp(1j * branch.nu)),
        ytt=series + charging,
    )


def branch_currents(admittance: BranchAdmittance, v_from: complex, v_to: complex) -> Tuple[complex, complex]:
    """Currents leaving the from end and the to end of a branch."""
    i_from = admittance.yff * v_from + admittance.yft * v_to
    i_to = admittance.ytf * v_from + admittance.ytt * v_to
    return i_from, i_to


@dataclass(frozen=True)
class Arc:
    """A directed arc (bus, other, h) of L = L0 ∪ L1.

    The current leaving `bus` along the arc is `diag * V_bus + off * V_other`.
    """

    bus: int
    other: int
    h: int
    branch: Branch
    reversed: bool
    diag: complex
    off: complex

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.bus, self.other, self.h)

    @property
    def s_max(self) -> float:
        return self.branch.s_max


@dataclass(frozen=True)
class Topology:
    bus_ids: Tuple[int, ...]
    position: Dict[int, int]
    l0: Tuple[Arc, ...]
    l1: Tuple[Arc, ...]
    # Unordered adjacent bus pairs in their L0 orientation.
    pairs: Tuple[Tuple[int, int], ...]
    generators: Dict[int, Tuple[Generator, ...]]
    reference: int
    pair_set: frozenset

    @property
    def arcs(self) -> Tuple[Arc, ...]:
        return self.l0 + self.l1

    def arcs_from(self, bus_id: int) -> Tuple[Arc, ...]:
        return tuple(arc for arc in self.arcs if arc.bus == bus_id)

    def pair_orientation(self, b: int, a: int) -> Tuple[Tuple[int, int], float]:
        """Canonical pair for (b, a) and the sign applied to its sine-like quantity."""
        if (b, a) in self.pair_set:
            return (b, a), 1.0
        return (a, b), -1.0


@lru_cache(maxsize=64)
def topology(grid: Grid) -> Topology:
    bus_ids = tuple(bus.id for bus in grid.buses)
    position = {bus_id: k for k, bus_id in enumerate(bus_ids)}
    l0: List[Arc] = []
    l1: List[Arc] = []
    pairs: List[Tuple[int, int]] = []
    for branch in grid.active_branches:
        adm = branch_admittance(branch)
        l0.append(Arc(branch.from_bus, branch.to_bus, branch.parallel_index, branch, False, adm.yff, adm.yft))
        l1.append(Arc(branch.to_bus, branch.from_bus, branch.parallel_index, branch, True, adm.ytt, adm.ytf))
        pair = (branch.from_bus, branch.to_bus)
        if pair not in pairs:
            pairs.append(pair)
    generators: Dict[int, Tuple[Generator, ...]] = {bus_id: grid.generators_at(bus_id) for bus_id in bus_ids}
    reference = grid.reference_bus
    return Topology(
        bus_ids=bus_ids,
        position=position,
        l0=tuple(l0),
        l1=tuple(l1),
        pairs=tuple(pairs),
        generators=generators,
        reference=reference if reference is not None else bus_ids[0],
        pair_set=frozenset(pairs),
    )


def network_admittance(grid: Grid) -> sparse.csr_matrix:
    """Bus admittance matrix; duplicate (row, col) contributions are summed."""
    topo = topology(grid)
    n = len(topo.bus_ids)
    rows: List[int] = []
    cols: List[int] = []
    values: List[complex] = []
    for bus in grid.buses:
        k = topo.position[bus.id]
        rows.append(k)
        cols.append(k)
        values.append(bus.shunt)
    for arc in topo.arcs:
        b, a = topo.position[arc.bus], topo.position[arc.other]
        rows.extend((b, b))
        cols.extend((b, a))
        values.extend((arc.diag, arc.off))
    matrix = sparse.coo_matrix((np.array(values, dtype=complex), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    return matrix


def validate_grid(grid: Grid) -> ValidationReport:
    violations: List[Violation] = []

    def report(code: str, message: str) -> None:
        violations.append(Violation(code=code, message=message))

    if not grid.buses:
        report("empty_grid", "grid has no buses")
    bus_ids = [bus.id for bus in grid.buses]
    known = set(bus_ids)
    if len(known) != len(bus_ids):
        report("duplicate_bus", "duplicate bus ids")

    references = [bus.id for bus in grid.buses if bus.bus_type == BusType.REFERENCE]
    if not references:
        report("missing_reference", "missing reference bus")
    elif len(references) > 1:
        report("multiple_reference", "multiple reference buses")

    for bus in grid.buses:
        if bus.v_min < 0 or bus.v_max < bus.v_min:
            report("voltage_bounds", f"bus {bus.id}: invalid voltage bounds [{bus.v_min}, {bus.v_max}]")

    seen_keys = set()
    parallel: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for branch in grid.branches:
        key = branch.key
        if branch.from_bus not in known or branch.to_bus not in known:
            report("dangling_endpoint", f"branch {key}: dangling endpoint")
        if branch.from_bus == branch.to_bus:
            report("self_loop", f"branch {key}: both endpoints at bus {branch.from_bus}")
        if branch.tau <= 0:
            report("negative_tau", f"branch {key}: negative tau {branch.tau}")
        if branch.r == 0.0 and branch.x == 0.0:
            report("zero_impedance", f"branch {key}: zero impedance")
        if branch.eta_min > branch.eta_max:
            report("phase_bounds", f"branch {key}: eta_min > eta_max")
        if branch.s_max < 0 or (branch.i_max is not None and branch.i_max < 0):
            report("negative_flow_bound", f"branch {key}: negative flow bound")
        if key in seen_keys:
            report("duplicate_branch", f"branch {key}: duplicate branch key")
        seen_keys.add(key)
        parallel[(branch.from_bus, branch.to_bus)].append(branch.parallel_index)

    for (b, a), indices in parallel.items():
        if sorted(set(indices)) != list(range(1, len(set(indices)) + 1)):
            report("parallel_indices", f"pair ({b}, {a}): non-contiguous parallel indices {sorted(indices)}")
        if (a, b) in parallel:
            if b < a:
                report("antiparallel", f"pair ({b}, {a}): branches stored in both orientations")

    gen_keys = set()
    for gen in grid.generators:
        if gen.bus not in known:
            report("dangling_generator", f"generator ({gen.bus}, {gen.index}): unknown bus")
        if (gen.bus, gen.index) in gen_keys:
            report("duplicate_generator", f"generator ({gen.bus}, {gen.index}): duplicate")
        gen_keys.add((gen.bus, gen.index))
        if gen.p_min > gen.p_max or gen.q_min > gen.q_max:
            report("generation_bounds", f"generator ({gen.bus}, {gen.index}): invalid generation bounds")

    if violations:
        logger.debug("Grid validation found {} violation(s)", len(violations))
    return ValidationReport(violations=violations)


def require_valid(grid: Grid) -> Topology:
    """Topology of a grid that passed validation; raises InvalidGrid otherwise."""
    report = validate_grid(grid)
    if not report.ok:
        raise InvalidGrid(report)
    return topology(grid)
