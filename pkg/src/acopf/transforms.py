"""Coordinate changes and liftings between the variable spaces of the formulations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Literal, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from shared.errors import UnsupportedFeature
from shared.schemas import Grid

from .builders.common import sg_im, sg_re
from .builders.jabr import c_name, s_name
from .builders.matrices import lifted_matrix, w_name
from .builders.polar import cs_name, sn_name, theta, v_mag
from .builders.relaxations import ihat, shat_im, shat_re, wihat, x_im, x_pairs, x_re
from .formulation import split_name, var_name
from .network import topology

ArcKey = Tuple[int, int, int]
GenKey = Tuple[int, int]


class VoltagePoint(BaseModel):
    """Bus voltages in one representation.

    For `cartesian` the two columns are (ReV, ImV); for `polar` they are
    (v, θ) with v ≥ 0 and θ in [−π, π].
    """

    model_config = ConfigDict(frozen=True)

    representation: Literal["cartesian", "polar"]
    bus_ids: Tuple[int, ...]
    first: Tuple[float, ...]
    second: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "VoltagePoint":
        if not (len(self.bus_ids) == len(self.first) == len(self.second)):
            raise ValueError("voltage point columns differ in length")
        if self.representation == "polar":
            if any(v < 0 for v in self.first):
                raise ValueError("voltage magnitudes must be non-negative")
            if any(abs(t) > math.pi for t in self.second):
                raise ValueError("voltage angles must lie in [-pi, pi]")
        return self

    @classmethod
    def from_complex(cls, bus_ids: Tuple[int, ...], values: np.ndarray) -> "VoltagePoint":
        values = np.asarray(values, dtype=complex)
        return cls(
            representation="cartesian",
            bus_ids=tuple(bus_ids),
            first=tuple(float(v) for v in values.real),
            second=tuple(float(v) for v in values.imag),
        )

    @classmethod
    def flat(cls, grid: Grid) -> "VoltagePoint":
        ids = tuple(bus.id for bus in grid.buses)
        return cls.from_complex(ids, np.ones(len(ids), dtype=complex))

    def as_complex(self) -> np.ndarray:
        point = self if self.representation == "cartesian" else polar_to_cartesian(self)
        return np.asarray(point.first) + 1j * np.asarray(point.second)

    def by_bus(self) -> Dict[int, complex]:
        return dict(zip(self.bus_ids, self.as_complex().tolist()))


def cartesian_to_polar(p: VoltagePoint) -> VoltagePoint:
    if p.representation == "polar":
        return p
    values = np.asarray(p.first) + 1j * np.asarray(p.second)
    magnitudes = np.abs(values)
    # atan2(0, 0) is 0, which is the convention for a zero voltage
    angles = np.arctan2(values.imag, values.real)
    return VoltagePoint(
        representation="polar",
        bus_ids=p.bus_ids,
        first=tuple(magnitudes.tolist()),
        second=tuple(angles.tolist()),
    )


def polar_to_cartesian(p: VoltagePoint) -> VoltagePoint:
    if p.representation == "cartesian":
        return p
    v, t = np.asarray(p.first), np.asarray(p.second)
    return VoltagePoint(
        representation="cartesian",
        bus_ids=p.bus_ids,
        first=tuple((v * np.cos(t)).tolist()),
        second=tuple((v * np.sin(t)).tolist()),
    )


@dataclass(frozen=True)
class JabrPoint:
    diag: Dict[int, float]
    re: Dict[Tuple[int, int], float]
    im: Dict[Tuple[int, int], float]


def lift_to_jabr(p: VoltagePoint, grid: Grid) -> JabrPoint:
    voltages = p.by_bus()
    topo = topology(grid)
    diag = {b: abs(voltages[b]) ** 2 for b in topo.bus_ids}
    re, im = {}, {}
    for b, a in topo.pairs:
        product = voltages[b] * voltages[a].conjugate()
        re[(b, a)] = product.real
        im[(b, a)] = product.imag
    return JabrPoint(diag, re, im)


class PsdTarget(str, Enum):
    W_REAL = "W_real"
    X_HERMITIAN = "X_hermitian"


def lift_to_psd(p: VoltagePoint, target: PsdTarget | str) -> np.ndarray:
    voltages = p.as_complex()
    if PsdTarget(target) == PsdTarget.W_REAL:
        return lifted_matrix(voltages)
    return np.outer(voltages, voltages.conj())


@dataclass(frozen=True)
class Injections:
    currents: Dict[ArcKey, complex]
    flows: Dict[ArcKey, complex]
    # Σ_g Sg needed at each bus for the balance to close
    generation: Dict[int, complex]


def recover_injections(grid: Grid, p: VoltagePoint) -> Injections:
    voltages = p.by_bus()
    topo = topology(grid)
    currents: Dict[ArcKey, complex] = {}
    flows: Dict[ArcKey, complex] = {}
    for arc in topo.arcs:
        current = arc.diag * voltages[arc.bus] + arc.off * voltages[arc.other]
        currents[arc.key] = current
        flows[arc.key] = voltages[arc.bus] * current.conjugate()
    generation: Dict[int, complex] = {}
    for bus in grid.buses:
        total = bus.demand + bus.shunt.conjugate() * abs(voltages[bus.id]) ** 2
        for arc in topo.arcs_from(bus.id):
            total += flows[arc.key]
        generation[bus.id] = total
    return Injections(currents, flows, generation)


def dispatch_generation(grid: Grid, injections: Injections) -> Dict[GenKey, complex]:
    """Assigns each bus's required generation to its first generator."""
    topo = topology(grid)
    dispatch: Dict[GenKey, complex] = {}
    for bus_id in topo.bus_ids:
        for k, gen in enumerate(topo.generators[bus_id]):
            dispatch[(bus_id, gen.index)] = injections.generation[bus_id] if k == 0 else 0j
    return dispatch


# variable families carried by each formulation kind
_FAMILIES: Dict[str, frozenset] = {
    "siv": frozenset({"V", "I", "S", "Sg", "V2"}),
    "voltage_only": frozenset({"V", "Sg"}),
    "polar": frozenset({"v", "theta", "cs", "sn", "Sg"}),
    "jabr": frozenset({"c", "s", "Sg"}),
    "mixed": frozenset({"c", "s", "V", "Sg"}),
    "matrix": frozenset({"V", "W", "Sg"}),
    "sdp_real": frozenset({"W", "Sg"}),
    "sdp_v": frozenset({"V", "X", "Sg"}),
    "sdp_x": frozenset({"X", "S", "Sg"}),
    "socp_x": frozenset({"X", "Sg"}),
    "qc": frozenset({"X", "S", "Shat", "Ihat", "WIhat", "Sg"}),
}


def lift_point(
    grid: Grid,
    voltage: VoltagePoint,
    generation: Optional[Mapping[GenKey, complex]] = None,
    form: str = "voltage_only",
) -> Dict[str, float]:
    """Complete point for a formulation kind, built from voltages and dispatch.

    Without an explicit dispatch each bus's required generation goes to its
    first generator.
    """
    if form not in _FAMILIES:
        raise UnsupportedFeature(f"unknown formulation '{form}'")
    families = _FAMILIES[form]
    topo = topology(grid)
    voltages = voltage.by_bus()
    injections = recover_injections(grid, voltage)
    if generation is None:
        generation = dispatch_generation(grid, injections)

    point: Dict[str, float] = {}
    for (b, g), value in generation.items():
        point[sg_re(b, g)] = float(np.real(value))
        point[sg_im(b, g)] = float(np.imag(value))

    polar = cartesian_to_polar(voltage)
    for b, mag, angle in zip(polar.bus_ids, polar.first, polar.second):
        point[var_name("V", b, part="re")] = voltages[b].real
        point[var_name("V", b, part="im")] = voltages[b].imag
        point[var_name("V2", b)] = abs(voltages[b]) ** 2
        point[v_mag(b)] = mag
        point[theta(b)] = angle

    jabr = lift_to_jabr(voltage, grid)
    for b, value in jabr.diag.items():
        point[c_name(b)] = value
    for (b, a), value in jabr.re.items():
        point[c_name(b, a)] = value
        point[s_name(b, a)] = jabr.im[(b, a)]
        delta = point[theta(b)] - point[theta(a)]
        point[cs_name(b, a)] = math.cos(delta)
        point[sn_name(b, a)] = math.sin(delta)

    w = lifted_matrix(np.array([voltages[b] for b in topo.bus_ids]))
    for i in range(w.shape[0]):
        for j in range(i, w.shape[0]):
            point[w_name(i, j)] = float(w[i, j])

    for b in topo.bus_ids:
        point[x_re(b, b)] = abs(voltages[b]) ** 2
    for b, a in x_pairs(topo, full=form in ("sdp_v", "sdp_x", "qc")):
        product = voltages[b] * voltages[a].conjugate()
        point[x_re(b, a)] = product.real
        point[x_im(b, a)] = product.imag

    for arc in topo.arcs:
        current, flow = injections.currents[arc.key], injections.flows[arc.key]
        point[var_name("I", *arc.key, part="re")] = current.real
        point[var_name("I", *arc.key, part="im")] = current.imag
        point[var_name("S", *arc.key, part="re")] = flow.real
        point[var_name("S", *arc.key, part="im")] = flow.imag
        point[shat_re(arc)] = flow.real**2
        point[shat_im(arc)] = flow.imag**2
        point[ihat(arc)] = abs(current) ** 2
        point[wihat(arc)] = abs(voltages[arc.bus]) ** 2 * abs(current) ** 2

    return {name: value for name, value in point.items() if split_name(name)[0] in families}
