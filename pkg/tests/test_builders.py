import math

import numpy as np
import pytest
from conftest import random_voltages

from acopf.builders import BUILDERS, EXACT, BoundMode, build, build_voltage_only, constraint_matrices
from acopf.builders.matrices import lifted_matrix, trace_value
from acopf.builders.relaxations import x_pairs
from acopf.formulation import Sense, evaluate
from acopf.network import topology
from acopf.transforms import VoltagePoint, lift_point, recover_injections
from shared.errors import MissingCurrentBound, UnsupportedFeature

GEN = {"genpowerboundR", "genpowerboundC"}
FLOW = {"powerflowR", "powerflowC"}

CASE5_TAGS = {
    "siv": GEN | FLOW | {
        "voltagebox", "voltageboundR", "powerboundR", "V2def", "reference", "powercurrentR", "powercurrentC",
        "ohmlaw1R", "ohmlaw1C", "ohmlaw2R", "ohmlaw2C",
    },
    "voltage_only": GEN | FLOW | {"voltagebox", "Vcurrentbound1rel", "Vcurrentbound2rel", "voltageboundR", "reference"},
    "polar": GEN | FLOW | {
        "voltageboundvR", "phasebounds", "trigbox", "trigidentity", "reference", "powerbound1vR", "powerbound2vR",
    },
    "jabr": GEN | FLOW | {"voltageboundJ", "relaxJ", "powerbound1J", "powerbound2J"},
    "mixed": GEN | FLOW | {
        "voltageboundJ", "relaxJ", "powerbound1J", "powerbound2J", "voltagebox", "csVrel1", "csVrel2", "csVrel3",
        "reference",
    },
    "matrix": GEN | {"voltagebox", "tracebalR", "tracebalC", "tracevoltage", "tracepow", "reference", "rank1"},
    "sdp_real": GEN | {"tracebalR", "tracebalC", "tracevoltage", "tracepowsdp", "reference", "psdW"},
    "sdp_v": GEN | FLOW | {"voltagebox", "voltageboundX", "currentbound1X", "currentbound2X", "reference", "schurV"},
    "sdp_x": GEN | FLOW | {"voltageboundX", "flowdefR", "flowdefC", "flowboundX", "psdX"},
    "socp_x": GEN | FLOW | {"voltageboundX", "minorsoc", "injectionbound"},
    "qc": GEN | FLOW | {
        "voltageboundX", "flowdefR", "flowdefC", "currentboundhat", "minorsoc", "lift1", "lift2", "lift3",
        "flowboundhat", "mccormick", "squareenvR", "squareenvC", "secantR", "secantC",
    },
}

BOUNDED_ARCS = {(1, 2, 1), (2, 1, 1), (4, 5, 1), (5, 4, 1)}


def _keys(f, tag):
    return {c.key for c in f.constraints if c.tag == tag} | {c.key for c in f.cones if c.tag == tag}


@pytest.mark.parametrize("form", sorted(BUILDERS))
def test_case5_tag_sets(case5, form):
    assert build(form, case5).tags() == CASE5_TAGS[form]


def test_every_kind_has_a_golden_tag_set():
    assert set(CASE5_TAGS) == set(BUILDERS)


def test_siv_counts(case5):
    f = build("siv", case5)

    assert len(f.constraints_tagged("ohmlaw1R")) == 6
    assert len(f.constraints_tagged("ohmlaw2C")) == 6
    assert len(f.constraints_tagged("powerflowR")) == 5
    assert _keys(f, "powerboundR") == BOUNDED_ARCS
    assert _keys(f, "reference") == {("im", 4), ("re", 4)}


def test_flow_bounds_only_on_limited_arcs(case5):
    polar = build("polar", case5)
    jabr = build("jabr", case5)

    assert _keys(polar, "powerbound1vR") | _keys(polar, "powerbound2vR") == BOUNDED_ARCS
    assert _keys(jabr, "powerbound1J") | _keys(jabr, "powerbound2J") == BOUNDED_ARCS
    assert _keys(build("sdp_x", case5), "flowboundX") == BOUNDED_ARCS


def test_phase_bounds_at_right_angle_are_dropped(case5, three_bus):
    assert not any(c.tag.startswith("phasediff") for c in build("siv", case5).constraints)

    f = build("siv", three_bus)
    assert len(f.constraints_tagged("phasediffbound1R")) == 3
    assert len(f.constraints_tagged("phasediffbound2R")) == 3
    assert _keys(f, "phasediffboundauxR") == {(1, 2), (2, 3), (1, 3)}
    assert {c.sense for c in f.constraints_tagged("phasediffbound1R")} == {Sense.GE}
    assert len(build("polar", three_bus).constraints_tagged("phasediffboundvR")) == 6


def test_derived_current_bound(case5):
    f = build_voltage_only(case5, BoundMode.CURRENT_DERIVED)
    bound = next(c for c in f.constraints_tagged("Vcurrentbound1rel") if c.key == (1, 2, 1))

    assert bound.rhs == pytest.approx((4.0 / 0.9) ** 2)
    assert _keys(f, "Vcurrentbound1rel") | _keys(f, "Vcurrentbound2rel") == BOUNDED_ARCS


def test_given_current_bounds_must_exist(case5):
    with pytest.raises(MissingCurrentBound):
        build_voltage_only(case5, BoundMode.CURRENT_GIVEN)


def test_power_bounds_not_quadratic(case5):
    with pytest.raises(UnsupportedFeature):
        build_voltage_only(case5, BoundMode.POWER)


def test_unknown_form(case5):
    with pytest.raises(UnsupportedFeature):
        build("dc", case5)


def test_lifted_sizes(case5):
    sdp_real = build("sdp_real", case5)
    dims = sorted(block.dim for block in sdp_real.psd_blocks)

    assert dims == [3, 3, 3, 3, 10]
    assert len(build("matrix", case5).constraints_tagged("rank1")) == 55
    assert build("sdp_x", case5).psd_blocks[0].dim == 10
    assert build("sdp_v", case5).psd_blocks[0].dim == 12
    assert len(build("socp_x", case5).cones) == 6
    assert len(build("qc", case5).constraints_tagged("mccormick")) == 32


def test_qc_minor_cones_cover_every_pair(case5):
    qc, sdp_x = build("qc", case5), build("sdp_x", case5)
    x_names = {v.name for v in sdp_x.variables if v.name.startswith("X")}

    assert len(qc.cones) == 10
    assert {v.name for v in qc.variables if v.name.startswith("X")} == x_names
    assert _keys(qc, "minorsoc") == {(b, a) for b, a in x_pairs(topology(case5), full=True)}


def test_socp_injection_bounds_pin_generatorless_bus(case5):
    f = build("socp_x", case5)
    bus2 = {c.key: c.rhs for c in f.constraints_tagged("injectionbound") if c.key[-1] == 2}

    # the demand constant sits on the right-hand side
    assert bus2 == pytest.approx(
        {("re", "lower", 2): -3.0, ("re", "upper", 2): -3.0, ("im", "lower", 2): -0.9861, ("im", "upper", 2): -0.9861}
    )
    assert len(f.constraints_tagged("injectionbound")) == 20


def test_mixed_extends_jabr(case5):
    jabr, mixed = build("jabr", case5), build("mixed", case5)
    shared = {(c.tag, c.key): c for c in mixed.constraints}

    for c in jabr.constraints:
        other = shared[(c.tag, c.key)]
        assert mixed.describe(other.poly) == jabr.describe(c.poly)
        assert (other.sense, other.rhs) == (c.sense, c.rhs)
    assert [(c.tag, c.key) for c in jabr.cones] == [(c.tag, c.key) for c in mixed.cones]
    for v in jabr.variables:
        assert mixed.variables[mixed.index_of(v.name)] == v


def test_grid_hash_identifies_the_grid(case5, three_bus):
    assert build("jabr", case5).grid_hash == build("polar", case5).grid_hash
    assert build("jabr", case5).grid_hash != build("jabr", three_bus).grid_hash


def test_voltage_only_flat_point_residual(case5):
    point = lift_point(case5, VoltagePoint.flat(case5), form="voltage_only")
    report = evaluate(build("voltage_only", case5), point)

    # bus 2 has no generator, so its demand is left over; flat voltages move only charging power
    assert report.residual("powerflowR", (2,)).residual == pytest.approx(3.0, abs=1e-9)
    charging = (0.00712 + 0.01852) / 2
    assert report.residual("powerflowC", (2,)).residual == pytest.approx(0.9861 - charging, abs=1e-9)
    assert report.residual("powerflowR", (1,)).residual == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("form", sorted(BUILDERS))
def test_lifted_point_satisfies_every_formulation(three_bus, rng, form):
    voltages = random_voltages(three_bus, rng)
    point = lift_point(three_bus, VoltagePoint.from_complex((1, 2, 3), voltages), form=form)
    report = evaluate(build(form, three_bus), point)

    assert report.max_violation <= 1e-8


def test_lifted_points_share_the_objective(three_bus, rng):
    voltage = VoltagePoint.from_complex((1, 2, 3), random_voltages(three_bus, rng))
    objectives = {form: evaluate(build(form, three_bus), lift_point(three_bus, voltage, form=form)).objective for form in BUILDERS}

    reference = objectives["siv"]
    for value in objectives.values():
        assert value == pytest.approx(reference, rel=1e-12)


def test_lifted_points_agree_across_exact_forms(case5, rng):
    forms = ("siv", "polar", "mixed", "matrix")
    built = {form: build(form, case5) for form in ("voltage_only",) + forms}
    bus_ids = tuple(b.id for b in case5.buses)
    for _ in range(50):
        voltage = VoltagePoint.from_complex(bus_ids, random_voltages(case5, rng))
        reference = evaluate(built["voltage_only"], lift_point(case5, voltage, form="voltage_only"))
        expected = {(r.tag, r.key, r.kind): r.residual for r in reference.constraints}
        for form in forms:
            report = evaluate(built[form], lift_point(case5, voltage, form=form))
            assert report.objective == pytest.approx(reference.objective, rel=1e-9)
            shared = [r for r in report.constraints if (r.tag, r.key, r.kind) in expected]
            assert {r.tag for r in shared} >= {"powerflowR", "powerflowC", "genpowerboundR", "genpowerboundC"}
            for r in shared:
                value = expected[(r.tag, r.key, r.kind)]
                assert r.residual == pytest.approx(value, abs=1e-9 * max(1.0, abs(value))), (form, r.tag, r.key)


def test_exact_forms_reject_a_non_rank_one_lift(three_bus, rng):
    voltage = VoltagePoint.from_complex((1, 2, 3), random_voltages(three_bus, rng))
    point = lift_point(three_bus, voltage, form="matrix")
    point["W[1,2]"] += 0.1
    report = evaluate(build("matrix", three_bus), point)

    assert "matrix" in EXACT
    assert report.residual("rank1", (1, 2)).violation == pytest.approx(0.1)


def test_trace_identities(three_bus, rng):
    matrices = constraint_matrices(three_bus)
    topo = topology(three_bus)
    for _ in range(20):
        voltages = random_voltages(three_bus, rng, spread=0.5)
        w = lifted_matrix(voltages)
        flows = recover_injections(three_bus, VoltagePoint.from_complex((1, 2, 3), voltages)).flows
        for arc in topo.arcs:
            assert trace_value(matrices.arc_real[arc.key], w) == pytest.approx(flows[arc.key].real, abs=1e-12)
            assert trace_value(matrices.arc_imag[arc.key], w) == pytest.approx(flows[arc.key].imag, abs=1e-12)
        for b in topo.bus_ids:
            k = topo.position[b]
            assert trace_value(matrices.theta[(b, b)], w) == pytest.approx(abs(voltages[k]) ** 2, abs=1e-12)
        for arc in topo.l0:
            product = voltages[topo.position[arc.bus]] * np.conj(voltages[topo.position[arc.other]])
            assert trace_value(matrices.theta_hat[(arc.bus, arc.other)], w) == pytest.approx(product.imag, abs=1e-12)


def test_current_bounds_use_squared_limit(two_bus):
    f = build("sdp_v", two_bus)
    bound = f.constraints_tagged("currentbound1X")[0]

    assert bound.rhs == pytest.approx((2.0 / 0.9) ** 2)
    assert math.isfinite(bound.rhs)
