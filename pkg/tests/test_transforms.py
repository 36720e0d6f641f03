import math

import numpy as np
import pytest
from conftest import random_voltages
from pydantic import ValidationError

from acopf.transforms import (
    PsdTarget,
    VoltagePoint,
    cartesian_to_polar,
    dispatch_generation,
    lift_point,
    lift_to_jabr,
    lift_to_psd,
    polar_to_cartesian,
    recover_injections,
)
from shared.errors import UnsupportedFeature


def test_polar_round_trip(three_bus, rng):
    voltages = random_voltages(three_bus, rng, spread=3.0)
    point = VoltagePoint.from_complex((1, 2, 3), voltages)
    polar = cartesian_to_polar(point)

    assert polar.representation == "polar"
    assert np.allclose(polar_to_cartesian(polar).as_complex(), voltages, atol=1e-12)
    assert np.allclose(polar.first, np.abs(voltages))


def test_zero_voltage_has_zero_angle():
    polar = cartesian_to_polar(VoltagePoint.from_complex((1,), np.array([0j])))

    assert polar.first == (0.0,)
    assert polar.second == (0.0,)


def test_voltage_point_validation():
    with pytest.raises(ValidationError):
        VoltagePoint(representation="polar", bus_ids=(1,), first=(-1.0,), second=(0.0,))
    with pytest.raises(ValidationError):
        VoltagePoint(representation="polar", bus_ids=(1,), first=(1.0,), second=(4.0,))
    with pytest.raises(ValidationError):
        VoltagePoint(representation="cartesian", bus_ids=(1, 2), first=(1.0,), second=(0.0,))


def test_jabr_lift_satisfies_the_rotated_cone(three_bus, rng):
    for _ in range(10):
        point = VoltagePoint.from_complex((1, 2, 3), random_voltages(three_bus, rng, spread=1.0))
        jabr = lift_to_jabr(point, three_bus)
        for (b, a), c in jabr.re.items():
            s = jabr.im[(b, a)]
            assert c * c + s * s == pytest.approx(jabr.diag[b] * jabr.diag[a], abs=1e-12)


@pytest.mark.parametrize("target", list(PsdTarget))
def test_psd_lift_is_rank_one(three_bus, rng, target):
    for _ in range(100):
        voltages = random_voltages(three_bus, rng, spread=1.0)
        matrix = lift_to_psd(VoltagePoint.from_complex((1, 2, 3), voltages), target)
        eigenvalues = np.linalg.eigvalsh(matrix)

        assert eigenvalues[0] >= -1e-12
        assert eigenvalues[-2] <= 1e-10 * np.abs(eigenvalues).max()


def test_flat_start_generation(case5):
    injections = recover_injections(case5, VoltagePoint.flat(case5))

    for bus in case5.buses:
        charging = sum(
            br.b_ch / 2 for br in case5.branches if bus.id in (br.from_bus, br.to_bus)
        )
        assert injections.generation[bus.id] == pytest.approx(bus.demand - 1j * charging, abs=1e-9)


def test_dispatch_goes_to_first_generator(case5):
    injections = recover_injections(case5, VoltagePoint.flat(case5))
    dispatch = dispatch_generation(case5, injections)

    assert dispatch[(1, 1)] == injections.generation[1]
    assert dispatch[(1, 2)] == 0j
    assert (2, 1) not in dispatch


def test_lift_point_names_only_the_form_variables(case5):
    point = lift_point(case5, VoltagePoint.flat(case5), form="jabr")

    assert "c[1]" in point and "c[1,2]" in point and "s[1,2]" in point
    assert not any(name.startswith(("V.", "W[", "X.")) for name in point)
    assert point["c[1,2]"] == pytest.approx(1.0)


def test_lift_point_uses_given_dispatch(case5):
    dispatch = {(1, 1): 0.1 + 0.2j, (1, 2): 0j, (3, 1): 1.0, (4, 1): 0j, (5, 1): 2.0 - 0.5j}
    point = lift_point(case5, VoltagePoint.flat(case5), dispatch, form="polar")

    assert point["Sg.re[5,1]"] == 2.0
    assert point["Sg.im[5,1]"] == -0.5
    assert math.isclose(point["v[3]"], 1.0)


def test_lift_point_unknown_form(case5):
    with pytest.raises(UnsupportedFeature):
        lift_point(case5, VoltagePoint.flat(case5), form="dc")
