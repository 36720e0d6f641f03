import cmath

import numpy as np
import pytest

from acopf.network import branch_admittance, branch_currents, network_admittance, require_valid, topology, validate_grid
from shared.errors import InvalidGrid, ZeroImpedance
from shared.schemas import Branch, Bus, BusType, Generator, Grid


def test_case5_branch_admittance(case5):
    branch = next(br for br in case5.branches if br.key == (1, 2, 1))
    adm = branch_admittance(branch)

    assert adm.yff == pytest.approx(3.5235 - 35.2313j, abs=1e-3)
    assert adm.yft == pytest.approx(-3.5235 + 35.2349j, abs=1e-3)
    assert adm.ytf == adm.yft
    assert adm.ytt == adm.yff


def test_transformer_ratio_scales_from_side_only():
    adm = branch_admittance(Branch(from_bus=1, to_bus=2, r=1.0, x=0.0, tau=2.0))

    assert adm.yff == pytest.approx(0.25)
    assert adm.yft == pytest.approx(-0.5)
    assert adm.ytf == pytest.approx(-0.5)
    assert adm.ytt == pytest.approx(1.0)


def test_phase_shift_makes_matrix_asymmetric():
    adm = branch_admittance(Branch(from_bus=1, to_bus=2, r=0.01, x=0.1, nu=0.2))
    series = 1.0 / complex(0.01, 0.1)

    assert adm.yft == pytest.approx(-series * cmath.exp(1j * 0.2))
    assert adm.ytf == pytest.approx(-series * cmath.exp(-1j * 0.2))


def test_zero_impedance_rejected():
    with pytest.raises(ZeroImpedance):
        branch_admittance(Branch(from_bus=1, to_bus=2))


def test_dc_voltages_carry_no_series_current():
    branch = Branch(from_bus=1, to_bus=2, r=0.02, x=0.2, b_ch=0.0)
    i_from, i_to = branch_currents(branch_admittance(branch), 1.03 + 0.1j, 1.03 + 0.1j)

    assert abs(i_from) < 1e-12
    assert abs(i_to) < 1e-12


def _random_branch(rng, **fixed) -> Branch:
    fields = dict(
        r=float(rng.uniform(0.001, 0.1)),
        x=float(rng.uniform(0.01, 0.5)),
        b_ch=float(rng.uniform(0.0, 0.1)),
        tau=float(rng.uniform(0.9, 1.1)),
        nu=float(rng.uniform(-0.3, 0.3)),
    )
    fields.update(fixed)
    return Branch(from_bus=1, to_bus=2, **fields)


def _random_voltage(rng) -> complex:
    return complex(rng.uniform(0.9, 1.1) * cmath.exp(1j * rng.uniform(-0.5, 0.5)))


def test_plain_lines_conserve_current(rng):
    for _ in range(100):
        branch = _random_branch(rng, b_ch=0.0, tau=1.0, nu=0.0)
        i_from, i_to = branch_currents(branch_admittance(branch), _random_voltage(rng), _random_voltage(rng))

        assert abs(i_from + i_to) <= 1e-12 * max(1.0, abs(i_from))


def test_admittance_matches_transformer_model(rng):
    for _ in range(200):
        branch = _random_branch(rng)
        adm = branch_admittance(branch)
        y = 1.0 / complex(branch.r, branch.x)
        shunt = 0.5j * branch.b_ch
        ratio = branch.tau * cmath.exp(1j * branch.nu)

        assert adm.yff == pytest.approx((y + shunt) / abs(ratio) ** 2, rel=1e-12)
        assert adm.yft == pytest.approx(-y / ratio.conjugate(), rel=1e-12)
        assert adm.ytf == pytest.approx(-y / ratio, rel=1e-12)
        assert adm.ytt == pytest.approx(y + shunt, rel=1e-12)


def test_case5_topology(case5):
    topo = topology(case5)

    assert topo.reference == 4
    assert len(topo.l0) == 6
    assert len(topo.l1) == 6
    assert {arc.key for arc in topo.l1} >= {(2, 1, 1), (5, 4, 1)}
    assert [g.index for g in topo.generators[1]] == [1, 2]
    assert topo.generators[2] == ()
    assert topo.pair_orientation(2, 1) == ((1, 2), -1.0)


def test_network_admittance_matches_branch_entries(case5):
    ybus = network_admittance(case5).toarray()
    topo = topology(case5)
    adm = branch_admittance(next(br for br in case5.branches if br.key == (4, 5, 1)))

    assert ybus.shape == (5, 5)
    assert ybus[topo.position[4], topo.position[5]] == pytest.approx(adm.yft)
    # every row of a shunt-free, uncompensated grid sums to the charging terms only
    assert np.allclose(ybus.sum(axis=1).real, 0.0, atol=1e-9)


def test_case5_validates_clean(case5):
    assert validate_grid(case5).violations == []


def test_validation_collects_every_problem():
    grid = Grid(
        buses=(Bus(id=1, v_min=1.2, v_max=1.0), Bus(id=2)),
        branches=(
            Branch(from_bus=1, to_bus=3, r=0.1, x=0.1),
            Branch(from_bus=2, to_bus=2, r=0.1, x=0.1),
        ),
        generators=(Generator(bus=7),),
    )
    codes = {v.code for v in validate_grid(grid).violations}

    assert {"missing_reference", "voltage_bounds", "dangling_endpoint", "self_loop", "dangling_generator"} <= codes


def test_require_valid_raises_with_report():
    grid = Grid(buses=(Bus(id=1, bus_type=BusType.REFERENCE), Bus(id=2, bus_type=BusType.REFERENCE)))

    with pytest.raises(InvalidGrid) as info:
        require_valid(grid)
    assert info.value.report.violations[0].code == "multiple_reference"
