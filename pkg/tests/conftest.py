from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from acopf.case_io import load_case
from shared.schemas import Branch, Bus, BusType, Generator, Grid

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def case5_dat_path() -> Path:
    return FIXTURES / "case5.dat"


@pytest.fixture(scope="session")
def case5_m_path() -> Path:
    return FIXTURES / "case5.m"


@pytest.fixture(scope="session")
def case5_text(case5_dat_path: Path) -> str:
    return case5_dat_path.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def case5(case5_dat_path: Path) -> Grid:
    return load_case(case5_dat_path)


@pytest.fixture
def one_bus() -> Grid:
    """A single reference bus whose load one cheap generator must serve."""
    return Grid(
        buses=(Bus(id=1, bus_type=BusType.REFERENCE, demand_re=0.5, demand_im=0.1, v_min=0.9, v_max=1.1),),
        generators=(Generator(bus=1, p_min=0.0, p_max=1.0, q_min=-1.0, q_max=1.0, cost=(0.0, 10.0, 0.0)),),
    )


@pytest.fixture
def two_bus() -> Grid:
    return Grid(
        buses=(
            Bus(id=1, bus_type=BusType.REFERENCE, v_min=0.9, v_max=1.1),
            Bus(id=2, demand_re=0.4, demand_im=0.1, v_min=0.9, v_max=1.1),
        ),
        branches=(Branch(from_bus=1, to_bus=2, r=0.01, x=0.1, b_ch=0.02, s_max=2.0),),
        generators=(Generator(bus=1, p_min=0.0, p_max=2.0, q_min=-2.0, q_max=2.0, cost=(0.0, 20.0, 5.0)),),
    )


@pytest.fixture
def three_bus() -> Grid:
    """Meshed grid with a phase-shifting transformer, shunts, phase and flow limits.

    Every bus carries an unbounded generator so any voltage profile within
    the magnitude box has a matching dispatch.
    """
    buses = (
        Bus(id=1, bus_type=BusType.REFERENCE, demand_re=0.2, demand_im=0.05, v_min=0.9, v_max=1.1),
        Bus(id=2, demand_re=0.6, demand_im=0.2, v_min=0.9, v_max=1.1, shunt_re=0.01, shunt_im=0.05),
        Bus(id=3, bus_type=BusType.GENERATOR, demand_re=0.3, demand_im=-0.1, v_min=0.9, v_max=1.1),
    )
    branches = (
        Branch(from_bus=1, to_bus=2, r=0.01, x=0.08, b_ch=0.03, s_max=50.0, eta_min=-0.5, eta_max=0.5),
        Branch(from_bus=2, to_bus=3, r=0.02, x=0.10, b_ch=0.02, tau=1.05, nu=0.1, eta_min=-0.5, eta_max=0.5),
        Branch(from_bus=1, to_bus=3, r=0.015, x=0.09, s_max=50.0, eta_min=-0.5, eta_max=0.5),
    )
    generators = tuple(Generator(bus=b, cost=(1.0, 10.0 * b, 2.0)) for b in (1, 2, 3))
    return Grid(buses=buses, branches=branches, generators=generators)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_voltages(grid: Grid, rng: np.random.Generator, spread: float = 0.05) -> np.ndarray:
    """Magnitudes near 1 and small angles, with the reference bus on the positive real axis."""
    n = len(grid.buses)
    magnitudes = rng.uniform(0.95, 1.05, n)
    angles = rng.uniform(-spread, spread, n)
    for k, bus in enumerate(grid.buses):
        if bus.bus_type == BusType.REFERENCE:
            angles[k] = 0.0
    return magnitudes * np.exp(1j * angles)


def assert_close(a: float, b: float, tol: float = 1e-9) -> None:
    assert math.isclose(a, b, rel_tol=tol, abs_tol=tol), f"{a} != {b}"
