"""Formulation builders, one per model of the optimal power flow problem."""

from typing import Callable, Dict

from shared.errors import UnsupportedFeature
from shared.schemas import Grid

from ..formulation import Formulation
from .jabr import build_jabr_socp, build_mixed  # noqa: F401
from .matrices import ConstraintMatrices, build_matrix_form, build_sdp_real, constraint_matrices  # noqa: F401
from .polar import build_polar  # noqa: F401
from .relaxations import ComplexVariant, build_qc_lifted, build_sdp_complex, build_socp_xspace  # noqa: F401
from .siv import build_siv_cartesian  # noqa: F401
from .voltage import BoundMode, build_voltage_only  # noqa: F401

BUILDERS: Dict[str, Callable[[Grid], Formulation]] = {
    "siv": build_siv_cartesian,
    "voltage_only": build_voltage_only,
    "polar": build_polar,
    "jabr": build_jabr_socp,
    "mixed": build_mixed,
    "matrix": build_matrix_form,
    "sdp_real": build_sdp_real,
    "sdp_v": lambda grid: build_sdp_complex(grid, ComplexVariant.V_SDP),
    "sdp_x": lambda grid: build_sdp_complex(grid, ComplexVariant.X_SDP),
    "socp_x": build_socp_xspace,
    "qc": build_qc_lifted,
}

# exact models, as opposed to relaxations
EXACT = ("siv", "voltage_only", "polar", "mixed", "matrix")


def build(form: str, grid: Grid) -> Formulation:
    try:
        builder = BUILDERS[form]
    except KeyError:
        raise UnsupportedFeature(f"unknown formulation '{form}', expected one of {', '.join(BUILDERS)}") from None
    return builder(grid)
