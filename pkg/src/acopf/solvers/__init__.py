"""Desk-scale solvers: a relaxation lower bound, a local upper bound and their gap."""

from .barrier import solve_jabr_barrier  # noqa: F401
from .gap import bound_report, optimality_gap  # noqa: F401
from .local import solve_polar_local  # noqa: F401
