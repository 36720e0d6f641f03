# SPDX-License-Identifier: MIT
"""Shared modules used by the library, the CLI and the HTTP gateway."""

from .config import Settings, get_settings  # noqa: F401
from .schemas import Branch, Bus, BusType, Generator, Grid, SolveOptions, SolveResult, SolveStatus  # noqa: F401
