"""Interchange formats for formulations."""

from .json_model import JsonModel, export_json, import_json  # noqa: F401
from .sdpa import export_sdpa  # noqa: F401
