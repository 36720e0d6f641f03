"""Case file readers and writers."""

from pathlib import Path

from shared.errors import UnsupportedFeature
from shared.schemas import Grid

from .dat import DatDocument, parse_dat, write_dat  # noqa: F401
from .matpower import MatpowerCase, parse_matpower  # noqa: F401


def load_case(path: str | Path) -> Grid:
    """Read a case file, picking the format from the suffix (.dat or .m)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_case_text(text, path.suffix)


def parse_case_text(text: str, suffix: str) -> Grid:
    suffix = suffix.lower()
    if suffix == ".dat":
        return parse_dat(text)
    if suffix == ".m":
        return parse_matpower(text)
    raise UnsupportedFeature(f"unknown case file extension '{suffix}' (expected .dat or .m)")
