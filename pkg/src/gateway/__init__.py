"""HTTP gateway exposing the acopf pipeline over REST."""

from .main import app  # noqa: F401
