"""Route modules for the FastAPI gateway."""
