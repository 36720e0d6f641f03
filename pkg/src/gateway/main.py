from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from loguru import logger

from shared import get_settings
from shared.logging import configure_logging

from .routes import grids

settings = get_settings()

app = FastAPI(
    title="ACOPF Gateway",
    version="0.1.0",
    description="HTTP access to case parsing, formulation building, point checking and bound computation.",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_allow_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(grids.router, prefix=settings.api_prefix)


@app.on_event("startup")
async def startup_event() -> None:
    configure_logging(settings.log)
    logger.info("Gateway starting up in environment={}", settings.environment)


@app.get("/healthz", tags=["health"])
async def health_check() -> dict[str, str]:
    return {"status": "ok"}
