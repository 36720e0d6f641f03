from __future__ import annotations

import asyncio
from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import APIRouter, Body, Depends, File, HTTPException, Query, UploadFile
from loguru import logger
from pydantic import BaseModel, Field

from acopf.builders import build
from acopf.case_io import parse_case_text
from acopf.export import JsonModel
from acopf.export.json_model import to_json_model
from acopf.formulation import check_point_names, evaluate
from acopf.network import validate_grid
from acopf.solvers import bound_report
from shared.config import Settings, get_settings
from shared.errors import AcopfError, CaseSemanticError, CaseSyntaxError, InvalidGrid, UnsupportedFeature
from shared.schemas import BoundsReport, GridRecord, ResidualReport, SolveOptions

from ..store import StoredGrid, grid_store

router = APIRouter(tags=["grids"])

ALLOWED_EXTENSIONS = {".dat", ".m"}


class CheckResponse(BaseModel):
    feasible: bool
    tol: float
    report: ResidualReport


class SolveRequest(BaseModel):
    lb: bool = True
    ub: bool = True
    seed: Optional[int] = None
    multistart: Optional[int] = Field(default=None, ge=1)
    tol: Optional[float] = Field(default=None, gt=0.0)


def get_config() -> Settings:
    return get_settings()


def _http_error(exc: AcopfError) -> HTTPException:
    if isinstance(exc, (CaseSyntaxError, CaseSemanticError, InvalidGrid)):
        return HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, UnsupportedFeature):
        # unknown formulation kind
        return HTTPException(status_code=404, detail=str(exc))
    return HTTPException(status_code=400, detail=str(exc))


async def _stored(grid_id: str) -> StoredGrid:
    stored = await grid_store.get(grid_id)
    if stored is None:
        raise HTTPException(status_code=404, detail="Grid not found")
    return stored


@router.get("/grids", response_model=List[GridRecord])
async def list_grids() -> List[GridRecord]:
    return await grid_store.list_records()


@router.get("/grids/{grid_id}", response_model=GridRecord)
async def get_grid(grid_id: str) -> GridRecord:
    return (await _stored(grid_id)).record


@router.post("/grids", response_model=GridRecord, status_code=201)
async def upload_grid(file: UploadFile = File(...), settings: Settings = Depends(get_config)) -> GridRecord:
    extension = Path(file.filename or "").suffix.lower()
    if extension not in ALLOWED_EXTENSIONS:
        raise HTTPException(status_code=400, detail="Only .dat or MATPOWER .m case files are supported")

    payload = await file.read()
    if len(payload) > settings.max_upload_bytes:
        raise HTTPException(status_code=413, detail="Case file too large")
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise HTTPException(status_code=400, detail="Case file is not UTF-8 text") from exc

    try:
        grid = await asyncio.to_thread(parse_case_text, text, extension)
    except AcopfError as exc:
        raise _http_error(exc) from exc
    validation = validate_grid(grid)
    record = await grid_store.add(file.filename, grid, validation)
    logger.info("Grid {} uploaded: {}", record.id, record.summary)
    return record


@router.get("/grids/{grid_id}/formulations/{form}", response_model=JsonModel)
async def get_formulation(grid_id: str, form: str) -> JsonModel:
    stored = await _stored(grid_id)
    try:
        f = await asyncio.to_thread(build, form, stored.grid)
    except AcopfError as exc:
        raise _http_error(exc) from exc
    return to_json_model(f)


@router.post("/grids/{grid_id}/check", response_model=CheckResponse)
async def check_point(
    grid_id: str,
    point: Dict[str, float] = Body(...),
    form: str = Query(...),
    tol: Optional[float] = Query(None, gt=0.0),
    settings: Settings = Depends(get_config),
) -> CheckResponse:
    stored = await _stored(grid_id)

    def run() -> ResidualReport:
        f = build(form, stored.grid)
        check_point_names(f, point)
        return evaluate(f, point)

    try:
        report = await asyncio.to_thread(run)
    except AcopfError as exc:
        raise _http_error(exc) from exc
    tol = tol if tol is not None else settings.tol_feas
    return CheckResponse(feasible=report.max_violation <= tol, tol=tol, report=report)


@router.post("/grids/{grid_id}/solve", response_model=BoundsReport)
async def solve_grid(grid_id: str, request: Optional[SolveRequest] = None) -> Any:
    stored = await _stored(grid_id)
    request = request or SolveRequest()
    if not (request.lb or request.ub):
        raise HTTPException(status_code=400, detail="Request at least one of lb or ub")
    opts = SolveOptions.from_settings(tol_feas=request.tol, rng_seed=request.seed, multistart_count=request.multistart)
    try:
        report = await asyncio.to_thread(bound_report, stored.grid, opts, request.lb, request.ub)
    except AcopfError as exc:
        raise _http_error(exc) from exc
    logger.info("Grid {} solved (gap {})", grid_id, report.gap)
    return report
