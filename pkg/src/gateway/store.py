import asyncio
from dataclasses import dataclass
from typing import Dict, List
from uuid import uuid4

from loguru import logger

from shared.schemas import Grid, GridRecord, ValidationReport


@dataclass(frozen=True)
class StoredGrid:
    record: GridRecord
    grid: Grid


class GridStore:
    """Minimal in-memory repository of uploaded grids. Contents are lost on restart."""

    def __init__(self) -> None:
        self._grids: Dict[str, StoredGrid] = {}
        self._lock = asyncio.Lock()

    async def add(self, filename: str, grid: Grid, validation: ValidationReport) -> GridRecord:
        async with self._lock:
            record = GridRecord(id=uuid4().hex, filename=filename, summary=grid.summary(), validation=validation)
            self._grids[record.id] = StoredGrid(record=record, grid=grid)
            logger.debug("Stored grid {} from {}", record.id, filename)
            return record

    async def list_records(self) -> List[GridRecord]:
        async with self._lock:
            return [stored.record for stored in self._grids.values()]

    async def get(self, grid_id: str) -> StoredGrid | None:
        async with self._lock:
            return self._grids.get(grid_id)

    async def clear(self) -> None:
        async with self._lock:
            self._grids.clear()


grid_store = GridStore()
