# schemas/runs.py

from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel


class WindowResponse(BaseModel):
    index: int
    train_start: Optional[str] = None
    train_end: Optional[str] = None
    test_end: Optional[str] = None
    status: Optional[str] = None
    tickers: List[str] = []
    delta_hat: List[Optional[float]] = []
    diagnostics: Dict[str, Any] = {}

    class Config:
        from_attributes = True


class RunResponse(BaseModel):
    id: int
    command: str
    status: str
    config: Dict[str, Any] = {}
    summary: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    exit_code: Optional[int] = None
    created_at: datetime
    updated_at: Optional[datetime] = None

    class Config:
        from_attributes = True


class RunDetailResponse(RunResponse):
    windows: List[WindowResponse] = []
