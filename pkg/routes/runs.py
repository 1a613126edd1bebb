# routes/runs.py

from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, Query
from sqlalchemy.orm import Session

import run_manager
from database import get_db
from schemas.runs import RunDetailResponse, RunResponse

router = APIRouter(prefix="/runs", tags=["Runs"])

@router.get("/", response_model=List[RunResponse])
def get_runs(
    command: Optional[str] = Query(None),
    limit: int = 100,
    db: Session = Depends(get_db)
):
    """
    GET /runs/?command=backtest
    Returns up to `limit` most recent runs (newest first).
    """
    return run_manager.list_runs(db, command, limit)

@router.get("/{run_id}", response_model=RunDetailResponse)
def get_run(run_id: int, db: Session = Depends(get_db)):
    run = run_manager.get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="No run found for this run_id")
    return run
