# routes/solve.py

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from database import get_db
from routes.common import run_recorded
from schemas.params import SolveRequest
from tools.pipeline import solve_tool

router = APIRouter(tags=["Solve"])

@router.post("/solve/")
async def solve(payload: SolveRequest, db: Session = Depends(get_db)):
    """ModelParams JSON in, steady-state solution of each requested variant out."""
    inputs = {"params": payload.params.model_dump(), "config": payload.config}
    return await run_recorded(db, "solve", solve_tool, inputs)
