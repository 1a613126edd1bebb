# routes/simulate.py

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from database import get_db
from routes.common import run_recorded
from schemas.params import SimulateRequest
from tools.pipeline import simulate_tool

router = APIRouter(tags=["Simulate"])

@router.post("/simulate/")
async def simulate(payload: SimulateRequest, db: Session = Depends(get_db)):
    return await run_recorded(db, "simulate", simulate_tool, {"config": payload.config, "inline": True})
