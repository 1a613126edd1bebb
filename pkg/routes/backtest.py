# routes/backtest.py

from fastapi import APIRouter, Depends, File, Form, UploadFile
from sqlalchemy.orm import Session

from database import get_db
from routes.common import parse_form_config, run_with_upload
from tools.pipeline import backtest_tool

router = APIRouter(tags=["Backtest"])

@router.post("/backtest/")
async def backtest(
    file: UploadFile = File(...),
    config: str = Form("{}"),
    sweep: bool = Form(False),
    db: Session = Depends(get_db)
):
    inputs = {"config": parse_form_config(config), "sweep": sweep}
    return await run_with_upload(db, "backtest", backtest_tool, file, inputs)
