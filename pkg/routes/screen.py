# routes/screen.py

from fastapi import APIRouter, Depends, File, Form, UploadFile
from sqlalchemy.orm import Session

from database import get_db
from routes.common import parse_form_config, run_with_upload
from tools.pipeline import screen_tool

router = APIRouter(tags=["Screen"])

@router.post("/screen/")
async def screen(
    file: UploadFile = File(...),
    config: str = Form("{}"),
    db: Session = Depends(get_db)
):
    """
    Upload a long-format price CSV; returns the screening table, the selected universe and
    the assembled model parameters.
    """
    return await run_with_upload(db, "screen", screen_tool, file, {"config": parse_form_config(config)})
