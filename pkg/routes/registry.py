# routes/registry.py

from typing import List

from fastapi import APIRouter

from schemas.tools import ToolDefinition
from tool_registry import tool_registry

router = APIRouter(prefix="/tools", tags=["Tools"])

@router.get("/", response_model=List[ToolDefinition])
def list_tools():
    return [
        ToolDefinition(name=name, description=info["description"], input_schema=info["input_schema"])
        for name, info in tool_registry.list_tools().items()
    ]
