# schemas/tools.py

from pydantic import BaseModel
from typing import Dict, Any


class ToolDefinition(BaseModel):
    name: str
    description: str
    input_schema: Dict[str, Any]
