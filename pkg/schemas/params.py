# schemas/params.py

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class ModelParamsDocument(BaseModel):
    """JSON form of a ModelParams; derived matrices are recomputed on load."""
    mu: List[float]
    theta: List[float]
    delta: List[float]
    sigma0: List[List[float]]
    sigma1: List[List[float]]
    cross: List[List[float]]
    r: float = 0.01
    gamma: float = -70.0
    eta: Optional[List[float]] = None
    tickers: List[str] = []

    class Config:
        extra = "allow"


class SolveRequest(BaseModel):
    params: ModelParamsDocument
    config: Dict[str, Any] = Field(default_factory=dict)


class SimulateRequest(BaseModel):
    config: Dict[str, Any] = Field(default_factory=dict)
