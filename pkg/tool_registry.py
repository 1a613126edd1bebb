# tool_registry.py

import logging
from typing import Any, Callable, Dict

from tools.pipeline import backtest_tool, report_tool, screen_tool, simulate_tool, solve_tool

logger = logging.getLogger(__name__)

# A type alias: a "tool" is any function that takes a dict and returns a dict.
ToolFn = Callable[[Dict[str, Any]], Dict[str, Any]]


class ToolRegistry:
    def __init__(self):
        self._registry: Dict[str, Dict[str, Any]] = {}

    def register(self, name: str, fn: ToolFn, description: str, input_schema: Dict[str, Any]):
        if name in self._registry:
            raise KeyError(f"Tool '{name}' is already registered")
        self._registry[name] = {
            "fn": fn,
            "description": description,
            "input_schema": input_schema
        }

    def call(self, name: str, inputs: Dict[str, Any]) -> Dict[str, Any]:
        entry = self._registry.get(name)
        if not entry:
            raise KeyError(f"Tool '{name}' not registered")
        return entry["fn"](inputs)

    def list_tools(self) -> Dict[str, Dict[str, Any]]:
        return {
            name: {
                "description": meta["description"],
                "input_schema": meta["input_schema"]
            }
            for name, meta in self._registry.items()
        }

# ─── Instantiate & register ────────────────────────────────────────────────────

tool_registry = ToolRegistry()

tool_registry.register(
    name="screen",
    fn=screen_tool,
    description="Build eigenportfolio factors, test every stock's spread for cointegration and select the universe.",
    input_schema={
        "prices": "path to a long-format CSV (date,ticker,adj_close)",
        "config": "ScreenConfig object",
        "out":    "output directory (optional)",
        "jobs":   "worker threads (optional)"
    }
)

tool_registry.register(
    name="solve",
    fn=solve_tool,
    description="Solve the steady-state Riccati system for the unconstrained and market-neutral variants.",
    input_schema={
        "params": "ModelParams document or path to params.json",
        "config": "SolveConfig object",
        "out":    "output directory (optional)"
    }
)

tool_registry.register(
    name="backtest",
    fn=backtest_tool,
    description="Run the sliding-window train/test protocol and compute performance statistics.",
    input_schema={
        "prices": "path to a long-format CSV",
        "config": "BacktestConfig object",
        "out":    "output directory (optional)",
        "sweep":  "run the train/test grid (bool)",
        "jobs":   "worker threads (optional)"
    }
)

tool_registry.register(
    name="simulate",
    fn=simulate_tool,
    description="Simulate a cointegrated market with known parameters; emits prices and ground truth.",
    input_schema={
        "config": "SynthConfig object",
        "out":    "output directory (optional)",
        "inline": "return the price CSV text (bool)"
    }
)

tool_registry.register(
    name="report",
    fn=report_tool,
    description="Recompute performance statistics from the wealth CSVs of a backtest directory.",
    input_schema={
        "run_dir":    "backtest output directory",
        "dt":         "period length in years",
        "r":          "risk-free rate",
        "subperiods": "number of equal sub-periods (optional)",
        "out":        "output directory (optional)"
    }
)

logger.debug(f"Registered tools: {list(tool_registry.list_tools().keys())}")
