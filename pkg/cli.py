# cli.py

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from schemas.config import BacktestConfig, ScreenConfig, SolveConfig, SynthConfig, load_config
from tool_registry import tool_registry
from tools.errors import StatArbError

logger = logging.getLogger("statarb")

CONFIG_MODELS = {
    "screen": ScreenConfig,
    "solve": SolveConfig,
    "backtest": BacktestConfig,
    "simulate": SynthConfig,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config_help(model) -> str:
    lines = [f"{model.__name__} keys (JSON object in --config):"]
    for name, info in model.model_fields.items():
        default = info.get_default(call_default_factory=True)
        if hasattr(default, "model_dump"):
            default = default.model_dump()
        desc = f": {info.description}" if info.description else ""
        lines.append(f"  {name} (default {default!r}){desc}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statarb", description="Cointegration statistical-arbitrage research pipeline.")
    parser.add_argument("--log-level", default=os.getenv("STATARB_LOG_LEVEL", "INFO"),
                        help="logging level (default: $STATARB_LOG_LEVEL or INFO)")
    parser.add_argument("--jobs", type=int, default=int(os.getenv("STATARB_JOBS", "1")),
                        help="worker threads for windows and screening (default: $STATARB_JOBS or 1)")
    parser.add_argument("--record", action="store_true", help="persist the run in DATABASE_URL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("screen", help="screen a price panel for cointegrated stocks",
                       epilog=_config_help(ScreenConfig), formatter_class=fmt)
    p.add_argument("--prices", required=True, help="long-format CSV: date,ticker,adj_close")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default="screen_out", help="output directory (default: screen_out)")

    p = sub.add_parser("solve", help="solve the steady-state HJB system for a parameter file",
                       epilog=_config_help(SolveConfig), formatter_class=fmt)
    p.add_argument("--params", required=True, help="params.json written by screen")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default="solve_out", help="output directory (default: solve_out)")

    p = sub.add_parser("backtest", help="sliding-window backtest of the four policies",
                       epilog=_config_help(BacktestConfig), formatter_class=fmt)
    p.add_argument("--prices", required=True, help="long-format CSV: date,ticker,adj_close")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default="backtest_out", help="output directory (default: backtest_out)")
    p.add_argument("--sweep", action="store_true",
                   help="run the train 190..250 x test 10..16 grid (or train_grid/test_grid)")

    p = sub.add_parser("simulate", help="simulate a cointegrated market with known parameters",
                       epilog=_config_help(SynthConfig), formatter_class=fmt)
    p.add_argument("--config", help="JSON config file (defaults give d=5, m=2)")
    p.add_argument("--out", default="simulate_out", help="output directory (default: simulate_out)")

    p = sub.add_parser("report", help="recompute statistics from a backtest output directory")
    p.add_argument("--run-dir", required=True, help="directory holding wealth_*.csv")
    p.add_argument("--out", help="write report.csv here (default: --run-dir)")
    p.add_argument("--subperiods", type=int, default=0, help="equal sub-periods to report (default: 0)")
    p.add_argument("--dt", type=float, default=1.0 / 252, help="period length in years (default: 1/252)")
    p.add_argument("--r", type=float, default=0.01, help="risk-free rate (default: 0.01)")
    return parser


def _config(args) -> Dict[str, Any]:
    if not args.config:
        return {}
    return load_config(CONFIG_MODELS[args.command], args.config).model_dump()


def _inputs(args) -> Dict[str, Any]:
    if args.command == "report":
        return {"run_dir": args.run_dir, "out": args.out or args.run_dir, "subperiods": args.subperiods,
                "dt": args.dt, "r": args.r}
    inputs: Dict[str, Any] = {"config": _config(args), "out": args.out,
                              "jobs": args.jobs}
    if args.command in ("screen", "backtest"):
        inputs["prices"] = args.prices
    if args.command == "solve":
        inputs["params"] = args.params
    if args.command == "backtest":
        inputs["sweep"] = args.sweep
    return inputs


def _summary(command: str, result: Dict[str, Any]) -> List[str]:
    if command == "screen":
        return [f"selected: {' '.join(result['selected']) or '(none)'}"]
    if command == "solve":
        return [f"{v}: growth_rate={s['growth_rate']:.6g}" for v, s in result["solutions"].items()]
    if command == "backtest":
        return [f"{row['policy']} train={row['train']} test={row['test']} profit_pct={row['profit_pct']:.6g}"
                for row in result["stats"]]
    return [f"wrote {f}" for f in result.get("files", [])]


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr)

    db, run = None, None
    try:
        inputs = _inputs(args)
        if args.record:
            import models
            import run_manager
            from database import SessionLocal, engine

            models.Base.metadata.create_all(bind=engine)
            db = SessionLocal()
            run = run_manager.create_run(db, args.command, inputs.get("config"))

        result = tool_registry.call(args.command, inputs)
    except StatArbError as e:
        logger.error(f"{args.command} failed: {e}")
        if run is not None:
            run_manager.fail_run(db, run.id, str(e), e.exit_code)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    else:
        if run is not None:
            run_manager.record_result(db, run.id, result)
            logger.info(f"Recorded run {run.id}")
        for line in _summary(args.command, result):
            print(line)
        return 0
    finally:
        if db is not None:
            db.close()


if __name__ == "__main__":
    sys.exit(main())
