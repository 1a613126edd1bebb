# run_manager.py

from typing import Any, Dict, List, Optional

from sqlalchemy.orm import Session

from models import ResearchRun, WindowRecord
from tools.reporting import to_plain

# -------------------------------------------------------------------------------------------------
# 1) create_run
# -------------------------------------------------------------------------------------------------
def create_run(db: Session, command: str, config: Optional[Dict[str, Any]] = None) -> ResearchRun:
    run = ResearchRun(command=command, status="running", config=to_plain(config or {}))
    db.add(run)
    db.commit()
    db.refresh(run)
    return run

# -------------------------------------------------------------------------------------------------
# 2) finish_run
# -------------------------------------------------------------------------------------------------
def finish_run(db: Session, run_id: int, summary: Dict[str, Any]) -> ResearchRun:
    run = get_run(db, run_id)
    run.status = "finished"
    run.exit_code = 0
    run.summary = to_plain(summary)
    db.commit()
    db.refresh(run)
    return run

# -------------------------------------------------------------------------------------------------
# 3) fail_run
# -------------------------------------------------------------------------------------------------
def fail_run(db: Session, run_id: int, error: str, exit_code: int = 1) -> ResearchRun:
    run = get_run(db, run_id)
    run.status = "failed"
    run.error = error
    run.exit_code = exit_code
    db.commit()
    db.refresh(run)
    return run

# -------------------------------------------------------------------------------------------------
# 4) log_window
# -------------------------------------------------------------------------------------------------
def log_window(db: Session, run_id: int, entry: Dict[str, Any]) -> WindowRecord:
    """Stores one backtest window-log entry; keys outside the columns go to diagnostics."""
    columns = {"index", "train_start", "train_end", "test_end", "status", "tickers", "delta_hat"}
    record = WindowRecord(
        run_id=run_id,
        index=entry.get("index"),
        train_start=entry.get("train_start"),
        train_end=entry.get("train_end"),
        test_end=entry.get("test_end"),
        status=entry.get("status"),
        tickers=to_plain(entry.get("tickers", [])),
        delta_hat=to_plain(entry.get("delta_hat", [])),
        diagnostics=to_plain({k: v for k, v in entry.items() if k not in columns}),
    )
    db.add(record)
    db.commit()
    db.refresh(record)
    return record

# -------------------------------------------------------------------------------------------------
# 5) get_run / list_runs
# -------------------------------------------------------------------------------------------------
def get_run(db: Session, run_id: int) -> Optional[ResearchRun]:
    return db.query(ResearchRun).filter(ResearchRun.id == run_id).first()

def list_runs(db: Session, command: Optional[str] = None, limit: int = 100) -> List[ResearchRun]:
    query = db.query(ResearchRun)
    if command:
        query = query.filter(ResearchRun.command == command)
    return query.order_by(ResearchRun.id.desc()).limit(limit).all()

# -------------------------------------------------------------------------------------------------
# 6) record_result
# -------------------------------------------------------------------------------------------------
def record_result(db: Session, run_id: int, result: Dict[str, Any]) -> ResearchRun:
    """Window log entries become WindowRecords; the rest of the result (without bulky tables) is the summary."""
    for entry in result.get("windows") or []:
        log_window(db, run_id, entry)
    summary = {k: v for k, v in result.items() if k not in ("windows", "table", "prices_csv")}
    return finish_run(db, run_id, summary)
