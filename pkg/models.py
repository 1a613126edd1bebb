# models.py

from sqlalchemy import Column, String, Integer, DateTime, JSON, ForeignKey, Text
from sqlalchemy.orm import declarative_base, relationship
from datetime import datetime

Base = declarative_base()

class ResearchRun(Base):
    __tablename__ = 'research_runs'

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, index=True)            # screen / solve / backtest / simulate / report
    status = Column(String, default="running")      # running / finished / failed
    config = Column(JSON, default={})
    summary = Column(JSON, nullable=True)
    error = Column(Text, nullable=True)
    exit_code = Column(Integer, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)
    updated_at = Column(DateTime, default=datetime.utcnow, onupdate=datetime.utcnow)

    windows = relationship(
        "WindowRecord",
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="WindowRecord.index"
    )

class WindowRecord(Base):
    __tablename__ = 'window_records'

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey('research_runs.id'), index=True)
    index = Column(Integer)
    train_start = Column(String)
    train_end = Column(String)
    test_end = Column(String)
    status = Column(String)
    tickers = Column(JSON, default=[])
    delta_hat = Column(JSON, default=[])
    diagnostics = Column(JSON, default={})

    run = relationship("ResearchRun", back_populates="windows")
