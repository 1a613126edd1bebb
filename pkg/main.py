# main.py

import logging
import os

from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from database import engine
import models

# Routers
from routes import backtest, registry, runs, screen, simulate, solve

# --- Logging Setup ---
logging.basicConfig(level=os.getenv("STATARB_LOG_LEVEL", "INFO").upper())
logger = logging.getLogger(__name__)

# --- Environment and DB ---
load_dotenv()
models.Base.metadata.create_all(bind=engine)

# --- FastAPI App ---
app = FastAPI(title="statarb")

# --- Middleware and Routers ---
origins = [o.strip() for o in os.getenv("STATARB_CORS_ORIGINS", "http://localhost:3000").split(",") if o.strip()]
app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(screen.router)
app.include_router(solve.router)
app.include_router(backtest.router)
app.include_router(simulate.router)
app.include_router(runs.router)
app.include_router(registry.router)


@app.get("/health")
def health():
    return {"status": "ok"}
