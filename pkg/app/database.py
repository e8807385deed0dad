"""Engine and sessions for the experiment ledger (SQLite unless APP_DATABASE_URL says otherwise)."""

import os

from sqlmodel import Session, SQLModel, create_engine

# Registers ExperimentRecord with the metadata.
from app.models import ExperimentRecord  # noqa: F401

DATABASE_URL = os.environ.get("APP_DATABASE_URL", "sqlite:///experiments.db")
# sqlite only: allow sessions opened from worker threads
CONNECT_ARGS = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}
ENGINE = create_engine(DATABASE_URL, connect_args=CONNECT_ARGS)


def create_tables():
    SQLModel.metadata.create_all(ENGINE)


def get_session():
    return Session(ENGINE)


def reset_db():
    """Drop and recreate the ledger tables. Tests only."""
    SQLModel.metadata.drop_all(ENGINE)
    SQLModel.metadata.create_all(ENGINE)
