from datetime import datetime
import logging
import os
from pathlib import Path

import pandas as pd
import yaml

from sqlalchemy import create_engine
from sqlalchemy import Column, Integer, String, Text, DateTime, ForeignKey, Index
from sqlalchemy.orm import relationship, sessionmaker
from sqlalchemy.ext.declarative import declarative_base

__DB_VERSION__ = 1
__DEFAULT_DB__ = "triphoton_runs.db"

Base = declarative_base()


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)

    #: Hash of the resolved configuration
    run_id = Column(String, nullable=False, unique=True, index=True)
    code_version = Column(String)
    #: 'lab' or 'rotating'
    frame = Column(String, index=True)
    #: truncations as 'trunc0,trunc1,trunc2'
    truncations = Column(String)
    #: 'ok' or 'failed'
    status = Column(String, index=True)
    started = Column(DateTime)
    finished = Column(DateTime)
    #: Output directory holding the manifest
    out_dir = Column(String)
    #: Resolved configuration as YAML
    config = Column(Text)
    error = Column(Text)

    outputs = relationship("OutputFile", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return "<Run('{e.run_id}', {e.frame} frame, {e.status}, {} files)>".format(
            len(self.outputs), e=self
        )


class OutputFile(Base):
    __tablename__ = "outputs"
    __table_args__ = (Index("ix_outputs_run_path", "run_pk", "path", unique=True),)

    id = Column(Integer, primary_key=True)

    path = Column(String, nullable=False)
    #: observables, reduced_state, photon_distribution, wigner, netcdf
    kind = Column(String, index=True)
    run_pk = Column(Integer, ForeignKey("runs.id"), nullable=False, index=True)
    run = relationship("Run", back_populates="outputs")

    def __repr__(self):
        return "<OutputFile('{e.path}', {e.kind})>".format(e=self)


def create_session(db=None, debug=False, timeout=15):
    """Create a session for the specified catalog database file.

    The default location comes from TRIPHOTON_DB. If debug=True, the session
    echoes the SQL it executes.
    """

    if db is None:
        db = os.getenv("TRIPHOTON_DB", __DEFAULT_DB__)

    db_path = Path(db).resolve()

    engine = create_engine(
        "sqlite:///" + str(db_path), echo=debug, connect_args={"timeout": timeout}
    )

    # version 0 means the file was just created
    conn = engine.connect()
    ver = conn.execute("PRAGMA user_version").fetchone()[0]
    if ver == 0:
        conn.execute("PRAGMA user_version={}".format(__DB_VERSION__))
    elif ver < __DB_VERSION__:
        raise Exception(
            "Incompatible database versions, expected {}, got {}".format(
                __DB_VERSION__, ver
            )
        )

    Base.metadata.create_all(conn)
    conn.close()

    Session = sessionmaker(bind=engine, autoflush=False)
    return Session()


def _timestamp(value):
    if value is None or isinstance(value, datetime):
        return value
    return datetime.fromisoformat(str(value))


def index_run(manifest, session, out_dir=None):
    """Record a run manifest (a dict, or the path of a manifest.yaml).

    An existing entry with the same run id is replaced.
    """

    if not isinstance(manifest, dict):
        out_dir = Path(manifest).parent if out_dir is None else out_dir
        manifest = yaml.safe_load(Path(manifest).read_text())

    delete_run(manifest["run_id"], session)

    config = manifest.get("config", {})
    run = Run(
        run_id=manifest["run_id"],
        code_version=manifest.get("code_version"),
        frame=config.get("frame"),
        truncations=",".join(str(config.get(k)) for k in ("trunc0", "trunc1", "trunc2")),
        status=manifest.get("status"),
        started=_timestamp(manifest.get("started")),
        finished=_timestamp(manifest.get("finished")),
        out_dir=str(out_dir) if out_dir is not None else None,
        config=yaml.safe_dump(config, sort_keys=True),
        error=manifest.get("error"),
    )
    for entry in manifest.get("outputs", []):
        run.outputs.append(OutputFile(path=entry["path"], kind=entry.get("kind")))

    session.add(run)
    session.commit()

    logging.info("Indexed run %s with %d output files", run.run_id, len(run.outputs))
    return run


def get_runs(session, frame=None, status=None):
    """DataFrame of catalogued runs, optionally filtered by frame and status."""

    q = session.query(
        Run.run_id,
        Run.frame,
        Run.truncations,
        Run.status,
        Run.started,
        Run.finished,
        Run.code_version,
        Run.out_dir,
    ).order_by(Run.started, Run.run_id)

    if frame is not None:
        q = q.filter(Run.frame == frame)
    if status is not None:
        q = q.filter(Run.status == status)

    return pd.DataFrame(q, columns=[c["name"] for c in q.column_descriptions])


def get_outputs(session, run_id):
    """DataFrame of the files written by one run."""

    q = (
        session.query(OutputFile.path, OutputFile.kind)
        .join(OutputFile.run)
        .filter(Run.run_id == run_id)
        .order_by(OutputFile.path)
    )

    return pd.DataFrame(q, columns=[c["name"] for c in q.column_descriptions])


def delete_run(run_id, session):
    """Remove a run and its output records from the catalog."""

    run = session.query(Run).filter(Run.run_id == run_id).one_or_none()

    if run is not None:
        session.delete(run)
        session.commit()
