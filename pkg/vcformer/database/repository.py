"""Database repository for the vcformer run registry."""

from typing import Dict, List, Optional

import numpy as np
from sqlalchemy import create_engine
from sqlalchemy.orm import scoped_session, sessionmaker

from .models import Base, RunRecord


class RunRepository:
    """Repository for run records."""

    def __init__(self, database_url: str):
        """Initialize database connection."""
        self.engine = create_engine(database_url, echo=False)
        Base.metadata.create_all(self.engine)
        session_factory = sessionmaker(bind=self.engine, expire_on_commit=False)
        self.Session = scoped_session(session_factory)

    def get_session(self):
        """Get a database session."""
        return self.Session()

    def add_run(self, config_hash: str, seed: int, report: Optional[Dict] = None,
                dataset: str = '', checkpoint: str = '', status: str = 'finished',
                config: Optional[Dict] = None) -> RunRecord:
        """
        Record a run.

        Args:
            config_hash: Digest grouping runs that differ only by seed
            seed: Run seed
            report: TrainReport as a dict
            dataset: Input file or dataset name
            checkpoint: Path of the saved checkpoint
            status: 'finished' or 'diverged'
            config: Full run config

        Returns:
            The stored record
        """
        report = report or {}
        session = self.get_session()
        try:
            record = RunRecord(
                config_hash=config_hash,
                seed=seed,
                dataset=dataset,
                status=status,
                epochs=len(report.get('epochs', [])),
                best_epoch=report.get('best_epoch', -1),
                best_val_mse=_finite(report.get('best_val_mse')),
                best_val_mae=_finite(report.get('best_val_mae')),
                test_mse=_finite(report.get('test_mse')),
                test_mae=_finite(report.get('test_mae')),
                wall_time=report.get('wall_time', 0.0),
                checkpoint=checkpoint,
                config=config or report.get('config', {}),
            )
            session.add(record)
            session.commit()
            session.refresh(record)
            return record
        finally:
            session.close()

    def list_runs(self, config_hash: Optional[str] = None) -> List[RunRecord]:
        """Runs in insertion order, optionally for one config."""
        session = self.get_session()
        try:
            query = session.query(RunRecord)
            if config_hash:
                query = query.filter(RunRecord.config_hash == config_hash)
            return query.order_by(RunRecord.id).all()
        finally:
            session.close()

    def summarize(self, config_hash: Optional[str] = None) -> List[Dict]:
        """Mean/std of test and best-val metrics per config hash over finished runs."""
        groups: Dict[str, List[RunRecord]] = {}
        for run in self.list_runs(config_hash):
            if run.status == 'finished':
                groups.setdefault(run.config_hash, []).append(run)
        summary = []
        for key, runs in groups.items():
            row = {'config_hash': key, 'runs': len(runs), 'seeds': ' '.join(str(r.seed) for r in runs)}
            for metric in ('test_mse', 'test_mae', 'best_val_mse'):
                values = [getattr(r, metric) for r in runs if getattr(r, metric) is not None]
                row[f'{metric}_mean'] = float(np.mean(values)) if values else None
                row[f'{metric}_std'] = float(np.std(values)) if values else None
            summary.append(row)
        return summary


def _finite(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None
