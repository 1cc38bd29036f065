"""Database models for the vcformer run registry."""

from datetime import datetime

from sqlalchemy import Column, DateTime, Float, Integer, JSON, String
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class RunRecord(Base):
    """One finished (or diverged) training run."""

    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    config_hash = Column(String(16), nullable=False, index=True)
    seed = Column(Integer, nullable=False)
    dataset = Column(String(255), default='')
    status = Column(String(16), default='finished')  # 'finished' or 'diverged'
    epochs = Column(Integer, default=0)
    best_epoch = Column(Integer, default=-1)
    best_val_mse = Column(Float, nullable=True)
    best_val_mae = Column(Float, nullable=True)
    test_mse = Column(Float, nullable=True)
    test_mae = Column(Float, nullable=True)
    wall_time = Column(Float, default=0.0)
    checkpoint = Column(String(1024), default='')
    config = Column(JSON, default={})
    created_at = Column(DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"<RunRecord(id={self.id}, config_hash={self.config_hash}, seed={self.seed})>"

    def to_dict(self):
        return {
            'id': self.id,
            'config_hash': self.config_hash,
            'seed': self.seed,
            'dataset': self.dataset,
            'status': self.status,
            'epochs': self.epochs,
            'best_epoch': self.best_epoch,
            'best_val_mse': self.best_val_mse,
            'best_val_mae': self.best_val_mae,
            'test_mse': self.test_mse,
            'test_mae': self.test_mae,
            'wall_time': self.wall_time,
            'checkpoint': self.checkpoint,
            'created': self.created_at.isoformat() if self.created_at else None,
        }
