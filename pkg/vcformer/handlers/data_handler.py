"""Synthetic data, config and run-registry commands."""

import json
import os
from typing import Optional

from ..config import RunConfig
from ..errors import ConfigurationError
from ..services.dataset_service import synth_lagged
from ..services.export_service import write_text
from ..utils.logger import setup_logger

logger = setup_logger('data_handler')


def metadata_path(csv_path: str) -> str:
    """Sidecar path: ``data.csv`` -> ``data.meta.json``."""
    return os.path.splitext(csv_path)[0] + '.meta.json'


class DataHandler:
    """Handler for dataset generation and bookkeeping commands."""

    def __init__(self, app):
        """Initialize data handler."""
        self.app = app

    def synth(self, n: int, length: int, lag: int, coupling: float, noise: float, seed: int,
              out_path: str, independent: float = 0.3) -> int:
        """Write a lag-coupled synthetic dataset plus its ground-truth metadata."""
        series = synth_lagged(n, length, lag, coupling, noise, seed, independent)
        exporter = self.app.export_service
        write_text(out_path, exporter.series_csv(series))
        meta = metadata_path(out_path)
        write_text(meta, exporter.metadata_json(series))
        logger.info(f"synthetic dataset {length}x{n} written to {out_path} (metadata {meta})")
        self.app.emit(json.dumps({'csv': out_path, 'metadata': meta}))
        return 0

    def config(self, cfg: RunConfig, print_defaults: bool = False) -> int:
        """Print the default config, or the validated effective one."""
        if print_defaults:
            self.app.emit(RunConfig().to_json())
            return 0
        self.app.emit(cfg.validate().to_json())
        return 0

    def runs(self, config_hash: Optional[str] = None, summary: bool = False) -> int:
        """List recorded runs, or mean/std of their metrics per config."""
        repo = self.app.repository
        if repo is None:
            raise ConfigurationError("run registry disabled; set RUNS_DATABASE_URL")
        if summary:
            rows = repo.summarize(config_hash)
        else:
            rows = [r.to_dict() for r in repo.list_runs(config_hash)]
        text = self.app.export_service.runs_csv(rows)
        if text:
            self.app.emit(text, end='')
        else:
            logger.info("no runs recorded")
        return 0
