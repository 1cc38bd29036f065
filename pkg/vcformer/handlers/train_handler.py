"""Train, evaluate and forecast commands."""

import json
from typing import Optional, Tuple

import numpy as np
from sqlalchemy.exc import SQLAlchemyError
from threadpoolctl import threadpool_limits

from ..config import RunConfig
from ..errors import ConfigurationError, DimensionError, TrainingDivergedError
from ..services.checkpoint_service import Checkpoint, load_checkpoint, save_checkpoint
from ..services.dataset_service import DatasetSplit, RawSeries, WindowSampler, load_csv, split_normalize
from ..services.export_service import write_text
from ..services.forecaster import VCformer
from ..services.trainer import evaluate, fit
from ..utils.logger import setup_logger
from ..utils.metrics import RunMetrics

logger = setup_logger('train_handler')


def load_split(cfg: RunConfig, csv_path: Optional[str] = None) -> Tuple[RawSeries, DatasetSplit]:
    path = csv_path or cfg.data.csv_path
    if not path:
        raise ConfigurationError("no input CSV; pass --csv or set data.csv_path")
    raw = load_csv(path, cfg.data.has_timestamp)
    return raw, split_normalize(raw, cfg.data.split_ratios)


def model_from_checkpoint(ckpt: Checkpoint) -> Tuple[RunConfig, VCformer]:
    cfg = RunConfig.from_dict(ckpt.config).validate()
    return cfg, VCformer(cfg.model)


class TrainHandler:
    """Handler for the model lifecycle commands."""

    def __init__(self, app):
        """Initialize train handler."""
        self.app = app

    def train(self, cfg: RunConfig, checkpoint_path: str, report_path: str,
              csv_path: Optional[str] = None) -> int:
        """
        Fit a model, then write its checkpoint and TrainReport.

        A diverged run still writes the last finite parameters and the partial
        report before the error propagates.
        """
        if csv_path:
            # recorded in the checkpoint config; eval and corrmap fall back to it
            cfg = cfg.with_overrides({'data.csv_path': csv_path})
        cfg.validate()
        raw, split = load_split(cfg, csv_path)
        if raw.n_vars != cfg.model.n:
            raise DimensionError("CSV variate count differs from model.n", raw.values.shape, (cfg.model.n,))
        model = VCformer(cfg.model)
        metrics = RunMetrics()
        dataset = csv_path or cfg.data.csv_path or ''
        try:
            with threadpool_limits(limits=cfg.train.threads):
                report, params = fit(model, split, cfg, metrics=metrics)
        except TrainingDivergedError as e:
            save_checkpoint(checkpoint_path, e.params, cfg.to_json(), (split.mean, split.std))
            write_text(report_path, e.report.to_json())
            self._record(cfg, e.report.to_dict(), dataset, checkpoint_path, 'diverged')
            raise

        test = WindowSampler(split.test, cfg.model.t, cfg.model.h)
        if len(test):
            report.test_mse, report.test_mae = evaluate(model, params, test, cfg.train.eval_batch_size)
            logger.info(f"test mse={report.test_mse:.6f} mae={report.test_mae:.6f}")
        else:
            logger.warning("test split too short for a single window; test metrics skipped")

        save_checkpoint(checkpoint_path, params, cfg.to_json(), (split.mean, split.std))
        write_text(report_path, report.to_json())
        self._record(cfg, report.to_dict(), dataset, checkpoint_path, 'finished')
        self.app.emit(json.dumps({
            'best_epoch': report.best_epoch,
            'best_val_mse': report.best_val_mse,
            'best_val_mae': report.best_val_mae,
            'test_mse': report.test_mse,
            'test_mae': report.test_mae,
            'checkpoint': checkpoint_path,
            'report': report_path,
        }))
        return 0

    def _record(self, cfg: RunConfig, report: dict, dataset: str, checkpoint: str, status: str) -> None:
        repo = self.app.repository
        if repo is None:
            return
        try:
            record = repo.add_run(cfg.config_hash(), cfg.seed, report, dataset=dataset,
                                  checkpoint=checkpoint, status=status, config=cfg.to_dict())
            logger.info(f"recorded run {record.id} under config {record.config_hash}")
        except SQLAlchemyError as e:
            logger.warning(f"run registry unavailable: {e}")

    def evaluate(self, checkpoint_path: str, csv_path: Optional[str] = None, split_name: str = 'test') -> int:
        """MSE/MAE of a checkpoint over every window of one split."""
        ckpt = load_checkpoint(checkpoint_path)
        cfg, model = model_from_checkpoint(ckpt)
        _, split = load_split(cfg, csv_path)
        sampler = WindowSampler(split.part(split_name), cfg.model.t, cfg.model.h)
        mse, mae = evaluate(model, ckpt.params, sampler, cfg.train.eval_batch_size)
        logger.info(f"{split_name}: mse={mse:.6f} mae={mae:.6f} over {len(sampler)} windows")
        self.app.emit(json.dumps({'split': split_name, 'windows': len(sampler), 'mse': mse, 'mae': mae}))
        return 0

    def forecast(self, checkpoint_path: str, csv_path: str, denormalize: bool = False,
                 out_path: Optional[str] = None) -> int:
        """Forecast the H rows that follow the last T rows of ``csv_path``."""
        ckpt = load_checkpoint(checkpoint_path)
        cfg, model = model_from_checkpoint(ckpt)
        raw = load_csv(csv_path, cfg.data.has_timestamp)
        if raw.n_vars != cfg.model.n:
            raise DimensionError("CSV variate count differs from the checkpoint", raw.values.shape, (cfg.model.n,))
        if raw.timesteps < cfg.model.t:
            raise DimensionError(f"need at least T={cfg.model.t} rows to forecast", raw.values.shape)
        stats = ckpt.norm_stats
        if stats is None:
            raise ConfigurationError("checkpoint carries no normalization statistics")
        mean, std = stats
        window = (raw.values[-cfg.model.t:] - mean) / std
        pred = model.predict(window, ckpt.params).astype(np.float64)
        if denormalize:
            pred = pred * std + mean
        text = self.app.export_service.forecast_csv(pred, raw.columns)
        if out_path:
            write_text(out_path, text)
            logger.info(f"forecast written to {out_path}")
        else:
            self.app.emit(text, end='')
        return 0
