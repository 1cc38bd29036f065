"""Services package for vcformer."""

from .forecaster import VCformer, loss_mse
from .baselines import LinearBaseline, baseline_persistence
from .dataset_service import (DatasetSplit, RawSeries, WindowSampler, load_csv, metrics,
                              split_normalize, synth_lagged)
from .trainer import OptimState, TrainReport, adam_step, evaluate, fit
from .checkpoint_service import Checkpoint, load_checkpoint, save_checkpoint
from .analytics_service import AnalyticsService
from .export_service import ExportService

__all__ = ['VCformer', 'loss_mse', 'LinearBaseline', 'baseline_persistence', 'DatasetSplit', 'RawSeries',
           'WindowSampler', 'load_csv', 'metrics', 'split_normalize', 'synth_lagged', 'OptimState',
           'TrainReport', 'adam_step', 'evaluate', 'fit', 'Checkpoint', 'load_checkpoint',
           'save_checkpoint', 'AnalyticsService', 'ExportService']
