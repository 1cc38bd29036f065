"""Benchmark, gradient check and correlation-map commands."""

import json
from dataclasses import replace
from typing import Optional

import numpy as np

from ..config import ModelConfig, RunConfig
from ..core.autodiff import Variable
from ..core.gradcheck import GradCheckReport, grad_check
from ..errors import ConfigurationError
from ..layers.lagcorr import bench_lagcorr, parse_sizes
from ..services.checkpoint_service import load_checkpoint
from ..services.dataset_service import WindowSampler
from ..services.export_service import write_text
from ..services.forecaster import VCformer, loss_mse
from ..utils.logger import setup_logger
from .train_handler import load_split, model_from_checkpoint

logger = setup_logger('diagnostics_handler')

DEFAULT_BENCH_SIZES = '8x64,8x256,8x1024,8x4096'
GRADCHECK_EXIT = 3


def tiny_config(seed: int = 0) -> ModelConfig:
    """Smallest configuration that exercises every parameter group in 64-bit."""
    return ModelConfig(t=8, h=4, n=3, d=8, m=6, s=4, layers=1, dtype='float64', seed=seed)


def model_grad_check(cfg: ModelConfig, h: float = 1e-6, tol: float = 1e-4,
                     workers: int = 1, batch: int = 2) -> GradCheckReport:
    """
    Finite-difference check of the full forecaster loss on random windows.

    Args:
        cfg: Model configuration (use float64)
        h: Relative finite-difference step
        tol: Maximum relative error per parameter tensor
        workers: Threads evaluating perturbed losses
        batch: Random windows in the loss

    Returns:
        GradCheckReport over every parameter tensor
    """
    model = VCformer(cfg)
    params = model.init_params()
    rng = np.random.default_rng(cfg.seed + 1)
    x = Variable.constant(rng.standard_normal((batch, cfg.t, cfg.n)))
    y = Variable.constant(rng.standard_normal((batch, cfg.h, cfg.n)))

    def loss(tape, variables):
        return loss_mse(model.forward(x, variables), y)

    return grad_check(loss, params, h=h, tol=tol, workers=workers)


class DiagnosticsHandler:
    """Handler for checks and exports that do not train."""

    def __init__(self, app):
        """Initialize diagnostics handler."""
        self.app = app

    def bench(self, sizes: str = DEFAULT_BENCH_SIZES, repeats: int = 3, seed: int = 0,
              out_path: Optional[str] = None) -> int:
        """Time the naive and spectral lag-correlation paths; CSV ``n,len,naive_ns,fft_ns``."""
        parsed = parse_sizes(sizes)
        if not parsed:
            raise ConfigurationError(f"no sizes in {sizes!r}")
        rows = bench_lagcorr(parsed, repeats=repeats, seed=seed)
        text = self.app.export_service.bench_csv(rows)
        if out_path:
            write_text(out_path, text)
        else:
            self.app.emit(text, end='')
        return 0

    def gradcheck(self, cfg: Optional[RunConfig] = None, h: float = 1e-6, tol: float = 1e-4,
                  workers: int = 1, out_path: Optional[str] = None) -> int:
        """Full-model gradient check; exit code 3 when any parameter group fails."""
        model_cfg = cfg.model if cfg is not None else tiny_config()
        if model_cfg.dtype != 'float64':
            logger.warning("gradient check in float32 is unreliable; switching to float64")
            model_cfg = replace(model_cfg, dtype='float64')
        report = model_grad_check(model_cfg, h=h, tol=tol, workers=workers)
        text = json.dumps(report.to_dict(), indent=2)
        if out_path:
            write_text(out_path, text)
        self.app.emit(text)
        if report.passed:
            logger.info(f"gradient check passed; worst relative error {report.worst:.3e}")
            return 0
        logger.error(f"gradient check failed for {sorted(report.failures())}")
        return GRADCHECK_EXIT

    def corrmap(self, checkpoint_path: str, csv_path: Optional[str] = None, layer: int = 0,
                window: int = 0, split_name: str = 'test', out_prefix: str = 'corrmap') -> int:
        """
        Write the pre-softmax map of block ``layer`` for one window, plus Pearson maps
        of that window's input rows and target rows.
        """
        ckpt = load_checkpoint(checkpoint_path)
        cfg, model = model_from_checkpoint(ckpt)
        raw, split = load_split(cfg, csv_path)
        sampler = WindowSampler(split.part(split_name), cfg.model.t, cfg.model.h)
        if not 0 <= window < len(sampler):
            raise ConfigurationError(f"window {window} out of range; {split_name} has {len(sampler)} windows")
        x, y = sampler.window(window)
        exporter = self.app.export_service
        outputs = {
            f'{out_prefix}_layer{layer}.csv': model.corr_map(x, ckpt.params, layer),
            f'{out_prefix}_input_pearson.csv': self.app.analytics.pearson_map(x, raw.columns),
            f'{out_prefix}_target_pearson.csv': self.app.analytics.pearson_map(y, raw.columns),
        }
        for path, matrix in outputs.items():
            write_text(path, exporter.matrix_csv(matrix))
            logger.info(f"wrote {path}")
        self.app.emit(json.dumps({'layer': layer, 'window': window, 'files': list(outputs)}))
        return 0
