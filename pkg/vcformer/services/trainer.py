"""Training loop: Adam with clipping, exponential learning-rate decay, early stopping."""

import json
import time
from contextlib import closing
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..config import RunConfig, TrainConfig
from ..errors import ConfigurationError, DimensionError, NumericError, TrainingDivergedError
from ..utils.logger import setup_logger
from ..utils.metrics import RunMetrics
from .dataset_service import DatasetSplit, WindowSampler
from .forecaster import VCformer

logger = setup_logger('trainer')

Params = Dict[str, np.ndarray]


@dataclass
class OptimState:
    """Adam moments plus the schedule; ``lr`` is the rate for the current epoch."""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-3
    lr: float = 1e-3
    decay: float = 0.9
    clip_norm: float = 5.0

    @classmethod
    def create(cls, params: Mapping[str, np.ndarray], cfg: Optional[TrainConfig] = None) -> 'OptimState':
        cfg = cfg or TrainConfig()
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps,
            base_lr=cfg.lr, lr=cfg.lr, decay=cfg.lr_decay, clip_norm=cfg.clip_norm,
        )

    def set_epoch(self, epoch: int) -> float:
        self.lr = self.base_lr * self.decay ** epoch
        return self.lr


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Rescale so the global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: OptimState) -> Tuple[Params, OptimState]:
    """
    One bias-corrected Adam update after global-norm clipping.

    Args:
        params: Current parameters
        grads: Gradients with the same names and shapes
        state: Moments and hyperparameters; advanced in place

    Returns:
        (new parameters, state)
    """
    for name in params:
        if name not in grads or grads[name].shape != params[name].shape:
            raise DimensionError(f"gradient for {name} does not match its parameter",
                                 params[name].shape, grads[name].shape if name in grads else ())
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient in {name}")

    grads, _ = clip_gradients(grads, state.clip_norm)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    updated = {}
    for name, p in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        updated[name] = (p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return updated, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float
    lr: float
    seconds: float


@dataclass
class TrainReport:
    """Per-epoch history of one run."""

    seed: int
    config: Dict
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float('inf')
    best_val_mae: float = float('inf')
    stopped_early: bool = False
    wall_time: float = 0.0
    throughput: Dict = field(default_factory=dict)
    test_mse: Optional[float] = None
    test_mae: Optional[float] = None

    @property
    def train_losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, values: Dict) -> 'TrainReport':
        values = dict(values)
        values['epochs'] = [EpochRecord(**e) for e in values.get('epochs', [])]
        return cls(**values)


def evaluate(model: VCformer, params: Mapping[str, np.ndarray], sampler: WindowSampler,
             batch_size: int = 64) -> Tuple[float, float]:
    """
    (MSE, MAE) over every window of ``sampler`` in sequential order.

    Args:
        model: Forecaster
        params: Parameters to evaluate
        sampler: Windows of one normalized split
        batch_size: Windows per forward pass

    Returns:
        Means over all windows and entries
    """
    if not len(sampler):
        raise ConfigurationError("no windows to evaluate; split shorter than T + H")
    sq, ab, count = 0.0, 0.0, 0
    for start in range(0, len(sampler), batch_size):
        ks = range(start, min(start + batch_size, len(sampler)))
        x = np.stack([sampler.window(k)[0] for k in ks])
        y = np.stack([sampler.window(k)[1] for k in ks]).astype(np.float64)
        diff = model.predict(x, params).astype(np.float64) - y
        sq += float(np.sum(diff * diff))
        ab += float(np.sum(np.abs(diff)))
        count += diff.size
    return sq / count, ab / count


def _copy(params: Mapping[str, np.ndarray]) -> Params:
    return {k: v.copy() for k, v in params.items()}


def fit(model: VCformer, split: DatasetSplit, cfg: RunConfig, params: Optional[Params] = None,
        metrics: Optional[RunMetrics] = None,
        on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> Tuple[TrainReport, Params]:
    """
    Train with early stopping on validation MSE and return the best parameters.

    Args:
        model: Forecaster built from ``cfg.model``
        split: Normalized data
        cfg: Run configuration (train settings, stride, shuffle, seed)
        params: Starting parameters (fresh ones from ``cfg.seed`` when omitted)
        metrics: Throughput counters to update
        on_epoch: Callback after every epoch

    Returns:
        (TrainReport, best parameters)

    Raises:
        TrainingDivergedError: Loss or gradients became non-finite; carries the
            partial report and the last parameters known to be finite
    """
    tcfg = cfg.train
    t, h = model.cfg.t, model.cfg.h
    if split.train.shape[1] != model.cfg.n:
        raise DimensionError("dataset variate count differs from model.n",
                             split.train.shape, (model.cfg.n,))
    train = WindowSampler(split.train, t, h, cfg.data.stride, cfg.data.shuffle, cfg.seed)
    val = WindowSampler(split.val, t, h)
    if not len(train):
        raise ConfigurationError(f"train split of {len(split.train)} rows has no windows for T={t}, H={h}")
    if not len(val):
        raise ConfigurationError(f"val split of {len(split.val)} rows has no windows for T={t}, H={h}")

    params = model.init_params(cfg.seed) if params is None else _copy(params)
    state = OptimState.create(params, tcfg)
    metrics = metrics or RunMetrics()
    report = TrainReport(seed=cfg.seed, config=cfg.to_dict())
    best = _copy(params)
    wait = 0
    started = time.perf_counter()
    logger.info(f"training {model.param_count(params)} parameters on {len(train)} windows, "
                f"validating on {len(val)}")

    for epoch in range(tcfg.max_epochs):
        epoch_start = time.perf_counter()
        lr = state.set_epoch(epoch)
        epoch_params = params
        total, seen = 0.0, 0
        batches = (train.prefetched(tcfg.batch_size, epoch) if tcfg.prefetch
                   else train.batches(tcfg.batch_size, epoch))
        with closing(batches):
            for x, y in batches:
                step_start = time.perf_counter()
                loss, grads = model.loss_and_grads(params, x, y)
                update_start = time.perf_counter()
                if not np.isfinite(loss):
                    _diverged(report, started, metrics, f"loss became {loss} in epoch {epoch}", epoch_params)
                try:
                    params, state = adam_step(params, grads, state)
                except NumericError as e:
                    _diverged(report, started, metrics, f"{e} in epoch {epoch}", epoch_params)
                metrics.log_step(len(x), update_start - step_start, time.perf_counter() - update_start)
                total += loss * len(x)
                seen += len(x)

        eval_start = time.perf_counter()
        val_mse, val_mae = evaluate(model, params, val, tcfg.eval_batch_size)
        metrics.log_eval(time.perf_counter() - eval_start)
        if not (np.isfinite(val_mse) and np.isfinite(val_mae)):
            _diverged(report, started, metrics, f"validation error became {val_mse} in epoch {epoch}", best)

        record = EpochRecord(epoch, total / seen, val_mse, val_mae, lr, time.perf_counter() - epoch_start)
        report.epochs.append(record)
        logger.info(f"epoch {epoch + 1}/{tcfg.max_epochs}: train={record.train_loss:.6f} "
                    f"val_mse={val_mse:.6f} val_mae={val_mae:.6f} lr={lr:.2e}")
        if on_epoch is not None:
            on_epoch(record)

        if val_mse < report.best_val_mse:
            report.best_epoch, report.best_val_mse, report.best_val_mae = epoch, val_mse, val_mae
            best = _copy(params)
            wait = 0
        else:
            wait += 1
            if wait >= tcfg.patience:
                report.stopped_early = True
                logger.info(f"early stopping after epoch {epoch + 1}; best epoch {report.best_epoch + 1}")
                break

    report.wall_time = time.perf_counter() - started
    report.throughput = metrics.get_stats()
    return report, best


def _diverged(report: TrainReport, started: float, metrics: RunMetrics, message: str,
              params: Params) -> None:
    report.wall_time = time.perf_counter() - started
    report.throughput = metrics.get_stats()
    logger.error(f"training diverged: {message}")
    raise TrainingDivergedError(f"training diverged: {message}", report=report, params=_copy(params))
