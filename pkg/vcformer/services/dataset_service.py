"""Dataset ingestion, splitting, normalization and window sampling."""

import queue
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from ..config import dataset_ratios
from ..errors import ConfigurationError, DataFormatError, DimensionError
from ..utils.logger import setup_logger

logger = setup_logger('dataset_service')

STD_FLOOR = 1e-8
PREFETCH_POLL_SECONDS = 0.05
MISSING = {'', 'nan', 'na', 'n/a', 'null', 'none'}


@dataclass
class RawSeries:
    """A timesteps x N numeric matrix with its column names."""

    values: np.ndarray
    columns: List[str]
    timestamps: Optional[List[str]] = None
    dropped_rows: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


PARSER_LINE = re.compile(r'Expected (\d+) fields in line (\d+), saw (\d+)')


def _read_frame(path: str) -> pd.DataFrame:
    """Every cell as text; empty fields stay ``''`` and absent fields come back as NaN."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except UnicodeDecodeError as e:
        raise DataFormatError(f"{path} is not UTF-8: {e}")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path} is empty")
    except pd.errors.ParserError as e:
        found = PARSER_LINE.search(str(e))
        if not found:
            raise DataFormatError(f"{path}: {e}")
        expected, line, saw = (int(g) for g in found.groups())
        raise DataFormatError(f"ragged row: expected {expected} fields, got {saw}", row=line,
                              column=f"#{expected + 1}")
    header = [str(c) for c in frame.columns]
    if not isinstance(frame.index, pd.RangeIndex):
        # every data row carried one field more than the header
        raise DataFormatError(f"ragged row: expected {len(header)} fields, got {len(header) + 1}",
                              row=2, column=f"#{len(header) + 1}")
    short = frame.isna().to_numpy()
    if short.any():
        row, col = np.argwhere(short)[0]
        # header is line 1
        raise DataFormatError(f"ragged row: expected {len(header)} fields, got {col}",
                              row=int(row) + 2, column=header[max(col - 1, 0)])
    return frame


def load_csv(path: str, has_timestamp_column: bool = True) -> RawSeries:
    """
    Load a header-first CSV of numeric columns.

    Args:
        path: UTF-8 CSV file
        has_timestamp_column: Treat the first column as timestamps and drop it from the features

    Returns:
        RawSeries; rows holding a missing value are dropped and counted
    """
    frame = _read_frame(path)
    header = list(frame.columns)
    feature_names = header[1:] if has_timestamp_column else header
    if not feature_names:
        raise DataFormatError(f"{path} has no feature columns")

    features = frame[feature_names]
    missing = features.apply(lambda col: col.str.strip().str.lower().isin(MISSING))
    numeric = features.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna() & ~missing
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataFormatError(f"cannot parse {features.iat[row, col]!r} as a number",
                              row=int(row) + 2, column=feature_names[col])

    keep = ~numeric.isna().any(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning(f"{path}: dropped {dropped} rows with missing values")

    timestamps = None
    if has_timestamp_column:
        stamps = frame.iloc[:, 0][keep]
        parsed = pd.to_datetime(stamps, errors='coerce')
        unparsed = parsed.isna() & (stamps.str.strip() != '')
        if unparsed.any():
            row = int(np.flatnonzero(unparsed.to_numpy())[0])
            raise DataFormatError(f"cannot parse {stamps.iloc[row]!r} as a timestamp",
                                  row=int(stamps.index[row]) + 2, column=header[0])
        timestamps = stamps.tolist()

    values = numeric[keep].to_numpy(dtype=np.float64)
    logger.info(f"loaded {path}: {values.shape[0]} timesteps x {values.shape[1]} variates")
    return RawSeries(values, list(feature_names), timestamps, dropped)


@dataclass
class DatasetSplit:
    """Contiguous train/val/test parts z-scored with train-only statistics."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    ratios: Tuple[float, float, float]
    columns: List[str] = field(default_factory=list)

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def part(self, name: str) -> np.ndarray:
        if name not in ('train', 'val', 'test'):
            raise ConfigurationError(f"unknown split {name!r}")
        return getattr(self, name)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def split_bounds(timesteps: int, ratios: Sequence[float]) -> Tuple[int, int]:
    """End of train and end of val; floor on cumulative ratios, remainder goes to test."""
    train_end = int(np.floor(timesteps * ratios[0] + 1e-9))
    val_end = int(np.floor(timesteps * (ratios[0] + ratios[1]) + 1e-9))
    return train_end, val_end


def fit_scaler(train: np.ndarray) -> StandardScaler:
    """Per-channel mean/std (ddof 0) of the train part, std floored for constant channels."""
    scaler = StandardScaler().fit(train)
    scaler.scale_ = np.maximum(np.sqrt(scaler.var_), STD_FLOOR)
    return scaler


def split_normalize(raw: RawSeries, ratios: Optional[Sequence[float]] = None,
                    dataset_name: str = '') -> DatasetSplit:
    """
    Split a series into contiguous train/val/test parts and z-score them.

    Args:
        raw: Loaded series
        ratios: Train/val/test fractions summing to 1 (default picked from the dataset family)
        dataset_name: Used only to choose default ratios

    Returns:
        DatasetSplit with statistics computed on train alone
    """
    ratios = tuple(float(r) for r in (ratios if ratios is not None else dataset_ratios(dataset_name)))
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigurationError(f"ratios must be three non-negative fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must sum to 1, got {sum(ratios)}")
    train_end, val_end = split_bounds(raw.timesteps, ratios)
    parts = raw.values[:train_end], raw.values[train_end:val_end], raw.values[val_end:]
    for name, part in zip(('train', 'val', 'test'), parts):
        if len(part) == 0:
            raise ConfigurationError(f"{name} split is empty for {raw.timesteps} timesteps and ratios {ratios}")

    scaler = fit_scaler(parts[0])
    train, val, test = (scaler.transform(p) for p in parts)
    logger.info(f"split sizes train={len(train)} val={len(val)} test={len(test)}")
    return DatasetSplit(train, val, test, scaler.mean_.copy(), scaler.scale_.copy(), ratios,
                        list(raw.columns))


class WindowSampler:
    """
    (input, target) windows over one split: input = rows [s, s+T), target = rows [s+T, s+T+H).

    Shuffled epochs are seeded by ``(seed, epoch)`` so every epoch order is
    reproducible on its own.
    """

    def __init__(self, source: np.ndarray, t: int, h: int, stride: int = 1,
                 shuffle: bool = False, seed: int = 0):
        source = np.asarray(source)
        if source.ndim != 2:
            raise DimensionError("window source must be timesteps x N", source.shape)
        if t <= 0 or h <= 0 or stride <= 0:
            raise ConfigurationError(f"T, H and stride must be positive, got {t}, {h}, {stride}")
        self.source = source
        self.t = t
        self.h = h
        self.stride = stride
        self.shuffle = shuffle
        self.seed = seed
        last = len(source) - t - h
        self.starts = np.arange(0, last + 1, stride) if last >= 0 else np.arange(0)

    def __len__(self) -> int:
        return len(self.starts)

    def window(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        s = int(self.starts[k])
        return self.source[s:s + self.t], self.source[s + self.t:s + self.t + self.h]

    def order(self, epoch: int = 0) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self))

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for k in self.order(0):
            yield self.window(int(k))

    def _gather(self, ks: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        pairs = [self.window(int(k)) for k in ks]
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])

    def batches(self, batch_size: int, epoch: int = 0) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Stacked (B, T, N) / (B, H, N) batches in this epoch's order; the last may be short."""
        order = self.order(epoch)
        for i in range(0, len(order), batch_size):
            yield self._gather(order[i:i + batch_size])

    def prefetched(self, batch_size: int, epoch: int = 0,
                   depth: int = 2) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Same batches as ``batches``, prepared by a producer thread.

        Closing the generator early (or an exception in the consumer) stops the
        producer and joins it.
        """
        handoff: queue.Queue = queue.Queue(maxsize=depth)
        stop = threading.Event()
        done = object()

        def offer(item) -> bool:
            while not stop.is_set():
                try:
                    handoff.put(item, timeout=PREFETCH_POLL_SECONDS)
                    return True
                except queue.Full:
                    continue
            return False

        def produce():
            try:
                for batch in self.batches(batch_size, epoch):
                    if not offer(batch):
                        return
            except Exception as e:  # re-raised on the consumer side
                offer(e)
                return
            offer(done)

        worker = threading.Thread(target=produce, name='window-prefetch', daemon=True)
        worker.start()
        try:
            while True:
                item = handoff.get()
                if item is done:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            while True:
                try:
                    handoff.get_nowait()
                except queue.Empty:
                    break
            worker.join()

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Every window in sequential order."""
        if not len(self):
            shape_x = (0, self.t, self.source.shape[1])
            return np.zeros(shape_x), np.zeros((0, self.h, self.source.shape[1]))
        return self._gather(range(len(self)))


def metrics(pred: np.ndarray, target: np.ndarray) -> Tuple[float, float]:
    """(MSE, MAE) over every entry."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError("metric operands differ", pred.shape, target.shape)
    diff = pred - target
    return float(np.mean(diff * diff)), float(np.mean(np.abs(diff)))


def _smooth(rng: np.random.Generator, timesteps: int, components: int = 3) -> np.ndarray:
    """Sum of sinusoids with whole cycle counts over the series, so shifts wrap exactly."""
    t = np.arange(timesteps)
    max_cycles = max(2, timesteps // 50)
    cycles = rng.integers(1, max_cycles + 1, size=components)
    phases = rng.uniform(0.0, 2 * np.pi, size=components)
    amps = rng.uniform(0.5, 1.5, size=components)
    return sum(a * np.sin(2 * np.pi * c * t / timesteps + p) for a, c, p in zip(amps, cycles, phases))


def synth_lagged(n: int, timesteps: int, lag: int, coupling: float, noise: float,
                 seed: int, independent: float = 0.3) -> RawSeries:
    """
    Channels that follow channel 0 at staggered delays.

    Channel ``j > 0`` is ``coupling * x0[t - j*lag] + independent * u_j[t] + noise``
    with ``u_j`` an unrelated smooth signal.

    Args:
        n: Channel count
        timesteps: Series length
        lag: Delay step between neighbouring channels
        coupling: Weight of the delayed copy of channel 0
        noise: Gaussian noise standard deviation
        seed: Generator seed; equal seeds regenerate the series bit for bit
        independent: Weight of each channel's own smooth component

    Returns:
        RawSeries with the ground-truth lags in ``metadata``
    """
    if n < 1 or timesteps < 2:
        raise ConfigurationError(f"need n >= 1 and timesteps >= 2, got {n}, {timesteps}")
    if lag < 0 or lag * (n - 1) >= timesteps:
        raise ConfigurationError(f"lag {lag} x {n - 1} channels does not fit in {timesteps} timesteps")
    rng = np.random.default_rng(seed)
    base = _smooth(rng, timesteps)
    values = np.empty((timesteps, n))
    values[:, 0] = base
    for j in range(1, n):
        own = _smooth(rng, timesteps)
        values[:, j] = coupling * np.roll(base, j * lag) + independent * own
    if noise > 0:
        values[:, 1:] += rng.normal(0.0, noise, size=(timesteps, n - 1))
    columns = [f'x{j}' for j in range(n)]
    stamps = pd.date_range('2000-01-01', periods=timesteps, freq='h').strftime('%Y-%m-%d %H:%M:%S')
    metadata = {
        'n': n,
        'timesteps': timesteps,
        'lag': lag,
        'coupling': coupling,
        'noise': noise,
        'independent': independent,
        'seed': seed,
        'shifts': {columns[j]: j * lag for j in range(n)},
    }
    return RawSeries(values, columns, list(stamps), 0, metadata)
