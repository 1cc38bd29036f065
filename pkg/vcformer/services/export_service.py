"""CSV and JSON renderings of forecasts, maps, benchmarks and reports."""

import csv
import io
import json
from typing import Dict, Iterable, List, Sequence

import numpy as np

from ..layers.lagcorr import BenchRow
from ..utils.logger import setup_logger
from .dataset_service import RawSeries

logger = setup_logger('export')


class ExportService:
    """Render results as text; callers decide whether it goes to a file or stdout."""

    def matrix_csv(self, matrix: np.ndarray) -> str:
        """N x N map as CSV: N rows of N values, row i belongs to query variate i, no header."""
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        for row in np.asarray(matrix):
            writer.writerow([repr(float(v)) for v in row])
        return output.getvalue()

    def forecast_csv(self, forecast: np.ndarray, columns: Sequence[str]) -> str:
        """H x N forecast with the input's channel names as header."""
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(list(columns))
        for row in np.asarray(forecast):
            writer.writerow([repr(float(v)) for v in row])
        return output.getvalue()

    def bench_csv(self, rows: Iterable[BenchRow]) -> str:
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(['n', 'len', 'naive_ns', 'fft_ns'])
        for row in rows:
            writer.writerow([row.n, row.length, row.naive_ns, row.fft_ns])
        return output.getvalue()

    def series_csv(self, series: RawSeries, timestamp_header: str = 'date') -> str:
        """The same layout ``load_csv`` reads: optional timestamp column, then channels."""
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        has_stamps = series.timestamps is not None
        writer.writerow(([timestamp_header] if has_stamps else []) + list(series.columns))
        for i, row in enumerate(series.values):
            cells = [repr(float(v)) for v in row]
            writer.writerow(([series.timestamps[i]] if has_stamps else []) + cells)
        return output.getvalue()

    def metadata_json(self, series: RawSeries) -> str:
        return json.dumps(series.metadata, indent=2, sort_keys=True)

    def runs_csv(self, rows: List[Dict]) -> str:
        """Run registry listing, one row per run."""
        if not rows:
            return ''
        output = io.StringIO()
        writer = csv.DictWriter(output, fieldnames=list(rows[0]), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
        return output.getvalue()


def write_text(path: str, text: str) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    logger.debug(f"wrote {path} ({len(text)} chars)")
