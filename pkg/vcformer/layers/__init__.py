"""Model layers: lag correlation, variable correlation attention, Koopman detector."""

from .lagcorr import lagged_corr_naive, lagged_corr_fft, aggregate_scores, bench_lagcorr
from .vca import VcaParams, vca_forward, export_corr_map
from .ktd import KtdParams, SnapshotMatrix, KoopmanOperator, segment, fit_koopman, ktd_forward

__all__ = ['lagged_corr_naive', 'lagged_corr_fft', 'aggregate_scores', 'bench_lagcorr',
           'VcaParams', 'vca_forward', 'export_corr_map',
           'KtdParams', 'SnapshotMatrix', 'KoopmanOperator', 'segment', 'fit_koopman', 'ktd_forward']
