"""Utilities package for vcformer."""

from .logger import setup_logger
from .metrics import RunMetrics

__all__ = ['setup_logger', 'RunMetrics']
