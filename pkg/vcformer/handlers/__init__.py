"""Handlers package: one class per command family."""

from .train_handler import TrainHandler
from .diagnostics_handler import DiagnosticsHandler
from .data_handler import DataHandler

__all__ = ['TrainHandler', 'DiagnosticsHandler', 'DataHandler']
