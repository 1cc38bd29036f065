"""Database package for the vcformer run registry."""

from .models import Base, RunRecord
from .repository import RunRepository

__all__ = ['Base', 'RunRecord', 'RunRepository']
