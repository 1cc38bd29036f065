"""Throughput tracking for training runs."""

import time
from typing import Dict


class RunMetrics:
    """Track optimizer steps, samples and where the time goes."""

    def __init__(self):
        self.steps = 0
        self.samples = 0
        self.evaluations = 0
        self.step_seconds = 0.0
        self.update_seconds = 0.0
        self.eval_seconds = 0.0
        self.start_time = time.perf_counter()

    def log_step(self, samples: int, step_seconds: float, update_seconds: float = 0.0):
        """Log one forward/backward pass and its parameter update."""
        self.steps += 1
        self.samples += samples
        self.step_seconds += step_seconds
        self.update_seconds += update_seconds

    def log_eval(self, seconds: float):
        """Log a validation or test pass."""
        self.evaluations += 1
        self.eval_seconds += seconds

    def get_stats(self) -> Dict:
        """Get current metrics."""
        elapsed = time.perf_counter() - self.start_time
        return {
            'steps': self.steps,
            'samples': self.samples,
            'evaluations': self.evaluations,
            'forward_backward_seconds': round(self.step_seconds, 6),
            'update_seconds': round(self.update_seconds, 6),
            'eval_seconds': round(self.eval_seconds, 6),
            'samples_per_second': round(self.samples / self.step_seconds, 3) if self.step_seconds > 0 else 0.0,
            'elapsed_seconds': round(elapsed, 6),
        }
