from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np


class PointMapper:
    """Evaluate a scalar oracle over many points, optionally on worker threads.

    Results come back in input order, so the worker count never changes
    what a solver computes.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.fn = fn
        self.workers = workers
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def __call__(self, points: Sequence[np.ndarray]) -> list[float]:
        if self._pool is None or len(points) < 2 * self.workers:
            return [float(self.fn(p)) for p in points]
        return [float(v) for v in self._pool.map(self.fn, points)]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
