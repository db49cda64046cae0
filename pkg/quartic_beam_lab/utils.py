from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, NamedTuple, Optional, TypeVar

import numpy as np
from loguru import logger

from .errors import InvalidArgumentError
from .settings import get_settings

T = TypeVar('T')
R = TypeVar('R')


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Map fn over items on a thread pool, returning results in input order"""
    items = list(items)
    if threads is None:
        threads = get_settings().threads
    threads = max(1, min(threads, len(items) or 1))
    if threads == 1:
        return [fn(item) for item in items]
    logger.debug(f"Mapping {len(items)} items on {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def geometric_sequence(start: float, ratio: float, count: int) -> np.ndarray:
    """start, start*ratio, start*ratio**2, ... (count values)"""
    if start <= 0 or ratio <= 0 or count < 1:
        raise InvalidArgumentError(f"Invalid geometric sequence: start={start} ratio={ratio} count={count}")
    return start * ratio ** np.arange(count, dtype=float)


def loglog_fit(x, y, min_points: int = 2) -> LogLogFit:
    """Least-squares line through (log x, log y).

    The standard error of the slope comes from the residuals and is
    zero when fewer than three points are given.
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise InvalidArgumentError(f"Length mismatch: {x.shape} vs {y.shape}")
    if x.size < min_points:
        raise InvalidArgumentError(f"At least {min_points} points are needed, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("Log-log fit needs strictly positive data")
    lx = np.log(x)
    ly = np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    stderr = 0.0
    if x.size > 2:
        residuals = ly - (slope * lx + intercept)
        spread = np.sum((lx - lx.mean()) ** 2)
        stderr = float(np.sqrt(np.sum(residuals ** 2) / (x.size - 2) / spread))
    return LogLogFit(float(slope), float(intercept), stderr)


def local_orders(x, y) -> List[Optional[float]]:
    """Pairwise log-log slopes between consecutive samples; None for the first"""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    orders: List[Optional[float]] = [None]
    for k in range(1, x.size):
        if y[k] > 0 and y[k - 1] > 0:
            orders.append(float(np.log(y[k] / y[k - 1]) / np.log(x[k] / x[k - 1])))
        else:
            orders.append(None)
    return orders
