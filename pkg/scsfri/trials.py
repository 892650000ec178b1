from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

T = TypeVar("T")


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the trial identified by ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def map_trials(fn: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """Run ``fn(0..count-1)``, optionally on a thread pool; results stay in trial order."""
    if threads <= 1 or count <= 1:
        return [fn(index) for index in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as executor:
        return list(executor.map(fn, range(count)))


def stable_mean(values: Iterable[float]) -> float:
    items = list(values)
    if not items:
        return math.nan
    return math.fsum(items) / len(items)


def standard_error(values: Iterable[float]) -> float:
    items = list(values)
    if len(items) < 2:
        return 0.0
    mean = stable_mean(items)
    variance = math.fsum((v - mean) ** 2 for v in items) / (len(items) - 1)
    return math.sqrt(variance / len(items))
