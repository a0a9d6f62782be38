"""Small shared helpers: worker pool sizing and CSV float formatting."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def worker_count() -> int:
    """Worker cap from KPP_DRIFT_THREADS (0 or unset = auto, capped at 4)."""
    raw = os.environ.get("KPP_DRIFT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 0:
        n = 0
    if n == 0:
        n = min(4, os.cpu_count() or 1)
    return n


def map_chunks(fn, items, min_chunk: int = 4):
    """Apply fn to chunks of `items`, threading when the worker cap allows.

    fn takes a sequence slice and returns a list; results are concatenated in
    input order, so the reduction is deterministic regardless of scheduling.
    Only numpy-bound, shared-state-free work should go through here (ARPACK
    solves run serially elsewhere on purpose).
    """
    n = len(items)
    workers = worker_count()
    if workers <= 1 or n <= min_chunk:
        return list(fn(items))
    chunk = max(min_chunk, (n + workers - 1) // workers)
    slices = [items[i : i + chunk] for i in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(fn, slices))
    out = []
    for p in parts:
        out.extend(p)
    return out


def fmt(x) -> str:
    """Full round-trip decimal formatting for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)
