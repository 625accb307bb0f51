"""Worker-thread helpers honoring the RETINA_KIT_THREADS cap.

Results are always collected in input order, and every item's computation
is independent of pool size, so parallel and serial runs produce identical
outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

ENV_THREADS = "RETINA_KIT_THREADS"


def thread_count() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"{ENV_THREADS} must be >= 1, got {n}")
    return n


def worker_map(fn, items) -> list:
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
