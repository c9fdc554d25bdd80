"""Small helpers: worker pools, atomic writes, content digests."""

from __future__ import annotations

import hashlib
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

THREADS_ENV = "DIARKIT_THREADS"


def n_workers() -> int:
    """Worker count from ``DIARKIT_THREADS`` (0 = one per CPU, unset = 1)."""
    raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        n = 1
    if n <= 0:
        n = os.cpu_count() or 1
    return n


@contextmanager
def parallel_map(workers: int | None = None):
    """Yield an order-preserving ``map`` backed by a thread pool when workers > 1."""
    workers = n_workers() if workers is None else workers
    if workers <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, items: list(pool.map(fn, items))


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
