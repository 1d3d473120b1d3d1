"""Process-wide knobs (thread count)."""
from __future__ import annotations

from contextlib import contextmanager

_THREADS = 1


def get_threads() -> int:
    return _THREADS


def set_threads(n: int) -> None:
    global _THREADS
    if int(n) < 1:
        raise ValueError("threads must be >= 1")
    _THREADS = int(n)


@contextmanager
def threads(n: int):
    """Run a block with ``n`` walk-sampling threads and single-threaded BLAS.

    Threaded BLAS splits reductions by thread count, which changes the last
    bits of dense results; pinning it to one thread keeps outputs identical
    for every ``n``. Walk chunks are independent, so their parallelism is
    schedule-free.
    """
    from threadpoolctl import threadpool_limits

    old = get_threads()
    set_threads(n)
    try:
        with threadpool_limits(limits=1):
            yield
    finally:
        set_threads(old)
