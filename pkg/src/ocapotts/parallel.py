"""Thread-count control for the compiled per-site loops.

Per-site terms are written into their own slots and summed afterwards in
site order, so the thread count never changes a numeric result.
"""
from contextlib import contextmanager

import numba


def max_threads() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


@contextmanager
def using_threads(threads: int | None):
    if threads is None:
        yield numba.get_num_threads()
        return
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    previous = numba.get_num_threads()
    numba.set_num_threads(min(int(threads), max_threads()))
    try:
        yield numba.get_num_threads()
    finally:
        numba.set_num_threads(previous)
