"""Process-level allocator tuning for many short-lived mid-sized arrays."""

from __future__ import annotations

import ctypes
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_done = False


def tune_allocator() -> bool:
    """Keep freed arrays on the heap instead of returning them via munmap.

    glibc serves blocks above its mmap threshold with fresh mappings, so every
    temporary of a few hundred KB page-faults on first touch. Training creates
    hundreds of such temporaries per step; raising the thresholds makes them
    reuse warm heap memory. No-op outside glibc.
    """
    global _done
    if _done:
        return True
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30) and libc.mallopt(_M_TRIM_THRESHOLD, (1 << 31) - 1)
    except (OSError, AttributeError):
        return False
    _done = bool(ok)
    return _done
