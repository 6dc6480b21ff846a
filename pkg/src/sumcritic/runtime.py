"""Process-level tuning for the many mid-sized temporaries numpy creates here."""

import ctypes
import ctypes.util
import logging

log = logging.getLogger(__name__)

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3


def configure_allocator(threshold=64 << 20):
    """Keep glibc from mmapping (and page-faulting) every array above 128 KiB.

    No-op off glibc. Returns True when the settings were applied.
    """
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        ok = all(libc.mallopt(opt, val) == 1 for opt, val in (
            (_M_MMAP_THRESHOLD, threshold),
            (_M_TRIM_THRESHOLD, 4 * threshold),
            (_M_TOP_PAD, threshold),
        ))
    except (OSError, AttributeError):
        return False
    log.debug("allocator tuning applied: %s", ok)
    return ok
