"""Small shared helpers."""

import os


def worker_count():
    """Number of worker threads for internally parallel operations.

    Controlled by the GSD_THREADS environment variable; defaults to the
    machine's CPU count. Always at least 1.
    """
    raw = os.environ.get("GSD_THREADS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            n = 1
    else:
        n = os.cpu_count() or 1
    return max(1, n)
