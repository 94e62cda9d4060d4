"""Import-time selection between the compiled core and the numpy fallback.

Set ``KNNLAP_PURE_PYTHON=1`` to force the fallback. ``KNNLAP_THREADS``
sets the default worker count ("auto" uses every available core).
"""

import os

from . import _core_py

if os.environ.get("KNNLAP_PURE_PYTHON", "").strip() not in ("", "0"):
    core = _core_py
    COMPILED = False
else:
    try:
        from . import _core as core

        COMPILED = True
    except ImportError:  # pragma: no cover - depends on the build
        core = _core_py
        COMPILED = False

_threads_override = None


def _parse_threads(value):
    if value is None:
        return None
    value = str(value).strip().lower()
    if value in ("", "auto", "0"):
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise ValueError(f"thread count must be positive, got {n}")
    return n


def set_threads(value):
    """Set the process-wide worker count (an int, ``"auto"`` or ``None`` to reset)."""
    global _threads_override
    _threads_override = None if value is None else _parse_threads(value)


def get_threads() -> int:
    if _threads_override is not None:
        return _threads_override
    env = _parse_threads(os.environ.get("KNNLAP_THREADS"))
    return env if env is not None else 1
