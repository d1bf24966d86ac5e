"""Selects the compiled trial kernel when available, the pure-Python loops otherwise.

Set ``PRIVSPRT_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

AVAILABLE = {"python": _fallback.run_trials}
if _kernels is not None:
    AVAILABLE["compiled"] = _kernels.run_trials

_requested = os.environ.get("PRIVSPRT_BACKEND", "").strip().lower()
if _requested in AVAILABLE:
    DEFAULT = _requested
else:
    DEFAULT = "compiled" if "compiled" in AVAILABLE else "python"


def get_runner(name: str | None = None):
    name = name or DEFAULT
    try:
        return AVAILABLE[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(AVAILABLE)}") from None
