"""Selects the compiled fast path when available, else the pure-Python twin.

Set ``GSATNET_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and the cross-backend tests).
"""

import os

_force_python = os.environ.get("GSATNET_PURE_PYTHON", "0") not in ("", "0")

if _force_python:
    from . import _pyref as _impl

    HAVE_SPEEDUPS = False
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]

        HAVE_SPEEDUPS = True
    except ImportError:
        from . import _pyref as _impl

        HAVE_SPEEDUPS = False

BACKEND_NAME = "compiled" if HAVE_SPEEDUPS else "python"

walk_pattern_codes = _impl.walk_pattern_codes
skipgram_sgd = _impl.skipgram_sgd
