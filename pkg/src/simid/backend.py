"""Select the solver kernel at import: compiled extension if available,
numpy fallback otherwise. Override with SIMID_BACKEND=compiled|python."""

import os

_requested = os.environ.get("SIMID_BACKEND", "").strip().lower()

if _requested in ("python", "pure"):
    from . import _kernel_py as _impl

    BACKEND = "python"
elif _requested in ("", "compiled", "c"):
    try:
        from . import _kernel as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise
        from . import _kernel_py as _impl

        BACKEND = "python"
else:
    raise ImportError(f"unknown SIMID_BACKEND value {_requested!r}")

ba_iterate = _impl.ba_iterate
