"""Pivot kernel selection: compiled extension when built, numpy fallback
otherwise. Set CONVEXHEDGE_BACKEND=python or =compiled to force one."""

import os

_choice = os.environ.get("CONVEXHEDGE_BACKEND", "").strip().lower()
if _choice == "python":
    from . import _simplex_py as kernel
    COMPILED = False
elif _choice == "compiled":
    from . import _simplex_core as kernel
    COMPILED = True
elif _choice == "":
    try:
        from . import _simplex_core as kernel
        COMPILED = True
    except ImportError:
        from . import _simplex_py as kernel
        COMPILED = False
else:
    raise RuntimeError(f"CONVEXHEDGE_BACKEND must be 'python' or 'compiled', got {_choice!r}")

BACKEND = "compiled" if COMPILED else "python"
