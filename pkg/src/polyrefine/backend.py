"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the
numpy fallback is used. POLYREFINE_BACKEND=python|compiled forces the
choice (forcing "compiled" raises if the extension is missing).
"""

import os

from . import _kernels_py

_forced = os.environ.get("POLYREFINE_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
elif _forced == "compiled":
    from . import _kernels as kernels  # noqa: F401  (ImportError is the point)
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py


def backend_name():
    return "compiled" if kernels.IS_COMPILED else "python"


def available_backends():
    """All importable kernel modules, compiled first."""
    out = []
    try:
        from . import _kernels
        out.append(_kernels)
    except ImportError:
        pass
    out.append(_kernels_py)
    return out
