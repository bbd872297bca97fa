"""Kernel backend selection: compiled extension or numpy/scipy fallback.

The Cython extension (fasctrack._ccl) is preferred when built. Setting
FASCTRACK_PURE_PYTHON=1 forces the fallback, which is also used when the
extension failed to build. ``BACKEND`` names the active implementation.
"""

import os

if os.environ.get("FASCTRACK_PURE_PYTHON"):
    from . import _ccl_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _ccl as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from . import _ccl_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"

label_components = _impl.label_components
group_pixels = _impl.group_pixels
