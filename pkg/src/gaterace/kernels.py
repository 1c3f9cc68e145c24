"""Hot-kernel dispatch.

The compiled extension ``gaterace._kernels`` is used when it imports; otherwise
the numpy implementations in ``gaterace._kernels_py`` are used. Setting
``GATERACE_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("GATERACE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

project_points = _impl.project_points
undistort_points = _impl.undistort_points
refine_pose = _impl.refine_pose
integrate_plant = _impl.integrate_plant


def backends():
    """Map backend name -> kernel module for every backend available here."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
