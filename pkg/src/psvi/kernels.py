"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``PSVI_PURE_PYTHON=1`` is set, the numpy fallback is used. ``BACKEND`` names
the active implementation.
"""

import os

from . import _fallback as fallback

compiled = None
if not os.environ.get("PSVI_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

scan_events = _impl.scan_events
build_tree = _impl.build_tree
predict_margin = _impl.predict_margin
tree_shap = _impl.tree_shap
