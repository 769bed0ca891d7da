"""Backend selection for the hot distillation loop.

The compiled extension is used when it was built; otherwise, or when
``ESDLAB_PURE_PYTHON=1`` is set, the numpy twin runs instead.
"""

import os

from . import _kernels_py

if os.environ.get("ESDLAB_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
distill_linear_gaussian = (_compiled or _kernels_py).distill_linear_gaussian
python_distill_linear_gaussian = _kernels_py.distill_linear_gaussian
compiled_distill_linear_gaussian = None if _compiled is None else _compiled.distill_linear_gaussian
