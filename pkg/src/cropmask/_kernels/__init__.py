"""Hot-loop kernels: compiled Cython core with a NumPy fallback.

The compiled backend is used when the extension built; set
``CROPMASK_PURE_KERNELS=1`` to force the fallback (used by the benchmark
and to test both paths).
"""

import os

from . import pure

if os.environ.get("CROPMASK_PURE_KERNELS"):
    _impl = pure
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = pure

BACKEND = "pure" if _impl is pure else "compiled"

GINI = pure.GINI
ENTROPY = pure.ENTROPY

neighbor_stats = _impl.neighbor_stats
split_scan = _impl.split_scan
tree_apply = _impl.tree_apply
fnv1a64 = _impl.fnv1a64
