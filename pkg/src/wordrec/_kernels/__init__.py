"""Edit-lattice kernels with a compiled fast path.

The compiled module is preferred when the build produced it; the pure
Python module is a drop-in replacement (same functions, same operation
order, so identical results bit for bit).  Set WORDREC_PURE_PYTHON=1 to
force the fallback, e.g. to benchmark or to debug a kernel.
"""

import os

from . import _pykernels

if os.environ.get("WORDREC_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

NEG_INF = _pykernels.NEG_INF

levenshtein = _impl.levenshtein
lattice_logsum = _impl.lattice_logsum
lattice_best = _impl.lattice_best
em_accumulate = _impl.em_accumulate

__all__ = [
    "BACKEND",
    "NEG_INF",
    "levenshtein",
    "lattice_logsum",
    "lattice_best",
    "em_accumulate",
]
