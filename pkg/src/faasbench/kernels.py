"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
pure-Python module takes over. Set ``FAASBENCH_PURE_PYTHON=1`` to force the
fallback.
"""

import importlib
import logging
import os

logger = logging.getLogger(__name__)


def load_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None for auto)."""
    if name == "python":
        return importlib.import_module("faasbench._kernels_py")
    if name == "cython":
        return importlib.import_module("faasbench._kernels")
    if os.environ.get("FAASBENCH_PURE_PYTHON"):
        return importlib.import_module("faasbench._kernels_py")
    try:
        return importlib.import_module("faasbench._kernels")
    except ImportError:
        logger.debug("compiled kernels unavailable, using pure-Python fallback")
        return importlib.import_module("faasbench._kernels_py")


def available_backends():
    names = ["python"]
    try:
        importlib.import_module("faasbench._kernels")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


_backend = load_backend()

BACKEND = _backend.BACKEND
factorize = _backend.factorize
splitmix_fill = _backend.splitmix_fill
matmul_u32 = _backend.matmul_u32
checksum_u32 = _backend.checksum_u32
hist_index = _backend.hist_index
hist_lowest = _backend.hist_lowest
hist_record_many = _backend.hist_record_many
hist_index_at_rank = _backend.hist_index_at_rank
new_u32 = _backend.new_u32
new_i64 = _backend.new_i64
