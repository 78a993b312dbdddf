"""Select the kernel implementation at import time.

The compiled ``_ckernels`` extension is used when it was built; otherwise,
or when ``QUBITID_PURE_PYTHON=1`` is set, the pure-Python kernels are used.
"""
import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("QUBITID_PURE_PYTHON", "") not in ("1", "true"):
    kernels = compiled_kernels
else:
    kernels = _pykernels

BACKEND = kernels.NAME
