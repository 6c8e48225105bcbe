"""Kernel backend selection.

The hot loops (recurrent passes, autoregressive sampling, block Gibbs) exist
twice: a compiled extension (_native, Cython + BLAS) and a pure-numpy
reference (pyref). The compiled one is used when importable; set
XYTOMO_KERNELS=python to force the reference, XYTOMO_KERNELS=native to
require the extension (ImportError if missing). Both expose the same
functions; benchmarks/bench_kernels.py measures and cross-checks them.
"""

import os

from . import pyref

_choice = os.environ.get("XYTOMO_KERNELS", "auto").lower()
if _choice not in ("auto", "native", "python"):
    raise ValueError(f"XYTOMO_KERNELS must be auto|native|python, got {_choice!r}")

if _choice == "python":
    backend = pyref
    BACKEND_NAME = "python"
else:
    try:
        from . import _native as backend  # type: ignore[no-redef]

        BACKEND_NAME = "native"
    except ImportError:
        if _choice == "native":
            raise
        backend = pyref
        BACKEND_NAME = "python"


def backend_name() -> str:
    return BACKEND_NAME
