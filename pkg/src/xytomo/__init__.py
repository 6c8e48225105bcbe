"""Reconstruction of XY-chain ground states from measurement data.

Recurrent autoregressive wavefunctions (with optional exact magnetization
projection) and an RBM baseline, trained on projective measurements and
validated against exact sector diagonalization and free-fermion oracles.
"""

__version__ = "0.1.0"

from .kernels import backend_name

__all__ = ["backend_name", "__version__"]
