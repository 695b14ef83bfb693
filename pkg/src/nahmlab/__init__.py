"""nahmlab: Nahm curves, Dirac ODE kernels, and singular monopoles on the dual 3-torus."""

from ._core import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
