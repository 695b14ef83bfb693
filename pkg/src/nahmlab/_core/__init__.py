"""Hot-kernel backend selection.

The sequential inner loops (ODE frame marching with re-orthonormalization,
Dormand-Prince steps of the matrix flow) exist twice: a Cython extension
``_kernels`` and a pure-numpy twin ``kernels_py`` with identical signatures.
The extension is preferred when importable; set ``NAHMLAB_PURE_PYTHON=1`` to
force the fallback (tests and the benchmark use this).
"""

import os

from . import kernels_py

if os.environ.get("NAHMLAB_PURE_PYTHON", "") == "1":
    _impl = kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = kernels_py
        BACKEND = "python"

march_frames = _impl.march_frames
dp45_step = _impl.dp45_step
nahm_rhs_triple = _impl.nahm_rhs_triple


def backend_name() -> str:
    return BACKEND
