"""Inner kernels of the decoupling Monte-Carlo loop.

The compiled extension ``qcap._kernels`` is used when it was built; otherwise
the NumPy versions in ``qcap._kernels_py`` are used.  Setting
``QCAP_PURE_PYTHON=1`` forces the fallback.

block_conjugate(x, u_blocks, d_rest)
    ``U x U^dagger`` for ``U = sum_j |j><j| (x) U_j (x) I_rest``.
kraus_apply(kraus, x, d_rest)
    ``sum_k (K_k (x) I_rest) x (K_k (x) I_rest)^dagger``.
"""

import os

import numpy as np

from qcap import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("QCAP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from qcap import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def block_conjugate(x, u_blocks, d_rest):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    u_blocks = np.ascontiguousarray(u_blocks, dtype=np.complex128)
    return _impl.block_conjugate(x, u_blocks, int(d_rest))


def kraus_apply(kraus, x, d_rest):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    kraus = np.ascontiguousarray(kraus, dtype=np.complex128)
    return _impl.kraus_apply(kraus, x, int(d_rest))
