"""Hot inner loops: repeated propagator application with norm recording.

Every kernel exists twice: a pure-numpy reference implementation
(``*_numpy``) and, when numba is importable, an ``@njit``-compiled twin
(``*_numba``).  The public names bind to the numba versions unless the
environment variable ``ISSLYAP_NO_NUMBA`` is set to 1/true/yes, in which
case the numpy path is used.  ``benchmarks/kernel_bench.py`` times both.
"""

import os

import numpy as np


def _flag_disabled() -> bool:
    return os.environ.get("ISSLYAP_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


def _try_import_numba():
    if _flag_disabled():
        return None
    try:
        import numba
    except ImportError:
        return None
    return numba


_numba = _try_import_numba()
HAVE_NUMBA = _numba is not None


def propagate_norm_sq_l2_numpy(prop, x0, n_steps, weight):
    """Squared weighted-l2 norms of x, prop@x, prop^2@x, ... (n_steps+1 values)."""
    out = np.empty(n_steps + 1)
    x = x0.copy()
    out[0] = weight * np.dot(x, x)
    for j in range(n_steps):
        x = prop @ x
        out[j + 1] = weight * np.dot(x, x)
    return out


def propagate_norm_sup_numpy(prop, x0, n_steps):
    """Sup norms of x, prop@x, prop^2@x, ... (n_steps+1 values)."""
    out = np.empty(n_steps + 1)
    x = x0.copy()
    out[0] = np.max(np.abs(x))
    for j in range(n_steps):
        x = prop @ x
        out[j + 1] = np.max(np.abs(x))
    return out


if HAVE_NUMBA:
    _njit = _numba.njit(cache=True, fastmath=False)
    propagate_norm_sq_l2_numba = _njit(propagate_norm_sq_l2_numpy)
    propagate_norm_sup_numba = _njit(propagate_norm_sup_numpy)
    propagate_norm_sq_l2 = propagate_norm_sq_l2_numba
    propagate_norm_sup = propagate_norm_sup_numba
else:
    propagate_norm_sq_l2 = propagate_norm_sq_l2_numpy
    propagate_norm_sup = propagate_norm_sup_numpy
