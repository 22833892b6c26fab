"""Optional numba acceleration.

Set ``IRS_OFDM_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("IRS_OFDM_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


def njit(fn=None, **options):
    """Compile `fn` in nopython mode when numba is usable, else return it untouched.

    Usable bare (``@njit``) or with numba options (``@njit(error_model="numpy")``).
    """
    if fn is None:
        return lambda f: njit(f, **options)
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, **options)(fn)
