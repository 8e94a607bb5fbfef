"""Backend selection for the hot kernels.

Set ``LANGEVIN_COUPLING_PURE_NUMPY=1`` before import to run the vectorised
numpy kernels instead of the numba-compiled ones.
"""

import os

PURE_NUMPY = os.environ.get("LANGEVIN_COUPLING_PURE_NUMPY", "0").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

if not PURE_NUMPY:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        PURE_NUMPY = True
    else:
        # probe OpenMP first; an old system TBB otherwise triggers a warning
        if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
            numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BACKEND = "numpy" if PURE_NUMPY else "numba"


def set_threads(n):
    """Set the numba worker count; no-op for the numpy backend."""
    if PURE_NUMPY or n is None:
        return
    import numba

    n = int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    if n > numba.config.NUMBA_NUM_THREADS:
        raise ValueError(
            f"requested {n} threads but numba was started with "
            f"NUMBA_NUM_THREADS={numba.config.NUMBA_NUM_THREADS}"
        )
    numba.set_num_threads(n)
