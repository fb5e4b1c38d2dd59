"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles direct loops and is the default whenever
numba imports cleanly. The numpy backend is a pure-vectorized fallback
(im2col + BLAS) selected with the ``BOWELDET_BACKEND=numpy`` environment
variable, or programmatically via :func:`set_backend`. Both backends are
deterministic run-to-run; they are not guaranteed to agree bit-for-bit
with each other (different summation orders).
"""

import os

from boweldet.kernels import numpy_backend

_BACKENDS = {"numpy": numpy_backend}
_active = "numpy"


def _try_load_numba() -> bool:
    if "numba" in _BACKENDS:
        return True
    try:
        from boweldet.kernels import numba_backend
    except ImportError:
        return False
    _BACKENDS["numba"] = numba_backend
    return True


def set_backend(name: str) -> None:
    global _active
    if name not in ("numpy", "numba"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not _try_load_numba():
        raise ValueError("numba backend requested but numba is not importable")
    _active = name


def get_backend() -> str:
    return _active


def available_backends() -> list[str]:
    _try_load_numba()
    return sorted(_BACKENDS)


def _mod():
    return _BACKENDS[_active]


def conv2d_forward(x, w, b, ph, pw):
    return _mod().conv2d_forward(x, w, b, ph, pw)


def conv2d_backward_input(dy, w, h, wdt, ph, pw):
    return _mod().conv2d_backward_input(dy, w, h, wdt, ph, pw)


def conv2d_backward_weights(x, dy, kh, kw, ph, pw):
    return _mod().conv2d_backward_weights(x, dy, kh, kw, ph, pw)


def maxpool2d_forward(x, ph, pw):
    return _mod().maxpool2d_forward(x, ph, pw)


def maxpool2d_backward(dy, idx, x_shape):
    return _mod().maxpool2d_backward(dy, idx, x_shape)


def vote_accumulate(starts, ends, confs, n_bins, bins_per_s):
    return _mod().vote_accumulate(starts, ends, confs, n_bins, bins_per_s)


_env = os.environ.get("BOWELDET_BACKEND", "").strip().lower()
if _env:
    set_backend(_env)
elif _try_load_numba():
    _active = "numba"
