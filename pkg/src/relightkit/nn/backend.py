"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure-numpy fallback is used. RELIGHTKIT_BACKEND=numpy|cython forces a choice
(forcing cython when the extension is missing raises at import).
"""

import os

import numpy as np

from . import _npkernels

_forced = os.environ.get("RELIGHTKIT_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = _npkernels
    BACKEND = "numpy"
else:
    try:
        from . import _ckernels as _impl   # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _npkernels
        BACKEND = "numpy"


def backend_name():
    return BACKEND


def get_impl(name=None):
    """Return a kernel module by name ('numpy'/'cython'), default the active one."""
    if name is None or name == BACKEND:
        return _impl
    if name == "numpy":
        return _npkernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def use(name):
    """Switch the active kernel backend (used by the benchmark; both backends
    compute identical results)."""
    global _impl, BACKEND
    _impl = get_impl(name)
    BACKEND = name
    return BACKEND


def im2col(x, kh, kw, sh, sw, ph, pw):
    return _impl.im2col(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw)


def col2im(gcol, h, w, kh, kw, sh, sw, ph, pw):
    return _impl.col2im(np.ascontiguousarray(gcol), h, w, kh, kw, sh, sw, ph, pw)


# --- bilinear resampling -----------------------------------------------------
#
# Align-corners-false sampling expressed as a pair of dense interpolation
# matrices (row/col), so forward and adjoint are plain GEMMs in both backends.

_matrix_cache = {}


def interp_matrix(n_in, n_out, dtype=np.float64):
    """Dense (n_out, n_in) bilinear interpolation matrix, align-corners-false."""
    key = (n_in, n_out, np.dtype(dtype).str)
    m = _matrix_cache.get(key)
    if m is not None:
        return m
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    m = m.astype(dtype)
    _matrix_cache[key] = m
    return m


def bilinear_resize(x, oh, ow):
    """Resize (N, C, H, W) to (N, C, oh, ow)."""
    n, c, h, w = x.shape
    if (h, w) == (oh, ow):
        return x.copy()
    ay = interp_matrix(h, oh, x.dtype)
    ax = interp_matrix(w, ow, x.dtype)
    t = np.matmul(ay, x.reshape(n * c, h, w))
    return np.matmul(t, ax.T).reshape(n, c, oh, ow)


def bilinear_resize_backward(gy, ih, iw):
    """Adjoint of bilinear_resize: (N, C, oh, ow) grads back to (N, C, ih, iw)."""
    n, c, oh, ow = gy.shape
    if (oh, ow) == (ih, iw):
        return gy.copy()
    ay = interp_matrix(ih, oh, gy.dtype)
    ax = interp_matrix(iw, ow, gy.dtype)
    t = np.matmul(ay.T, gy.reshape(n * c, oh, ow))
    return np.matmul(t, ax).reshape(n, c, ih, iw)


def resize_hwc(img, oh, ow):
    """Resize an (H, W, C) raster; shares the NCHW kernel."""
    x = np.ascontiguousarray(img.transpose(2, 0, 1))[None]
    y = bilinear_resize(x, oh, ow)
    return np.ascontiguousarray(y[0].transpose(1, 2, 0))
