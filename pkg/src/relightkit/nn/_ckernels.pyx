# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im kernels.

Drop-in replacements for the numpy backend; selected automatically at import
when built (see relightkit.nn.backend). Bounds are hoisted out of the inner
loops so the per-row copies are branch-free and vectorizable.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.string cimport memcpy, memset

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline int int_max(int a, int b) nogil:
    return a if a > b else b


cdef inline int int_min(int a, int b) nogil:
    return a if a < b else b


@cython.boundscheck(False)
@cython.wraparound(False)
def im2col(real[:, :, :, ::1] x, int kh, int kw, int sh, int sw, int ph, int pw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = (h + 2 * ph - kh) // sh + 1
    cdef int ow = (w + 2 * pw - kw) // sw + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out = np.empty((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] col = out
    cdef int b, ch, i, j, oy, ox, row, iy, base
    cdef int oy_lo, oy_hi, ox_lo, ox_hi
    cdef const real* src
    cdef real* dst
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    # valid oy range: 0 <= oy*sh + i - ph < h
                    oy_lo = int_max(0, (ph - i + sh - 1) // sh)
                    oy_hi = int_min(oh, (h - 1 - i + ph) // sh + 1)
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        ox_lo = int_max(0, (pw - j + sw - 1) // sw)
                        ox_hi = int_min(ow, (w - 1 - j + pw) // sw + 1)
                        base = j - pw
                        if oy_lo > 0:
                            memset(&col[b, row, 0], 0,
                                   oy_lo * ow * sizeof(real))
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * sh + i - ph
                            src = &x[b, ch, iy, 0]
                            dst = &col[b, row, oy * ow]
                            if ox_lo > 0:
                                memset(dst, 0, ox_lo * sizeof(real))
                            if sw == 1:
                                memcpy(dst + ox_lo, src + ox_lo + base,
                                       (ox_hi - ox_lo) * sizeof(real))
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox] = src[ox * sw + base]
                            if ox_hi < ow:
                                memset(dst + ox_hi, 0,
                                       (ow - ox_hi) * sizeof(real))
                        if oy_hi < oh:
                            memset(&col[b, row, oy_hi * ow], 0,
                                   (oh - oy_hi) * ow * sizeof(real))
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def col2im(real[:, :, ::1] gcol, int h, int w, int kh, int kw, int sh, int sw,
           int ph, int pw):
    cdef int n = gcol.shape[0]
    cdef int c = gcol.shape[1] // (kh * kw)
    cdef int oh = (h + 2 * ph - kh) // sh + 1
    cdef int ow = (w + 2 * pw - kw) // sw + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = out
    cdef int b, ch, i, j, oy, ox, row, iy, base
    cdef int oy_lo, oy_hi, ox_lo, ox_hi
    cdef const real* src
    cdef real* dst
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    oy_lo = int_max(0, (ph - i + sh - 1) // sh)
                    oy_hi = int_min(oh, (h - 1 - i + ph) // sh + 1)
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        ox_lo = int_max(0, (pw - j + sw - 1) // sw)
                        ox_hi = int_min(ow, (w - 1 - j + pw) // sw + 1)
                        base = j - pw
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * sh + i - ph
                            dst = &gx[b, ch, iy, 0]
                            src = &gcol[b, row, oy * ow]
                            if sw == 1:
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox + base] += src[ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    dst[ox * sw + base] += src[ox]
    return out
