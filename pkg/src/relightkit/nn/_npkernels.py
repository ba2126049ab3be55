"""Pure-numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable. The layout
contract is shared with the Cython backend:

  im2col:  (N, C, H, W) -> (N, C*kh*kw, OH*OW), zero padding implied
  col2im:  exact adjoint of im2col
"""

import numpy as np


def _out_dim(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, sh, sw, ph, pw):
    n, c, h, w = x.shape
    oh = _out_dim(h, kh, sh, ph)
    ow = _out_dim(w, kw, sw, pw)
    if ph or pw:
        xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        xp[:, :, ph:ph + h, pw:pw + w] = x
    else:
        xp = x
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            col[:, :, i, j] = xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
    return np.ascontiguousarray(col.reshape(n, c * kh * kw, oh * ow))


def col2im(gcol, h, w, kh, kw, sh, sw, ph, pw):
    n = gcol.shape[0]
    c = gcol.shape[1] // (kh * kw)
    oh = _out_dim(h, kh, sh, ph)
    ow = _out_dim(w, kw, sw, pw)
    g = gcol.reshape(n, c, kh, kw, oh, ow)
    gxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=gcol.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += g[:, :, i, j]
    if ph or pw:
        return np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + w])
    return gxp
