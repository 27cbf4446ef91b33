"""Layer primitives on ``(height, width, channels)`` arrays with exact backward passes."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ChannelMismatch, OddDimensions


def _im2col(x: np.ndarray) -> np.ndarray:
    """``(h*w, 9*c)`` patch matrix; columns ordered (ky, kx, cin) like the kernel."""
    h, w, c = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (h, w, c, 3, 3)
    return win.transpose(0, 1, 3, 4, 2).reshape(h * w, 9 * c)


def conv3x3(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size, zero-padded 3x3 convolution (cross-correlation).

    ``kernel`` has shape ``(3, 3, cin, cout)`` and ``bias`` ``(cout,)``.
    """
    return conv3x3_forward(x, kernel, bias)[0]


def conv3x3_forward(x, kernel, bias):
    h, w, c = x.shape
    if kernel.shape[:3] != (3, 3, c):
        raise ChannelMismatch(f"kernel {kernel.shape} does not accept {c} input channels")
    cols = _im2col(x)
    out = cols @ kernel.reshape(9 * c, -1) + bias
    return out.reshape(h, w, -1), (cols, kernel, x.shape)


def conv3x3_backward(dout: np.ndarray, cache, need_input_grad: bool = True):
    """Gradients w.r.t. input, kernel and bias for an upstream ``dout``.

    With ``need_input_grad=False`` the input gradient is returned as None.
    """
    cols, kernel, (h, w, c) = cache
    cout = kernel.shape[3]
    d2 = dout.reshape(h * w, cout)
    dkernel = (cols.T @ d2).reshape(kernel.shape)
    dbias = d2.sum(axis=0)
    if not need_input_grad:
        return None, dkernel, dbias
    # input gradient = same-padded conv of dout with the flipped, transposed kernel
    flipped = kernel[::-1, ::-1].transpose(0, 1, 3, 2).reshape(9 * cout, c)
    dx = (_im2col(dout) @ flipped).reshape(h, w, c)
    return dx, dkernel, dbias


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, active):
    return dout * active


def maxpool2(x: np.ndarray):
    """2x2/stride-2 max pooling.

    Returns ``(out, argmax)`` where argmax holds the winning window slot
    (0..3 in scan order; the first maximum wins ties).
    """
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise OddDimensions(f"max pooling needs even dims, got {h}x{w}")
    win = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 4, 1, 3).reshape(h // 2, w // 2, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(dout: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    h2, w2, c = dout.shape
    dwin = np.zeros((h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, argmax[..., None], dout[..., None], axis=-1)
    return dwin.reshape(h2, w2, c, 2, 2).transpose(0, 3, 1, 4, 2).reshape(2 * h2, 2 * w2, c)


def upsample_nn2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


def upsample_nn2_backward(dout: np.ndarray) -> np.ndarray:
    h, w, c = dout.shape
    return dout.reshape(h // 2, 2, w // 2, 2, c).sum(axis=(1, 3))
