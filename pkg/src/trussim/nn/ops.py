"""Tensor operations with exact manual backprop.

Tensors are plain numpy arrays, (N, C, H, W) for spatial ops, row-major.
Every op preserves the input dtype, so training runs in float32 while
gradient checks can run in float64.  Convolution is cross-correlation (no
kernel flip); transposed convolution is defined as its exact adjoint with the
same stride and padding, which the tests verify through the inner-product
identity <conv(x), y> == <x, deconv(y)>.

Convolutions lower onto one GEMM per call via an explicit patch matrix
(im2col); passing a ``cache`` dict lets the backward pass reuse the patch
matrix built by the forward pass instead of rebuilding it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _cols_t(x: np.ndarray, kh: int, kw: int, stride: int, pad: int,
            hw: tuple[int, int]) -> np.ndarray:
    """Transposed patch matrix (kh * kw * C, N * Ho * Wo) of the padded input.

    The (u, v, c)-major layout keeps every per-offset block contiguous.  For
    strided convolutions the input is first split into stride x stride phase
    copies so that every block fill is a contiguous-row copy.
    """
    x_pad = _pad_hw(x, pad)
    n, c = x_pad.shape[:2]
    ho, wo = hw
    s = stride
    out = np.empty((kh * kw * c, n * ho * wo), dtype=x_pad.dtype)
    blocks = out.reshape(kh, kw, c, n, ho, wo)
    if s == 1:
        xt = np.ascontiguousarray(x_pad.transpose(1, 0, 2, 3))
        for u in range(kh):
            for v in range(kw):
                blocks[u, v] = xt[:, :, u:u + ho, v:v + wo]
        return out
    phases = {}
    for a in range(s):
        for b in range(s):
            phases[a, b] = np.ascontiguousarray(
                x_pad[:, :, a::s, b::s].transpose(1, 0, 2, 3))
    for u in range(kh):
        for v in range(kw):
            ph = phases[u % s, v % s]
            blocks[u, v] = ph[:, :, u // s:u // s + ho, v // s:v // s + wo]
    return out


def _scatter_t(gcols_t: np.ndarray, out_shape: tuple, kh: int, kw: int,
               stride: int, pad: int, hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of _cols_t: scatter-add per-offset blocks into (N, C, H, W)."""
    n, c, h, w = out_shape
    ho, wo = hw
    s = stride
    hp, wp = h + 2 * pad, w + 2 * pad
    blocks = gcols_t.reshape(kh, kw, c, n, ho, wo)
    acc = np.zeros((n, c, hp, wp), dtype=gcols_t.dtype)
    if s == 1:
        acc_t = np.zeros((c, n, hp, wp), dtype=gcols_t.dtype)
        for u in range(kh):
            for v in range(kw):
                acc_t[:, :, u:u + ho, v:v + wo] += blocks[u, v]
        acc = np.ascontiguousarray(acc_t.transpose(1, 0, 2, 3))
    else:
        for a in range(s):
            for b in range(s):
                pha = len(range(a, hp, s))
                phb = len(range(b, wp, s))
                pacc = np.zeros((c, n, pha, phb), dtype=gcols_t.dtype)
                for u in range(a, kh, s):
                    for v in range(b, kw, s):
                        pacc[:, :, u // s:u // s + ho, v // s:v // s + wo] += blocks[u, v]
                acc[:, :, a::s, b::s] = pacc.transpose(1, 0, 2, 3)
    if pad:
        acc = acc[:, :, pad:-pad, pad:-pad]
    return acc


def _w_mat(w: np.ndarray) -> np.ndarray:
    """Kernel reordered to match _cols_t: (kh * kw * C_in, C_out)."""
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(-1, w.shape[0])


def _nchw(mat: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    """(N*H*W, C) matrix back to a contiguous (N, C, H, W) tensor."""
    return np.ascontiguousarray(mat.reshape(n, h, w, -1).transpose(0, 3, 1, 2))


def _nhwc_mat(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) tensor to an (N*H*W, C) matrix."""
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, x.shape[1])


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                   stride: int = 1, pad: int = 0,
                   cache: dict | None = None) -> np.ndarray:
    """x (N, C, H, W) cross-correlated with w (O, C, kh, kw) -> (N, O, Ho, Wo)."""
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ValueError(f"channel mismatch: input {c}, kernel {cw}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ho, wo = _conv_out(h, kh, stride, pad), _conv_out(wd, kw, stride, pad)
    cols_t = _cols_t(x, kh, kw, stride, pad, (ho, wo))
    if cache is not None:
        cache["cols_t"] = cols_t
    out = _nchw(cols_t.T @ _w_mat(w), n, ho, wo)
    if b is not None:
        out += b[None, :, None, None]
    return out


def conv2d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray,
                    stride: int = 1, pad: int = 0, cache: dict | None = None,
                    need_input_grad: bool = True, need_weight_grad: bool = True):
    """Gradients (gx, gw, gb) of conv2d_forward for upstream gradient gy."""
    o, c, kh, kw = w.shape
    n, _, ho, wo = gy.shape
    gy_mat = _nhwc_mat(gy)
    gx = gw = None
    if need_weight_grad:
        cols_t = cache["cols_t"] if cache and "cols_t" in cache else \
            _cols_t(x, kh, kw, stride, pad, (ho, wo))
        gw_mat = cols_t @ gy_mat                     # (kh*kw*C, O)
        gw = np.ascontiguousarray(gw_mat.reshape(kh, kw, c, o).transpose(3, 2, 0, 1))
    if need_input_grad:
        gcols_t = _w_mat(w) @ gy_mat.T               # (kh*kw*C, N*Ho*Wo)
        gx = _scatter_t(gcols_t, x.shape, kh, kw, stride, pad, (ho, wo))
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gw, gb


def deconv_out_size(size: int, k: int, stride: int, pad: int, out_pad: int = 0) -> int:
    return (size - 1) * stride + k - 2 * pad + out_pad


def deconv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                     stride: int = 1, pad: int = 0,
                     out_hw: tuple[int, int] | None = None,
                     cache: dict | None = None) -> np.ndarray:
    """Transposed convolution: the adjoint of conv2d_forward with the same
    stride/pad.  x is (N, A, H, W), w is (A, B, kh, kw) -> (N, B, Ho, Wo).

    out_hw selects among the output sizes consistent with the adjoint shape
    relation (extra rows/cols must be < stride); default is the minimal one.
    """
    n, a, h, wd = x.shape
    aw, bch, kh, kw = w.shape
    if a != aw:
        raise ValueError(f"channel mismatch: input {a}, kernel {aw}")
    ho, wo = deconv_out_size(h, kh, stride, pad), deconv_out_size(wd, kw, stride, pad)
    if out_hw is not None:
        if not (0 <= out_hw[0] - ho < stride and 0 <= out_hw[1] - wo < stride):
            raise ValueError(f"out_hw {out_hw} incompatible with minimal ({ho}, {wo})")
        ho, wo = out_hw
    x_mat = _nhwc_mat(x)
    if cache is not None:
        cache["x_mat"] = x_mat
    # The adjoint conv maps B -> A, so the (kh*kw*B, A) kernel layout comes
    # from the same reorder with in/out channels swapped.
    w_t = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(-1, a)
    gcols_t = w_t @ x_mat.T                          # (kh*kw*B, N*H*W)
    out = _scatter_t(gcols_t, (n, bch, ho, wo), kh, kw, stride, pad, (h, wd))
    if b is not None:
        out += b[None, :, None, None]
    return out


def deconv2d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray,
                      stride: int = 1, pad: int = 0, cache: dict | None = None,
                      need_input_grad: bool = True, need_weight_grad: bool = True):
    """Gradients (gx, gw, gb) of deconv2d_forward for upstream gradient gy."""
    a, bch, kh, kw = w.shape
    n, _, h, wd = x.shape
    # Patches of gy at x's window positions; when out_hw added output padding
    # the trailing windows never received contributions, so (h, wd) as the
    # window count drops them.
    cols_t = _cols_t(gy, kh, kw, stride, pad, (h, wd))
    gx = gw = None
    w_t = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(-1, a)
    if need_input_grad:
        gx = _nchw(cols_t.T @ w_t, n, h, wd)
    if need_weight_grad:
        x_mat = cache["x_mat"] if cache and "x_mat" in cache else _nhwc_mat(x)
        gw_mat = cols_t @ x_mat                      # (kh*kw*B, A)
        gw = np.ascontiguousarray(gw_mat.reshape(kh, kw, bch, a).transpose(3, 2, 0, 1))
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gw, gb


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, stride 2.  Odd spatial dims are padded with -inf.
    Returns the pooled tensor and flat argmax indices (0..3 per window,
    first-position tie-break)."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, 0), (0, h % 2), (0, w % 2)),
                   constant_values=-np.inf)
        n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(gy: np.ndarray, idx: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, c, h, w = x_shape
    win = np.zeros((n, c, h // 2, w // 2, 4), dtype=gy.dtype)
    np.put_along_axis(win, idx[..., None], gy[..., None], axis=-1)
    win = win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, h, w)


def unpool(y: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
    """2x2 unpooling.  With recorded indices, values scatter back to their
    argmax positions; without (the generative decoder path), each value goes
    to the top-left slot of its window.  Other positions are zero."""
    n, c, h, w = y.shape
    if idx is None:
        idx = np.zeros(y.shape, dtype=np.intp)
    if idx.shape != y.shape:
        raise ValueError(f"indices shape {idx.shape} does not match {y.shape}")
    win = np.zeros((n, c, h, w, 4), dtype=y.dtype)
    np.put_along_axis(win, idx[..., None], y[..., None], axis=-1)
    win = win.reshape(n, c, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, 2 * h, 2 * w)


def unpool_backward(gy: np.ndarray, idx: np.ndarray | None, y_shape: tuple) -> np.ndarray:
    n, c, h, w = y_shape
    win = gy.reshape(n, c, h, 2, w, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w, 4)
    if idx is None:
        idx = np.zeros(y_shape, dtype=np.intp)
    return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """x (N, F) @ w (F, G) + b."""
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape} vs w {w.shape}")
    out = x @ w
    if b is not None:
        out += b
    return out


def linear_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray,
                    need_input_grad: bool = True, need_weight_grad: bool = True):
    gx = gy @ w.T if need_input_grad else None
    gw = x.T @ gy if need_weight_grad else None
    return gx, gw, gy.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, gy, 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.01) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_backward(x: np.ndarray, gy: np.ndarray, slope: float = 0.01) -> np.ndarray:
    return np.where(x > 0.0, gy, slope * gy)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Backward from the forward *output* y = sigmoid(x)."""
    return gy * y * (1.0 - y)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean square error over all elements and its gradient wrt pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correct1 = 1.0 - b1 ** state.t
    correct2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
    return state
