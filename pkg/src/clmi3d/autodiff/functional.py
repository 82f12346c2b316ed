"""Differentiable operations. Feature axis is always last (channels-last)."""
from __future__ import annotations

import builtins

import numpy as np
import scipy.fft as sfft
from scipy.special import expit

from ..errors import DegenerateBatch, LabelOutOfRange, ShapeMismatch
from .tensor import Tensor, make_node


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- elementwise / structural ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")
    return make_node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_node(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_node(np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten of everything but the batch axis."""
    return reshape(x, (x.shape[0], -1))


def concat(tensors, axis: int = -1) -> Tensor:
    axis = axis % tensors[0].data.ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.maximum(x.data, 0), (x,), lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_node(s, (x,), backward_fn)


def dropout_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a fixed (already scaled) mask."""
    mask = mask.astype(x.dtype)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) in training, identity otherwise."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0:
        return x
    keep = rng.random(x.shape) >= p
    return dropout_mask(x, keep / (1.0 - p))


# --- dense ---------------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense: input {x.shape}, weights {w.shape}, bias {b.shape}")
    out = x.data @ w.data + b.data

    def backward_fn(g):
        x2 = x.data.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return g @ w.data.T, x2.T @ g2, g2.sum(axis=0)

    return make_node(out, (x, w, b), backward_fn)


# --- convolution ---------------------------------------------------------

def _fft_shape(dims, kernel) -> tuple[int, ...]:
    # long enough that the linear convolution never wraps around
    return tuple(sfft.next_fast_len(d + k - 1, real=True) for d, k in zip(dims, kernel))


def _freq_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(B, *freq, I) x (*freq, I, O) -> (B, *freq, O), one small matmul per frequency."""
    bsz, fshape, i = a.shape[0], a.shape[1:-1], a.shape[-1]
    n = int(np.prod(fshape))
    out = np.matmul(a.reshape(bsz, n, i).transpose(1, 0, 2), b.reshape(n, i, -1))
    return out.transpose(1, 0, 2).reshape((bsz,) + fshape + (out.shape[-1],))


def _embed_kernels(weights, kmax) -> np.ndarray:
    """Centre every (k1, k2, k3, Cin, Cout_i) kernel in a kmax box and stack along Cout."""
    cin = weights[0].shape[3]
    total = builtins.sum(w.shape[4] for w in weights)
    out = np.zeros(tuple(kmax) + (cin, total), dtype=weights[0].dtype)
    col = 0
    for w in weights:
        off = [(m - k) // 2 for m, k in zip(kmax, w.shape[:3])]
        cout = w.shape[4]
        out[off[0] : off[0] + w.shape[0], off[1] : off[1] + w.shape[1], off[2] : off[2] + w.shape[2], :, col : col + cout] = w
        col += cout
    return out


def multiscale_conv3d(x: Tensor, weights, biases) -> Tensor:
    """Several stride-1 'same' cross-correlations of one input, concatenated on the feature axis.

    x: (B, D1, D2, D3, Cin); weights[i]: (k1, k2, k3, Cin, Cout_i) with odd
    sizes, zero padding (k - 1) / 2 per side; biases[i]: (Cout_i,).

    All branches share one FFT pass: each kernel is centred inside the largest
    one, which leaves its 'same' output unchanged. The correlation is a
    linear convolution with the flipped kernel; output index i reads the full
    convolution at i + (kmax - 1) / 2. Backward applies the adjoint of each
    step (crop <-> zero-embed, multiply by conjugate spectra).
    """
    weights, biases = list(weights), list(biases)
    if x.data.ndim != 5 or any(w.data.ndim != 5 for w in weights):
        raise ShapeMismatch(f"conv3d: expected 5-D input and weights, got {x.shape}, {[w.shape for w in weights]}")
    cin = x.shape[-1]
    for w, b in zip(weights, biases):
        if w.shape[3] != cin or b.shape != (w.shape[4],):
            raise ShapeMismatch(f"conv3d: input {x.shape}, weights {w.shape}, bias {b.shape}")
        if any(k % 2 == 0 for k in w.shape[:3]):
            raise ShapeMismatch(f"conv3d: kernel sizes must be odd, got {w.shape[:3]}")
    kmax = tuple(max(w.shape[a] for w in weights) for a in range(3))
    dims = x.shape[1:4]
    shape = _fft_shape(dims, kmax)
    axes = (1, 2, 3)
    pads = [(k - 1) // 2 for k in kmax]
    crop = (slice(None),) + tuple(slice(p, p + d) for p, d in zip(pads, dims))
    dtype = np.result_type(x.data, weights[0].data)

    kernel = _embed_kernels([w.data for w in weights], kmax)
    xf = sfft.rfftn(x.data, s=shape, axes=axes)
    hf = sfft.rfftn(kernel[::-1, ::-1, ::-1], s=shape, axes=(0, 1, 2))
    full = sfft.irfftn(_freq_matmul(xf, hf), s=shape, axes=axes)
    out = (full[crop] + np.concatenate([b.data for b in biases])).astype(dtype, copy=False)
    widths = np.cumsum([w.shape[4] for w in weights])[:-1]

    def backward_fn(g):
        g_full = np.zeros(full.shape, dtype=g.dtype)
        g_full[crop] = g
        gf = sfft.rfftn(g_full, s=shape, axes=axes)
        gx = gw = None
        if x.requires_grad:
            back = _freq_matmul(gf, np.conj(hf).swapaxes(-1, -2))
            gx = sfft.irfftn(back, s=shape, axes=axes)[(slice(None),) + tuple(slice(0, d) for d in dims)]
            gx = gx.astype(dtype, copy=False)
        n = int(np.prod(xf.shape[1:4]))
        bsz = x.shape[0]
        xm = np.conj(xf).reshape(bsz, n, cin).transpose(1, 2, 0)  # (F, Cin, B)
        gm = gf.reshape(bsz, n, -1).transpose(1, 0, 2)  # (F, B, Cout)
        cross = np.matmul(xm, gm).reshape(xf.shape[1:4] + (cin, gm.shape[-1]))
        dh = sfft.irfftn(cross, s=shape, axes=(0, 1, 2))[: kmax[0], : kmax[1], : kmax[2]]
        dk = dh[::-1, ::-1, ::-1]
        gws = []
        for w, part in zip(weights, np.split(dk, widths, axis=-1)):
            off = [(m - k) // 2 for m, k in zip(kmax, w.shape[:3])]
            gws.append(
                part[off[0] : off[0] + w.shape[0], off[1] : off[1] + w.shape[1], off[2] : off[2] + w.shape[2]]
                .astype(dtype, copy=True)
            )
        gbs = np.split(g.sum(axis=(0, 1, 2, 3)), widths)
        return (gx, *gws, *gbs)

    return make_node(out, (x, *weights, *biases), backward_fn)


def conv3d_same(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero padding (k-1)/2 per side; spatial dims preserved.

    x: (B, D1, D2, D3, Cin); w: (k1, k2, k3, Cin, Cout) with odd k; b: (Cout,).
    """
    return multiscale_conv3d(x, [w], [b])


# --- pooling ---------------------------------------------------------------

def maxpool3d_same(x: Tensor, pool=(2, 2, 2)) -> Tensor:
    """Non-overlapping max pool, stride = pool, output ceil(D / pool).

    Ragged edges are padded with -inf. Backward routes each gradient to the
    window's first maximum in row-major order.
    """
    bsz, d1, d2, d3, c = x.shape
    p1, p2, p3 = pool
    n1, n2, n3 = -(-d1 // p1), -(-d2 // p2), -(-d3 // p3)
    xp = np.pad(
        x.data,
        [(0, 0), (0, n1 * p1 - d1), (0, n2 * p2 - d2), (0, n3 * p3 - d3), (0, 0)],
        constant_values=-np.inf,
    )
    win = (
        xp.reshape(bsz, n1, p1, n2, p2, n3, p3, c)
        .transpose(0, 1, 3, 5, 7, 2, 4, 6)
        .reshape(bsz, n1, n2, n3, c, p1 * p2 * p3)
    )
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gw = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = (
            gw.reshape(bsz, n1, n2, n3, c, p1, p2, p3)
            .transpose(0, 1, 5, 2, 6, 3, 7, 4)
            .reshape(bsz, n1 * p1, n2 * p2, n3 * p3, c)
        )
        return (gx[:, :d1, :d2, :d3],)

    return make_node(out, (x,), backward_fn)


# --- normalization -------------------------------------------------------

def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-feature normalization over every axis but the last.

    In training, batch statistics (biased variance) are used and the running
    buffers are updated in place as ``r = momentum * r + (1 - momentum) * batch``.
    """
    axes = tuple(range(x.data.ndim - 1))
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatch("batchnorm needs a batch of at least 2 in training mode")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = (gamma.data * xhat + beta.data).astype(x.dtype, copy=False)
    n = x.data.size // x.shape[-1]

    def backward_fn(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        if training:
            dx = inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            dx = dxhat * inv_std
        return dx.astype(x.dtype, copy=False), dgamma, dbeta

    return make_node(out, (x, gamma, beta), backward_fn)


# --- recurrent -------------------------------------------------------------

def lstm(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    """Single-layer LSTM from zero state; returns every hidden state (B, T, H).

    Gate blocks along the 4H axis are ordered input, forget, cell, output.
    """
    bsz, steps, feats = x.shape
    hidden = w_h.shape[0]
    if w_x.shape != (feats, 4 * hidden) or w_h.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise ShapeMismatch(f"lstm: input {x.shape}, w_x {w_x.shape}, w_h {w_h.shape}, b {b.shape}")
    dtype = np.result_type(x.data, w_x.data)
    zx = x.data @ w_x.data + b.data
    hs = np.zeros((bsz, steps + 1, hidden), dtype=dtype)  # hs[:, 0] is the initial state
    cs = np.zeros((bsz, steps + 1, hidden), dtype=dtype)
    gates = np.empty((bsz, steps, 4 * hidden), dtype=dtype)
    tanh_c = np.empty((bsz, steps, hidden), dtype=dtype)
    H = hidden
    for t in range(steps):
        z = zx[:, t] + hs[:, t] @ w_h.data
        act = gates[:, t]
        act[:, : 2 * H] = expit(z[:, : 2 * H])
        act[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        act[:, 3 * H :] = expit(z[:, 3 * H :])
        cs[:, t + 1] = act[:, H : 2 * H] * cs[:, t] + act[:, :H] * act[:, 2 * H : 3 * H]
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = act[:, 3 * H :] * tanh_c[:, t]

    def backward_fn(g):
        dz = np.empty_like(gates)
        dh_next = np.zeros((bsz, H), dtype=dtype)
        dc_next = np.zeros((bsz, H), dtype=dtype)
        wh_t = w_h.data.T
        for t in range(steps - 1, -1, -1):
            i, f = gates[:, t, :H], gates[:, t, H : 2 * H]
            c_hat, o = gates[:, t, 2 * H : 3 * H], gates[:, t, 3 * H :]
            tc = tanh_c[:, t]
            dh = g[:, t] + dh_next
            dc = dh * o * (1 - tc * tc) + dc_next
            dz[:, t, :H] = dc * c_hat * i * (1 - i)
            dz[:, t, H : 2 * H] = dc * cs[:, t] * f * (1 - f)
            dz[:, t, 2 * H : 3 * H] = dc * i * (1 - c_hat * c_hat)
            dz[:, t, 3 * H :] = dh * tc * o * (1 - o)
            dc_next = dc * f
            dh_next = dz[:, t] @ wh_t
        dx = dz @ w_x.data.T
        dwx = np.tensordot(x.data, dz, axes=([0, 1], [0, 1]))
        dwh = np.tensordot(hs[:, :-1], dz, axes=([0, 1], [0, 1]))
        return dx, dwx, dwh, dz.sum(axis=(0, 1))

    return make_node(hs[:, 1:], (x, w_x, w_h, b), backward_fn)


def attention_pool(h: Tensor, w: Tensor, b: Tensor, v: Tensor) -> Tensor:
    """Additive temporal attention: e_t = v . tanh(h_t W + b), alpha = softmax_t(e), out = sum alpha_t h_t."""
    bsz, steps, hidden = h.shape
    if w.shape[0] != hidden or b.shape != (w.shape[1],) or v.shape != (w.shape[1],):
        raise ShapeMismatch(f"attention: hidden {h.shape}, W {w.shape}, b {b.shape}, v {v.shape}")
    u = np.tanh(h.data @ w.data + b.data)  # (B, T, A)
    e = u @ v.data  # (B, T)
    e = e - e.max(axis=1, keepdims=True)
    alpha = np.exp(e)
    alpha /= alpha.sum(axis=1, keepdims=True)
    out = np.einsum("bt,bth->bh", alpha, h.data)

    def backward_fn(g):
        dalpha = np.einsum("bh,bth->bt", g, h.data)
        de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dv = np.einsum("bt,bta->a", de, u)
        dpre = de[:, :, None] * v.data * (1 - u * u)
        dw = np.tensordot(h.data, dpre, axes=([0, 1], [0, 1]))
        db = dpre.sum(axis=(0, 1))
        dh = alpha[:, :, None] * g[:, None, :] + dpre @ w.data.T
        return dh, dw, db, dv

    return make_node(out, (h, w, b, v), backward_fn)


# --- loss --------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    bsz, k = logits.shape
    if labels.shape != (bsz,):
        raise ShapeMismatch(f"cross_entropy: {bsz} logits rows, labels shape {labels.shape}")
    if bsz and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_z
    loss = -log_p[np.arange(bsz), labels].mean()

    def backward_fn(g):
        d = np.exp(log_p)
        d[np.arange(bsz), labels] -= 1
        return (d * (g / bsz),)

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)
