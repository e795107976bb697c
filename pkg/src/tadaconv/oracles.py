"""Independent references and executable identities.

Nothing here reuses the im2col/matmul path of :mod:`tadaconv.ops`; the
convolutions are plain nested loops accumulating in float64, so they can
serve as oracles for the fast kernels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import ops
from .autodiff import tree_map, vjp, value_of
from .layer import TAdaConvParams, calibrate_weights, tadaconv_forward
from .ops import ConvKernel, ShapeError

__all__ = [
    "naive_conv2d", "naive_conv1d", "relu_mask", "r21d_literal", "r21d_decomposed",
    "r21d_decompose_check", "perframe_kernel_oracle", "finite_diff_check", "GradCheckResult",
]

MAX_ORACLE_DIM = 16


def _limit(shape):
    if any(s > MAX_ORACLE_DIM for s in shape):
        raise ShapeError(f"oracle inputs are limited to {MAX_ORACLE_DIM} per axis, got {shape}")


def naive_conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """Nested-loop 2D cross-correlation, float64 accumulation, float64 result."""
    x = np.asarray(x, np.float64)
    w = np.asarray(weight, np.float64)
    _limit(x.shape)
    _limit(w.shape)
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    if cg * groups != c or o % groups:
        raise ShapeError(f"naive_conv2d: input {x.shape} incompatible with kernel {w.shape}, groups={groups}")
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    og = o // groups
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for oc in range(o):
            g = oc // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if bias is None else float(bias[oc])
                    for ci in range(cg):
                        cin = g * cg + ci
                        for u in range(kh):
                            r = i * sh + u - ph
                            if r < 0 or r >= h:
                                continue
                            for v in range(kw):
                                s = j * sw + v - pw
                                if 0 <= s < wd:
                                    acc += w[oc, ci, u, v] * x[b, cin, r, s]
                    out[b, oc, i, j] = acc
    return out


def naive_conv1d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """Nested-loop 1D cross-correlation along the last axis."""
    x = np.asarray(x, np.float64)
    w = np.asarray(weight, np.float64)
    _limit(x.shape)
    n, c, length = x.shape
    o, cg, k = w.shape
    if cg * groups != c or o % groups:
        raise ShapeError(f"naive_conv1d: input {x.shape} incompatible with kernel {w.shape}, groups={groups}")
    lo = (length + 2 * padding - k) // stride + 1
    og = o // groups
    out = np.zeros((n, o, lo))
    for b in range(n):
        for oc in range(o):
            g = oc // og
            for i in range(lo):
                acc = 0.0 if bias is None else float(bias[oc])
                for ci in range(cg):
                    for u in range(k):
                        r = i * stride + u - padding
                        if 0 <= r < length:
                            acc += w[oc, ci, u] * x[b, g * cg + ci, r]
                out[b, oc, i] = acc
    return out


# ---------------------------------------------------------------------------
# (2+1)D decomposition
# ---------------------------------------------------------------------------

def relu_mask(y):
    """Binary map ``M = [y > 0]`` with ``relu(y) == M * y`` exactly."""
    return (np.asarray(y) > 0).astype(np.asarray(y).dtype)


def _check_r21d(x, kernel: ConvKernel, beta):
    xv = np.asarray(x)
    if xv.ndim != 5 or xv.shape[0] != 1:
        raise ShapeError(f"expected x[1, C_i, T, H, W], got {xv.shape}")
    beta = np.asarray(beta)
    if beta.shape != (kernel.out_channels, 3):
        raise ShapeError(f"beta must be [C_o, 3] (a 3-tap depthwise temporal kernel), got {beta.shape}")
    return xv, beta


def r21d_literal(x, kernel: ConvKernel, beta, with_relu: bool):
    """Spatial conv, optional ReLU, then a 3-tap depthwise temporal conv.

    Frames outside ``[0, T)`` are zero.  Returns ``[C_o, T, H', W']``.
    """
    xv, beta = _check_r21d(x, kernel, beta)
    y = ops.framewise_conv2d(xv, kernel)[0]  # [C_o, T, H', W']
    a = ops.relu(y) if with_relu else y
    t = a.shape[1]
    out = np.zeros_like(a)
    for ti in range(t):
        acc = np.zeros_like(a[:, 0])
        for tau, b in zip((-1, 0, 1), beta.T):
            src = ti + tau
            if 0 <= src < t:
                acc = acc + b[:, None, None].astype(a.dtype) * a[:, src]
        out[:, ti] = acc
    return out


def _location_adaptive_conv(frame, wloc, kernel: ConvKernel):
    """``out[c,i,j] = sum_k wloc[c,i,j,k] * window(i,j)[k]`` for one frame."""
    kh, kw = kernel.kernel_size
    (sh, sw), (ph, pw) = ops._pair(kernel.stride), ops._pair(kernel.padding)
    xp = np.pad(frame, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]  # [C_i, H', W', kh, kw]
    ho, wo = wloc.shape[1], wloc.shape[2]
    win = win[:, :ho, :wo]
    return np.einsum("cijduv,dijuv->cij", wloc, win)


def r21d_decomposed(x, kernel: ConvKernel, beta, with_relu: bool):
    """Same output written as a sum of calibrated spatial convs over t-1, t, t+1.

    Without activation the kernel for neighbour ``tau`` is ``beta_tau * W``.
    With ReLU it becomes location dependent, ``beta_tau * M_tau(i,j) * W``,
    where ``M_tau`` is the binary mask of the spatial conv output.
    """
    xv, beta = _check_r21d(x, kernel, beta)
    if kernel.groups != 1:
        raise ShapeError("decomposition check expects a dense spatial kernel")
    w = np.asarray(value_of(kernel.weight))
    dt = xv.dtype
    t = xv.shape[2]
    frames = [xv[:, :, ti] for ti in range(t)]  # each [1, C_i, H, W]
    if with_relu:
        masks = [relu_mask(ops.conv2d(f, kernel)[0]) for f in frames]  # [C_o, H', W']
    outs = []
    for ti in range(t):
        acc = None
        for tau_idx, tau in enumerate((-1, 0, 1)):
            src = ti + tau
            if not 0 <= src < t:
                continue
            bt = beta[:, tau_idx].astype(dt)
            if with_relu:
                m = masks[src]
                wloc = (bt[:, None, None] * m)[:, :, :, None, None, None] * w[:, None, None]
                term = _location_adaptive_conv(frames[src][0], wloc, kernel)
                if kernel.bias is not None:
                    term = term + (bt[:, None, None] * m) * np.asarray(kernel.bias, dt)[:, None, None]
            else:
                wt = bt[:, None, None, None] * w
                bias = None if kernel.bias is None else bt * np.asarray(kernel.bias, dt)
                term = ops.conv2d_raw(frames[src], wt, bias, stride=kernel.stride, padding=kernel.padding)[0]
            acc = term if acc is None else acc + term
        outs.append(acc)
    return np.stack(outs, axis=1)


def r21d_decompose_check(x, kernel: ConvKernel, beta, with_relu: bool) -> float:
    """Max-abs difference between the literal and decomposed (2+1)D forms."""
    a = r21d_literal(x, kernel, beta, with_relu)
    b = r21d_decomposed(x, kernel, beta, with_relu)
    return float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))


# ---------------------------------------------------------------------------
# Per-frame kernel materialisation
# ---------------------------------------------------------------------------

def perframe_kernel_oracle(x, p: TAdaConvParams, alpha=None) -> float:
    """Max-abs gap between ``tadaconv_forward`` and naive per-frame convolution.

    Each frame's kernel is materialised from the calibration weights and run
    through :func:`naive_conv2d`.
    """
    y, alpha = tadaconv_forward(x, p, alpha, return_alpha=True)
    xv = np.asarray(x)
    n, _, t, _, _ = xv.shape
    s = p.alpha_size
    kernels = calibrate_weights(p.base.weight, np.asarray(alpha).reshape(n * t, s), p.dim)
    bias = None if p.base.bias is None else np.asarray(p.base.bias)
    worst = 0.0
    for b in range(n):
        for ti in range(t):
            ref = naive_conv2d(xv[b:b + 1, :, ti], kernels[b * t + ti], bias,
                               p.base.stride, p.base.padding, p.base.groups)[0]
            worst = max(worst, float(np.max(np.abs(ref - y[b, :, ti].astype(np.float64)))))
    return worst


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

@dataclass
class GradCheckResult:
    """Per-leaf worst relative error between reverse-mode and central differences.

    The relative error of a leaf is ``max|fd - ad| / max(max|ad|, max|fd|, floor)``
    over the checked coordinates.
    """

    errors: dict[str, float]
    sensitivity: dict[str, float]
    checked: dict[str, int]

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst(self) -> tuple[str, float]:
        return max(self.errors.items(), key=lambda kv: kv[1])


def _replace_leaf(args, target_path, new_value):
    def swap(leaf, path):
        return new_value if path == target_path else leaf
    return tuple(tree_map(swap, a, f"arg{i}") for i, a in enumerate(args))


def finite_diff_check(f, args: tuple, *, eps=1e-5, max_coords=200, seed=0, cotangent=None,
                      floor=1e-4) -> GradCheckResult:
    """Compare ``vjp`` gradients of ``sum(cotangent * f(*args))`` to central differences.

    Every trainable array in ``args`` is checked; leaves with more than
    ``max_coords`` elements are subsampled with a fixed seed.  Inputs must be
    float64.
    """
    rng = np.random.default_rng(seed)
    out = np.asarray(value_of(f(*args)))
    if out.dtype != np.float64:
        raise TypeError("finite-difference checks run in float64")
    cot = np.ones_like(out) if cotangent is None else np.asarray(cotangent, np.float64)
    _, grads = vjp(f, args, cot)

    def loss(a):
        val = np.asarray(value_of(f(*a)))
        if not np.all(np.isfinite(val)):
            raise FloatingPointError("non-finite output during finite differences")
        return float(np.sum(cot * val))

    leaves, grad_leaves = [], []
    for i, (a, g) in enumerate(zip(args, grads)):
        leaves += _prefixed_leaves(a, f"arg{i}")
        grad_leaves += _prefixed_leaves(g, f"arg{i}")

    errors, sens, checked = {}, {}, {}
    for (path, leaf), (_, g) in zip(leaves, grad_leaves):
        leaf = np.asarray(leaf)
        if leaf.dtype != np.float64:
            raise TypeError(f"{path} is {leaf.dtype}; finite differences need float64")
        size = leaf.size
        coords = np.arange(size) if size <= max_coords else rng.choice(size, max_coords, replace=False)
        fd = np.empty(len(coords))
        for j, flat in enumerate(coords):
            idx = np.unravel_index(flat, leaf.shape)
            plus, minus = leaf.copy(), leaf.copy()
            plus[idx] += eps
            minus[idx] -= eps
            fd[j] = (loss(_replace_leaf(args, path, plus)) - loss(_replace_leaf(args, path, minus))) / (2 * eps)
        ad = np.asarray(g).reshape(-1)[coords]
        scale = max(np.max(np.abs(ad)), np.max(np.abs(fd)), floor)
        errors[path] = float(np.max(np.abs(fd - ad)) / scale)
        sens[path] = float(np.max(np.abs(fd)))
        checked[path] = len(coords)
    return GradCheckResult(errors, sens, checked)


def _prefixed_leaves(tree, prefix):
    out = []

    def collect(leaf, path):
        out.append((path, leaf))
        return leaf

    tree_map(collect, tree, prefix)
    return out
