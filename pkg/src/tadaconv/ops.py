"""Differentiable numpy primitives.

Convolutions are cross-correlations with zero padding.  All functions accept
plain ndarrays or :class:`~tadaconv.autodiff.Var` and keep the input dtype
(float32 or float64).  Layout conventions:

* video activations ``[N, C, T, H, W]``
* frame descriptors ``[N, T, C]``
* 2D conv input ``[N, C, H, W]``; 1D conv input ``[N, C, L]``
"""
from __future__ import annotations

import contextlib
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .autodiff import Var, nograd, primitive, register, value_of

__all__ = [
    "ConvKernel", "NormParams", "ShapeError",
    "add", "sub", "mul", "reshape", "transpose", "getitem", "mean", "matmul",
    "conv2d", "conv2d_raw", "conv1d", "linear", "gap_spatial", "gap_temporal",
    "normalize", "activate", "relu", "gelu", "softmax", "pool_temporal",
    "frames_to_batch", "batch_to_frames", "framewise_conv2d", "count_macs",
]

_MAC_COUNTERS: list[Counter] = []


@contextlib.contextmanager
def count_macs():
    """Tally forward multiply-accumulates of conv1d/conv2d/linear/matmul calls.

    Yields a :class:`collections.Counter` keyed by op kind.  Elementwise work
    (kernel calibration, norms, activations) is not counted.
    """
    counter = Counter()
    _MAC_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _MAC_COUNTERS.remove(counter)


def _tally(kind, macs):
    for c in _MAC_COUNTERS:
        c[kind] += int(macs)


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when tensor dimensions are inconsistent with an operation."""


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvKernel:
    """Convolution weights plus hyperparameters.

    ``weight`` is ``[C_out, C_in/groups, K_h, K_w]`` for 2D or
    ``[C_out, C_in/groups, K]`` for 1D kernels.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    stride: int | tuple[int, int] = 1
    padding: int | tuple[int, int] = 0
    groups: int = 1

    def __post_init__(self):
        w = value_of(self.weight)
        if w.ndim not in (3, 4):
            raise ShapeError(f"kernel weight must be 3D or 4D, got shape {w.shape}")
        if self.groups < 1 or w.shape[0] % self.groups:
            raise ShapeError(f"C_out={w.shape[0]} not divisible by groups={self.groups}")
        if self.bias is not None and value_of(self.bias).shape != (w.shape[0],):
            raise ShapeError(f"bias shape {value_of(self.bias).shape} != ({w.shape[0]},)")

    @property
    def out_channels(self) -> int:
        return value_of(self.weight).shape[0]

    @property
    def in_channels(self) -> int:
        return value_of(self.weight).shape[1] * self.groups

    @property
    def kernel_size(self) -> tuple[int, ...]:
        return tuple(value_of(self.weight).shape[2:])

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    @classmethod
    def init(cls, rng: np.random.Generator, cout: int, cin: int, k, *, ndim=2, groups=1,
             bias=True, stride=1, padding=None, dtype=np.float64) -> "ConvKernel":
        """Uniform fan-in initialisation, bound ``1/sqrt(fan_in)``."""
        ks = (k,) * ndim if isinstance(k, int) else tuple(k)
        if cin % groups:
            raise ShapeError(f"C_in={cin} not divisible by groups={groups}")
        fan_in = (cin // groups) * int(np.prod(ks))
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(cout, cin // groups, *ks)).astype(dtype)
        b = rng.uniform(-bound, bound, size=(cout,)).astype(dtype) if bias else None
        if padding is None:
            padding = ks[0] // 2 if ndim == 1 else (ks[0] // 2, ks[1] // 2)
        return cls(w, b, stride=stride, padding=padding, groups=groups)


@dataclass(frozen=True, eq=False)
class NormParams:
    """Affine normalisation parameters.

    ``kind`` is ``"batchnorm"`` (inference mode, fixed running statistics) or
    ``"layernorm"`` (statistics over the channel axis at each position).
    """

    kind: str
    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray | None = nograd(default=None)
    running_var: np.ndarray | None = nograd(default=None)
    eps: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("batchnorm", "layernorm"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.kind == "batchnorm":
            if self.running_mean is None or self.running_var is None:
                raise ValueError("batchnorm needs running_mean and running_var")
            if np.any(np.asarray(self.running_var) < 0):
                raise ValueError("running_var must be non-negative")

    @property
    def channels(self) -> int:
        return value_of(self.scale).shape[0]

    @classmethod
    def identity(cls, c: int, kind="batchnorm", dtype=np.float64, eps=1e-5) -> "NormParams":
        """gamma=1, beta=0 and (batchnorm) mean=0, var=1."""
        one, zero = np.ones(c, dtype), np.zeros(c, dtype)
        if kind == "batchnorm":
            return cls(kind, one, zero, zero.copy(), one.copy(), eps)
        return cls(kind, one, zero, eps=eps)

    @classmethod
    def zeros(cls, c: int, kind="batchnorm", dtype=np.float64, eps=1e-5) -> "NormParams":
        """gamma=0, beta=0: maps every finite input to exactly zero."""
        p = cls.identity(c, kind, dtype, eps)
        return cls(kind, np.zeros(c, dtype), np.zeros(c, dtype), p.running_mean, p.running_var, eps)

    @classmethod
    def random(cls, rng: np.random.Generator, c: int, kind="batchnorm", dtype=np.float64) -> "NormParams":
        """Non-trivial parameters for tests and demos."""
        scale = rng.uniform(0.5, 1.5, c).astype(dtype)
        shift = rng.uniform(-0.2, 0.2, c).astype(dtype)
        if kind == "batchnorm":
            return cls(kind, scale, shift, rng.uniform(-0.2, 0.2, c).astype(dtype),
                       rng.uniform(0.5, 1.5, c).astype(dtype))
        return cls(kind, scale, shift)

    def zeroed(self) -> "NormParams":
        z = np.zeros_like(value_of(self.scale))
        return NormParams(self.kind, z, z.copy(), self.running_mean, self.running_var, self.eps)


# ---------------------------------------------------------------------------
# Elementwise and structural primitives
# ---------------------------------------------------------------------------

def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _shape(a):
    return np.shape(a)


@primitive
def _add(a, b):
    out = a + b
    sa, sb = _shape(a), _shape(b)
    return out, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))


@primitive
def _sub(a, b):
    out = a - b
    sa, sb = _shape(a), _shape(b)
    return out, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))


@primitive
def _mul(a, b):
    out = a * b
    sa, sb = _shape(a), _shape(b)
    return out, lambda g: (_unbroadcast(g * b, sa), _unbroadcast(g * a, sb))


add, sub, mul = _add, _sub, _mul


@primitive
def _reshape(x, *, shape):
    src = x.shape
    return x.reshape(shape), lambda g: (g.reshape(src),)


def reshape(x, shape):
    return _reshape(x, shape=tuple(shape))


@primitive
def _transpose(x, *, axes):
    inv = tuple(np.argsort(axes))
    return np.ascontiguousarray(x.transpose(axes)), lambda g: (g.transpose(inv),)


def transpose(x, axes):
    return _transpose(x, axes=tuple(axes))


@primitive
def _getitem(x, *, index):
    def bwd(g):
        gx = np.zeros_like(x)
        gx[index] = g
        return (gx,)
    return x[index], bwd


def getitem(x, index):
    """Basic (slice/int) indexing."""
    return _getitem(x, index=index)


@primitive
def _mean(x, *, axis):
    out = x.mean(axis=axis)
    count = int(np.prod([x.shape[a] for a in axis]))

    def bwd(g):
        g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype, copy=True),)
    return out, bwd


def mean(x, axis):
    axis = (axis,) if isinstance(axis, int) else tuple(axis)
    nd = value_of(x).ndim
    return _mean(x, axis=tuple(a % nd for a in axis))


@primitive
def _matmul(a, b):
    out = np.matmul(a, b)
    if _MAC_COUNTERS:
        _tally("matmul", out.size * a.shape[-1])

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b, -1, -2))
        gb = np.matmul(np.swapaxes(a, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return out, bwd


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    return _matmul(a, b)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _conv_geometry(x, w, stride, padding, groups):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects input [N,C,H,W], got shape {x.shape}")
    if w.ndim not in (4, 5):
        raise ShapeError(f"conv2d expects weight [O,C/g,kh,kw] or [N,O,C/g,kh,kw], got {w.shape}")
    n, c, h, wd = x.shape
    o, cg, kh, kw = w.shape[-4:]
    if w.ndim == 5 and w.shape[0] != n:
        raise ShapeError(f"per-sample weight batch {w.shape[0]} != input batch {n}")
    if groups < 1 or c % groups or o % groups:
        raise ShapeError(f"channels C_in={c}, C_out={o} not divisible by groups={groups}")
    if cg * groups != c:
        raise ShapeError(f"input has {c} channels but kernel expects {cg * groups} (C_in/groups={cg}, groups={groups})")
    (sh, sw), (ph, pw) = stride, padding
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ShapeError(f"invalid stride {stride} / padding {padding}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"empty conv output: input {h}x{wd}, kernel {kh}x{kw}, padding {padding}, stride {stride}")
    return n, c, h, wd, o, cg, kh, kw, ho, wo


@primitive
def _conv2d(x, w, b, *, stride, padding, groups, tag="conv2d"):
    n, c, h, wd, o, cg, kh, kw, ho, wo = _conv_geometry(x, w, stride, padding, groups)
    if _MAC_COUNTERS:
        _tally(tag, n * o * ho * wo * cg * kh * kw)
    (sh, sw), (ph, pw) = stride, padding
    g_, og = groups, o // groups
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    # [N, G, Cg*kh*kw, Ho*Wo]
    cols = np.ascontiguousarray(
        win.reshape(n, g_, cg, ho, wo, kh, kw).transpose(0, 1, 2, 5, 6, 3, 4)
    ).reshape(n, g_, cg * kh * kw, ho * wo)
    wg = np.ascontiguousarray(w).reshape(w.shape[0] if w.ndim == 5 else 1, g_, og, cg * kh * kw)
    out = np.matmul(wg, cols).reshape(n, o, ho, wo)
    if b is not None:
        out = out + b[None, :, None, None]

    def bwd(gy):
        gout = gy.reshape(n, g_, og, ho * wo)
        gw = np.matmul(gout, cols.transpose(0, 1, 3, 2))
        if w.ndim == 4:
            gw = gw.sum(axis=0)
        gw = gw.reshape(w.shape)
        gcols = np.matmul(wg.transpose(0, 1, 3, 2), gout)
        gcols = gcols.reshape(n, c, kh, kw, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += gcols[:, :, i, j]
        gx = gxp[:, :, ph:ph + h, pw:pw + wd]
        gb = None if b is None else gy.sum(axis=(0, 2, 3))
        return gx, gw, gb

    return out, bwd


def conv2d_raw(x, w, b=None, *, stride=1, padding=0, groups=1, tag="conv2d"):
    """2D cross-correlation with explicit weights.

    ``w`` may be a shared kernel ``[O, C/g, kh, kw]`` or a per-sample stack
    ``[N, O, C/g, kh, kw]`` (one kernel per batch item, used for per-frame
    calibrated kernels).  Per-sample and shared kernels run the same matmul per
    item, so equal kernels give bit-identical outputs.
    """
    return _conv2d(x, w, b, stride=_pair(stride), padding=_pair(padding), groups=int(groups), tag=tag)


def conv2d(x, k: ConvKernel):
    """2D convolution of ``x[N, C_in, H, W]`` with a :class:`ConvKernel`."""
    if value_of(k.weight).ndim != 4:
        raise ShapeError(f"conv2d needs a 4D kernel, got {value_of(k.weight).shape}")
    return conv2d_raw(x, k.weight, k.bias, stride=k.stride, padding=k.padding, groups=k.groups)


def conv1d(x, k: ConvKernel):
    """1D convolution of ``x[N, C_in, L]`` along its last axis."""
    xv, wv = value_of(x), value_of(k.weight)
    if xv.ndim != 3:
        raise ShapeError(f"conv1d expects input [N,C,L], got shape {xv.shape}")
    if wv.ndim != 3:
        raise ShapeError(f"conv1d needs a 3D kernel, got {wv.shape}")
    n, c, length = xv.shape
    o, cg, kk = wv.shape
    stride = k.stride if isinstance(k.stride, int) else k.stride[-1]
    pad = k.padding if isinstance(k.padding, int) else k.padding[-1]
    y = conv2d_raw(reshape(x, (n, c, 1, length)), reshape(k.weight, (o, cg, 1, kk)), k.bias,
                   stride=(1, stride), padding=(0, pad), groups=k.groups, tag="conv1d")
    return reshape(y, (n, o, value_of(y).shape[-1]))


def frames_to_batch(x):
    """``[N, C, T, H, W] -> [N*T, C, H, W]``."""
    n, c, t, h, w = value_of(x).shape
    return reshape(transpose(x, (0, 2, 1, 3, 4)), (n * t, c, h, w))


def batch_to_frames(y, n: int, t: int):
    """``[N*T, C, H, W] -> [N, C, T, H, W]``."""
    _, c, h, w = value_of(y).shape
    return transpose(reshape(y, (n, t, c, h, w)), (0, 2, 1, 3, 4))


def framewise_conv2d(x, k: ConvKernel):
    """Apply one shared 2D kernel to every frame of ``x[N, C, T, H, W]``."""
    xv = value_of(x)
    if xv.ndim != 5:
        raise ShapeError(f"expected [N,C,T,H,W], got shape {xv.shape}")
    return batch_to_frames(conv2d(frames_to_batch(x), k), xv.shape[0], xv.shape[2])


# ---------------------------------------------------------------------------
# Linear maps and pooling
# ---------------------------------------------------------------------------

@primitive
def _linear(x, w, b):
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input trailing dim {x.shape[-1]} does not match weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias shape {b.shape} != ({w.shape[0]},)")
    out = np.matmul(x, w.T)
    if _MAC_COUNTERS:
        _tally("linear", out.size * w.shape[1])
    if b is not None:
        out = out + b

    def bwd(g):
        g2 = g.reshape(-1, w.shape[0])
        x2 = x.reshape(-1, w.shape[1])
        return g @ w, g2.T @ x2, None if b is None else g2.sum(axis=0)
    return out, bwd


def linear(x, w, b=None):
    """Affine map over the trailing axis: ``x @ w.T + b``."""
    return _linear(x, w, b)


def gap_spatial(x):
    """Per-frame descriptors: ``[N, C, T, H, W] -> [N, T, C]`` (spatial mean)."""
    if value_of(x).ndim != 5:
        raise ShapeError(f"gap_spatial expects [N,C,T,H,W], got shape {value_of(x).shape}")
    return transpose(mean(x, (3, 4)), (0, 2, 1))


def gap_temporal(v):
    """Global descriptor: ``[N, T, C] -> [N, C]`` (mean over frames)."""
    if value_of(v).ndim != 3:
        raise ShapeError(f"gap_temporal expects [N,T,C], got shape {value_of(v).shape}")
    return mean(v, 1)


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

def _bshape(ndim, axis, c):
    s = [1] * ndim
    s[axis] = c
    return tuple(s)


@primitive
def _batchnorm(x, gamma, beta, rmean, rvar, *, eps, axis):
    bs = _bshape(x.ndim, axis, x.shape[axis])
    inv = (1.0 / np.sqrt(rvar + eps)).astype(x.dtype)
    xhat = (x - rmean.reshape(bs)) * inv.reshape(bs)
    out = xhat * gamma.reshape(bs) + beta.reshape(bs)
    others = tuple(a for a in range(x.ndim) if a != axis)

    def bwd(g):
        gx = g * (gamma * inv).reshape(bs)
        return gx, (g * xhat).sum(axis=others), g.sum(axis=others), None, None
    return out, bwd


@primitive
def _layernorm(x, gamma, beta, *, eps, axis):
    bs = _bshape(x.ndim, axis, x.shape[axis])
    mu = x.mean(axis=axis, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.reshape(bs) + beta.reshape(bs)
    others = tuple(a for a in range(x.ndim) if a != axis)

    def bwd(g):
        gxhat = g * gamma.reshape(bs)
        gx = inv * (gxhat - gxhat.mean(axis=axis, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True))
        return gx, (g * xhat).sum(axis=others), g.sum(axis=others)
    return out, bwd


def normalize(x, p: NormParams, axis: int = 1):
    """Batch norm (inference statistics) or layer norm over ``axis``."""
    xv = value_of(x)
    axis = axis % xv.ndim
    if xv.shape[axis] != p.channels:
        raise ShapeError(f"normalize: axis {axis} has {xv.shape[axis]} channels, params have {p.channels}")
    if p.kind == "batchnorm":
        return _batchnorm(x, p.scale, p.shift, p.running_mean, p.running_var, eps=p.eps, axis=axis)
    return _layernorm(x, p.scale, p.shift, eps=p.eps, axis=axis)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

@primitive
def _relu(x):
    mask = x > 0
    return np.where(mask, x, np.zeros((), x.dtype)), lambda g: (g * mask,)


@primitive
def _gelu(x):
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    out = x * cdf

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf)).astype(x.dtype, copy=False),
    return out.astype(x.dtype, copy=False), bwd


@primitive
def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)
    return y, bwd


relu, gelu, softmax = _relu, _gelu, _softmax

_ACTIVATIONS = {"relu": _relu, "gelu": _gelu, "softmax": _softmax, "softmax_lastdim": _softmax}


def activate(x, kind: str):
    """``kind`` in {relu, gelu, softmax_lastdim}; GELU uses the exact erf form."""
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# ---------------------------------------------------------------------------
# Temporal pooling
# ---------------------------------------------------------------------------

def _pool_windows(t, k, stride, pad):
    if k < 1 or stride < 1 or pad < 0:
        raise ValueError(f"invalid pooling k={k}, stride={stride}, pad={pad}")
    to = (t + 2 * pad - k) // stride + 1
    if to < 1:
        raise ShapeError(f"temporal pooling produces no output: T={t}, k={k}, pad={pad}, stride={stride}")
    idx = np.arange(to)[:, None] * stride - pad + np.arange(k)[None, :]
    valid = (idx >= 0) & (idx < t)
    counts = valid.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError(f"empty pooling window (T={t}, k={k}, pad={pad})")
    return to, np.clip(idx, 0, t - 1), valid, counts


@primitive
def _avgpool_t(x, *, k, stride, pad):
    t = x.shape[2]
    to, idx, valid, counts = _pool_windows(t, k, stride, pad)
    xg = x[:, :, idx]  # [N, C, T', k, H, W]
    m = valid[None, None, :, :, None, None]
    total = np.where(m, xg, np.zeros((), x.dtype)).sum(axis=3)
    cnt = counts.astype(x.dtype)[None, None, :, None, None]
    out = total / cnt

    def bwd(g):
        gx = np.zeros_like(x)
        share = g / cnt
        for j in range(k):
            sel = valid[:, j]
            gx[:, :, idx[sel, j]] += share[:, :, sel]
        return (gx,)
    return out, bwd


@primitive
def _maxpool_t(x, *, k, stride, pad):
    t = x.shape[2]
    to, idx, valid, _ = _pool_windows(t, k, stride, pad)
    xg = x[:, :, idx]
    m = valid[None, None, :, :, None, None]
    masked = np.where(m, xg, np.array(-np.inf, x.dtype))
    arg = masked.argmax(axis=3)
    out = np.take_along_axis(masked, arg[:, :, :, None], axis=3)[:, :, :, 0]

    def bwd(g):
        gx = np.zeros_like(x)
        for j in range(k):
            sel = valid[:, j]
            hit = arg[:, :, sel] == j
            gx[:, :, idx[sel, j]] += np.where(hit, g[:, :, sel], np.zeros((), g.dtype))
        return (gx,)
    return out, bwd


def pool_temporal(x, kind: str = "avg", k: int = 3, stride: int = 1, pad: int | None = None):
    """Pool ``x[N, C, T, H, W]`` along T only.

    The average divides by the number of in-range frames in each window, so
    zero padding never attenuates boundary frames.  ``mix`` is the mean of the
    average and max results.  Defaults keep T unchanged (k=3, stride 1, pad 1).
    """
    if value_of(x).ndim != 5:
        raise ShapeError(f"pool_temporal expects [N,C,T,H,W], got shape {value_of(x).shape}")
    if pad is None:
        pad = k // 2
    if kind == "avg":
        return _avgpool_t(x, k=k, stride=stride, pad=pad)
    if kind == "max":
        return _maxpool_t(x, k=k, stride=stride, pad=pad)
    if kind == "mix":
        return mul(add(_avgpool_t(x, k=k, stride=stride, pad=pad),
                       _maxpool_t(x, k=k, stride=stride, pad=pad)), 0.5)
    raise ValueError(f"unknown pooling kind {kind!r}")


# Registered for vjp_op lookups by name.
register("conv2d")(lambda x, k: conv2d(x, k))
register("conv1d")(lambda x, k: conv1d(x, k))
register("linear")(lambda x, w, b: linear(x, w, b))
register("gap_spatial")(gap_spatial)
register("gap_temporal")(gap_temporal)
register("normalize")(lambda x, p: normalize(x, p))
register("relu")(relu)
register("gelu")(gelu)
register("softmax")(softmax)
register("pool_avg")(lambda x: pool_temporal(x, "avg"))
register("pool_max")(lambda x: pool_temporal(x, "max"))
register("pool_mix")(lambda x: pool_temporal(x, "mix"))
register("matmul")(matmul)
