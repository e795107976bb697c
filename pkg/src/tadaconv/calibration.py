"""Calibration-weight generators.

Both generators map frame descriptors ``v[N, T, C]`` to per-frame calibration
weights ``alpha[N, T, C_alpha]`` of the form ``1 + F(v)``.  ``F`` ends with a
1D convolution over time; zeroing that last layer makes ``alpha`` exactly one
everywhere, so a freshly initialised adaptive conv reproduces its static base.

V1: two 1D convs over T with BN + ReLU in between, plus an optional global
descriptor (temporal mean of ``v``) injected through a linear map.

V2: 1D conv, LayerNorm + GELU, then a residual multi-head self-attention over
the T frame tokens before the final 1D conv.  No positional embedding is
added; the first 1D conv already mixes neighbouring frames.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import register, value_of
from .ops import ConvKernel, NormParams, ShapeError

__all__ = [
    "LinearParams", "CalibGenV1Params", "CalibGenV2Params", "MhsaParams",
    "calib_v1", "calib_v2", "mhsa", "attention_weights", "init_identity", "generate",
]


@dataclass(frozen=True, eq=False)
class LinearParams:
    weight: np.ndarray  # [D_out, D_in]
    bias: np.ndarray | None = None

    @classmethod
    def init(cls, rng, d_out, d_in, bias=True, dtype=np.float64):
        bound = 1.0 / math.sqrt(d_in)
        w = rng.uniform(-bound, bound, (d_out, d_in)).astype(dtype)
        b = rng.uniform(-bound, bound, d_out).astype(dtype) if bias else None
        return cls(w, b)

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)


@dataclass(frozen=True, eq=False)
class CalibGenV1Params:
    conv_reduce: ConvKernel          # 1D, C -> C/r, K1 taps
    bn: NormParams                   # batchnorm over C/r
    conv_expand: ConvKernel          # 1D, C/r -> C_alpha, K2 taps
    global_fc: LinearParams | None   # C -> C
    r: int = 4
    use_global: bool = True

    def __post_init__(self):
        c = self.conv_reduce.in_channels
        if self.r < 1 or c % self.r:
            raise ShapeError(f"C={c} not divisible by reduction ratio r={self.r}")
        if self.conv_reduce.out_channels != c // self.r:
            raise ShapeError(f"conv_reduce outputs {self.conv_reduce.out_channels} channels, expected C/r={c // self.r}")
        if self.conv_expand.in_channels != c // self.r:
            raise ShapeError("conv_expand input channels must equal C/r")
        if self.bn.channels != c // self.r:
            raise ShapeError("generator batchnorm must have C/r channels")
        if self.use_global and self.global_fc is None:
            raise ValueError("use_global=True requires global_fc")

    @property
    def in_channels(self) -> int:
        return self.conv_reduce.in_channels

    @property
    def out_channels(self) -> int:
        return self.conv_expand.out_channels

    @classmethod
    def random(cls, rng: np.random.Generator, c: int, *, r=4, k1=3, k2=3, out_channels=None,
               use_global=True, dtype=np.float64) -> "CalibGenV1Params":
        """Random parameters with a non-zero last layer (a trained surrogate)."""
        if c % r:
            raise ShapeError(f"C={c} not divisible by reduction ratio r={r}")
        out_channels = c if out_channels is None else out_channels
        red = ConvKernel.init(rng, c // r, c, k1, ndim=1, dtype=dtype)
        bn = NormParams.random(rng, c // r, "batchnorm", dtype)
        exp = ConvKernel.init(rng, out_channels, c // r, k2, ndim=1, dtype=dtype)
        fc = LinearParams.init(rng, c, c, dtype=dtype) if use_global else None
        return cls(red, bn, exp, fc, r=r, use_global=use_global)


@dataclass(frozen=True, eq=False)
class MhsaParams:
    heads: int
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    b_q: np.ndarray | None = None
    b_k: np.ndarray | None = None
    b_v: np.ndarray | None = None
    b_o: np.ndarray | None = None

    def __post_init__(self):
        d = value_of(self.w_q).shape[0]
        if self.heads < 1 or d % self.heads:
            raise ShapeError(f"attention dim {d} not divisible by heads={self.heads}")

    @property
    def dim(self) -> int:
        return value_of(self.w_q).shape[0]

    @classmethod
    def random(cls, rng, d: int, heads: int = 4, dtype=np.float64) -> "MhsaParams":
        if heads < 1 or d % heads:
            raise ShapeError(f"attention dim {d} not divisible by heads={heads}")
        mats = [LinearParams.init(rng, d, d, dtype=dtype) for _ in range(4)]
        return cls(heads, *(m.weight for m in mats), *(m.bias for m in mats))


@dataclass(frozen=True, eq=False)
class CalibGenV2Params:
    conv_reduce: ConvKernel   # 1D, C -> C/r
    ln: NormParams            # layernorm over C/r
    mhsa: MhsaParams          # over D = C/r
    conv_expand: ConvKernel   # 1D, C/r -> C_alpha
    r: int = 4

    def __post_init__(self):
        c = self.conv_reduce.in_channels
        if self.r < 1 or c % self.r:
            raise ShapeError(f"C={c} not divisible by reduction ratio r={self.r}")
        d = c // self.r
        if self.conv_reduce.out_channels != d or self.conv_expand.in_channels != d:
            raise ShapeError("conv_reduce/conv_expand must go through C/r channels")
        if self.mhsa.dim != d or self.ln.channels != d:
            raise ShapeError(f"attention and layernorm must operate on C/r={d} channels")

    @property
    def in_channels(self) -> int:
        return self.conv_reduce.in_channels

    @property
    def out_channels(self) -> int:
        return self.conv_expand.out_channels

    @classmethod
    def random(cls, rng: np.random.Generator, c: int, *, r=4, k1=3, k2=3, heads=4, out_channels=None,
               dtype=np.float64) -> "CalibGenV2Params":
        if c % r:
            raise ShapeError(f"C={c} not divisible by reduction ratio r={r}")
        d = c // r
        out_channels = c if out_channels is None else out_channels
        red = ConvKernel.init(rng, d, c, k1, ndim=1, dtype=dtype)
        ln = NormParams.random(rng, d, "layernorm", dtype)
        att = MhsaParams.random(rng, d, heads, dtype)
        exp = ConvKernel.init(rng, out_channels, d, k2, ndim=1, dtype=dtype)
        return cls(red, ln, att, exp, r=r)


def _check_descriptors(v, c):
    shape = value_of(v).shape
    if len(shape) != 3:
        raise ShapeError(f"frame descriptors must be [N,T,C], got shape {shape}")
    if shape[2] != c:
        raise ShapeError(f"descriptors have C={shape[2]} channels, generator expects {c}")


def calib_v1(v, p: CalibGenV1Params):
    """``alpha = 1 + expand(ReLU(BN(reduce(v + FC(mean_t v)))))``, convs along T."""
    _check_descriptors(v, p.in_channels)
    n, t, c = value_of(v).shape
    vt = ops.transpose(v, (0, 2, 1))  # [N, C, T]
    if p.use_global:
        g = p.global_fc(ops.gap_temporal(v))
        vt = ops.add(vt, ops.reshape(g, (n, c, 1)))
    h = ops.relu(ops.normalize(ops.conv1d(vt, p.conv_reduce), p.bn, axis=1))
    f = ops.conv1d(h, p.conv_expand)
    return ops.transpose(ops.add(1.0, f), (0, 2, 1))


def attention_weights(z, p: MhsaParams):
    """Per-head attention matrices ``[N, heads, T, T]`` (rows sum to one)."""
    return _attend(z, p)[0]


def _attend(z, p: MhsaParams):
    q, k, v = _qkv(z, p)
    scale = 1.0 / math.sqrt(p.dim // p.heads)
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), scale)
    return ops.softmax(scores), v


def _qkv(z, p: MhsaParams):
    n, t, d = value_of(z).shape
    hd = d // p.heads

    def split(w, b):
        return ops.transpose(ops.reshape(ops.linear(z, w, b), (n, t, p.heads, hd)), (0, 2, 1, 3))

    return split(p.w_q, p.b_q), split(p.w_k, p.b_k), split(p.w_v, p.b_v)


def mhsa(z, p: MhsaParams):
    """Unmasked scaled dot-product self-attention over the T axis of ``z[N, T, D]``."""
    zs = value_of(z).shape
    if len(zs) != 3:
        raise ShapeError(f"mhsa expects [N,T,D], got shape {zs}")
    if zs[2] != p.dim:
        raise ShapeError(f"mhsa input dim {zs[2]} != parameter dim {p.dim}")
    n, t, d = zs
    attn, v = _attend(z, p)
    o = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (n, t, d))
    return ops.linear(o, p.w_o, p.b_o)


def calib_v2(v, p: CalibGenV2Params):
    """``alpha = 1 + expand(MHSA(z) + z)`` with ``z = GELU(LN(reduce(v)))``."""
    _check_descriptors(v, p.in_channels)
    vt = ops.transpose(v, (0, 2, 1))
    z = ops.gelu(ops.normalize(ops.conv1d(vt, p.conv_reduce), p.ln, axis=1))
    z = ops.transpose(z, (0, 2, 1))  # [N, T, D]
    z = ops.add(mhsa(z, p.mhsa), z)
    f = ops.conv1d(ops.transpose(z, (0, 2, 1)), p.conv_expand)
    return ops.transpose(ops.add(1.0, f), (0, 2, 1))


def generate(v, p):
    """Dispatch to the generator matching the parameter type."""
    if isinstance(p, CalibGenV1Params):
        return calib_v1(v, p)
    if isinstance(p, CalibGenV2Params):
        return calib_v2(v, p)
    raise TypeError(f"not a generator: {type(p).__name__}")


def init_identity(p):
    """Zero the last conv (weights and bias) so the generator emits exactly 1."""
    k = p.conv_expand
    w = np.zeros_like(value_of(k.weight))
    b = None if k.bias is None else np.zeros_like(value_of(k.bias))
    return dataclasses.replace(p, conv_expand=dataclasses.replace(k, weight=w, bias=b))


register("calib_v1")(calib_v1)
register("calib_v2")(calib_v2)
register("mhsa")(mhsa)
