"""Temporally-adaptive 2D convolution.

Each frame ``t`` of a video ``x[N, C_in, T, H, W]`` is convolved with its own
kernel ``W_t = alpha_t * W_b``: the shared base kernel scaled by a calibration
vector broadcast along one kernel dimension.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import register, value_of
from .calibration import CalibGenV1Params, CalibGenV2Params, generate
from .ops import ConvKernel, ShapeError

__all__ = [
    "CalibDim", "TAdaConvParams", "alpha_size", "calibrate_weights",
    "compute_alpha", "tadaconv_forward", "tadaconv_depthwise_forward",
]


class CalibDim(str, enum.Enum):
    """Kernel dimension the calibration vector scales."""

    CIN = "cin"
    COUT = "cout"
    CINCOUT = "cincout"
    SPATIAL = "k2"


def alpha_size(base: ConvKernel, dim: CalibDim) -> int:
    """Number of calibration scalars per frame demanded by ``dim``."""
    dim = CalibDim(dim)
    if base.is_depthwise and base.in_channels > 1 and dim is not CalibDim.COUT:
        raise ValueError(f"depthwise kernels only support cout calibration, got {dim.value}")
    if dim in (CalibDim.CIN, CalibDim.CINCOUT) and base.groups != 1:
        raise ValueError(f"{dim.value} calibration needs a dense kernel (groups=1), got groups={base.groups}")
    o, _, kh, kw = value_of(base.weight).shape
    if dim is CalibDim.CIN:
        return base.in_channels
    if dim is CalibDim.COUT:
        return o
    if dim is CalibDim.CINCOUT:
        return base.in_channels + o
    return kh * kw


@dataclass(frozen=True, eq=False)
class TAdaConvParams:
    """Base kernel plus a calibration source.

    ``generator=None`` means calibration weights are supplied by the caller
    (the ``external`` variant).
    """

    base: ConvKernel
    generator: CalibGenV1Params | CalibGenV2Params | None = None
    dim: CalibDim = CalibDim.CIN

    def __post_init__(self):
        object.__setattr__(self, "dim", CalibDim(self.dim))
        if value_of(self.base.weight).ndim != 4:
            raise ShapeError("TAdaConv base kernel must be 2D ([C_out, C_in/g, K, K])")
        need = alpha_size(self.base, self.dim)
        if self.generator is not None:
            if self.generator.in_channels != self.base.in_channels:
                raise ShapeError(f"generator reads {self.generator.in_channels} channels, "
                                 f"conv input has {self.base.in_channels}")
            if self.generator.out_channels != need:
                raise ShapeError(f"generator emits {self.generator.out_channels} values per frame, "
                                 f"calibration dim {self.dim.value} needs {need}")

    @property
    def alpha_size(self) -> int:
        return alpha_size(self.base, self.dim)


def calibrate_weights(weight, alpha, dim: CalibDim):
    """Per-frame kernels ``alpha[b] * weight`` -> ``[B, C_out, C_in/g, kh, kw]``.

    ``alpha`` is ``[B, S]`` where ``S`` depends on ``dim``: C_in, C_out,
    C_in + C_out (split as ``[alpha_in | alpha_out]``, applied as a rank-one
    outer product) or kh*kw.  Pure broadcast multiply, no renormalisation.
    """
    dim = CalibDim(dim)
    w = value_of(weight)
    a = value_of(alpha)
    if w.ndim != 4:
        raise ShapeError(f"expected a 4D kernel, got shape {w.shape}")
    if a.ndim != 2:
        raise ShapeError(f"alpha must be [frames, S], got shape {a.shape}")
    o, cg, kh, kw = w.shape
    b, s = a.shape
    expected = {CalibDim.CIN: cg, CalibDim.COUT: o, CalibDim.CINCOUT: cg + o, CalibDim.SPATIAL: kh * kw}[dim]
    if s != expected:
        raise ShapeError(f"alpha has {s} entries per frame; {dim.value} calibration of a {w.shape} kernel needs {expected}")
    wb = ops.reshape(weight, (1, o, cg, kh, kw))
    if dim is CalibDim.CIN:
        return ops.mul(wb, ops.reshape(alpha, (b, 1, cg, 1, 1)))
    if dim is CalibDim.COUT:
        return ops.mul(wb, ops.reshape(alpha, (b, o, 1, 1, 1)))
    if dim is CalibDim.SPATIAL:
        return ops.mul(wb, ops.reshape(alpha, (b, 1, 1, kh, kw)))
    a_in = ops.reshape(ops.getitem(alpha, (slice(None), slice(0, cg))), (b, 1, cg, 1, 1))
    a_out = ops.reshape(ops.getitem(alpha, (slice(None), slice(cg, cg + o))), (b, o, 1, 1, 1))
    return ops.mul(ops.mul(wb, a_out), a_in)


def compute_alpha(x, p: TAdaConvParams):
    """Run the generator on the spatial descriptors of ``x``."""
    if p.generator is None:
        raise ValueError("external calibration: pass alpha explicitly")
    return generate(ops.gap_spatial(x), p.generator)


def tadaconv_forward(x, p: TAdaConvParams, alpha=None, *, return_alpha=False):
    """Calibrated per-frame convolution of ``x[N, C_in, T, H, W]``.

    ``alpha`` overrides the generator (required when ``p.generator`` is None);
    it must be ``[N, T, S]``.  The bias, if any, is added uncalibrated.
    """
    xv = value_of(x)
    if xv.ndim != 5:
        raise ShapeError(f"tadaconv expects [N,C,T,H,W], got shape {xv.shape}")
    n, c, t, _, _ = xv.shape
    if c != p.base.in_channels:
        raise ShapeError(f"input has {c} channels, kernel expects {p.base.in_channels}")
    if alpha is None:
        alpha = compute_alpha(x, p)
    s = p.alpha_size
    if value_of(alpha).shape != (n, t, s):
        raise ShapeError(f"alpha shape {value_of(alpha).shape} != {(n, t, s)}")
    wt = calibrate_weights(p.base.weight, ops.reshape(alpha, (n * t, s)), p.dim)
    y = ops.conv2d_raw(ops.frames_to_batch(x), wt, p.base.bias,
                       stride=p.base.stride, padding=p.base.padding, groups=p.base.groups)
    y = ops.batch_to_frames(y, n, t)
    return (y, alpha) if return_alpha else y


def tadaconv_depthwise_forward(x, p: TAdaConvParams, alpha=None, *, return_alpha=False):
    """Depthwise variant; calibration must be on the output-channel dimension."""
    if not p.base.is_depthwise:
        raise ValueError(f"kernel is not depthwise (groups={p.base.groups}, "
                         f"C_in={p.base.in_channels}, C_out={p.base.out_channels})")
    if p.dim is not CalibDim.COUT:
        raise ValueError(f"depthwise TAdaConv calibrates C_out only, got {p.dim.value}")
    return tadaconv_forward(x, p, alpha, return_alpha=return_alpha)


register("tadaconv")(lambda x, p: tadaconv_forward(x, p))
register("tadaconv_external")(lambda x, p, alpha: tadaconv_forward(x, p, alpha))
