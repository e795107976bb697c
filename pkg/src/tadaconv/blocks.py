"""TAdaBlocks: TAdaConv followed by temporal feature aggregation.

Aggregation combines the adaptive-conv output with a temporally pooled copy,
each normalised with its own parameters::

    agg(x) = act(norm1(x) + norm2(pool_t(x)))

``norm2`` starts at zero so the pooled branch contributes nothing at
initialisation.  Together with an identity-initialised generator each block
then reproduces its static counterpart:

* :func:`tada2d_block`          <-> :func:`bottleneck_block` (ResNet)
* :func:`tadaconvnextv2_block`  <-> :func:`convnext_block`
* :func:`tadaformer_block`      <-> identity (its output projection starts at zero)
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import register, value_of
from .calibration import CalibGenV1Params, CalibGenV2Params, LinearParams, init_identity
from .layer import CalibDim, TAdaConvParams, alpha_size, tadaconv_forward
from .ops import ConvKernel, NormParams, ShapeError

__all__ = [
    "AggregationConfig", "TAda2DBlockParams", "TAdaConvNeXtV2BlockParams", "TAdaFormerBlockParams",
    "temporal_aggregate", "tada2d_block", "tadaconvnextv2_block", "tadaformer_block",
    "bottleneck_block", "convnext_block", "identity_init",
]

STYLES = ("tada2d", "convnext")


@dataclass(frozen=True, eq=False)
class AggregationConfig:
    """Temporal aggregation settings.

    ``style="tada2d"`` applies ReLU after the sum (batchnorm norms);
    ``style="convnext"`` has no activation (layernorm norms).  ``norm2=None``
    disables the pooled branch, leaving ``act(norm1(x))``.
    """

    norm1: NormParams
    norm2: NormParams | None
    pool: str = "avg"
    k: int = 3
    style: str = "tada2d"

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown aggregation style {self.style!r}; expected one of {STYLES}")
        if self.pool not in ("avg", "max", "mix"):
            raise ValueError(f"unknown pooling kind {self.pool!r}")
        if self.norm2 is not None:
            if self.norm2 is self.norm1:
                raise ValueError("norm1 and norm2 must be separate parameter sets")
            if self.norm2.channels != self.norm1.channels:
                raise ShapeError("norm1 and norm2 channel counts differ")


def temporal_aggregate(xt, cfg: AggregationConfig):
    """Aggregate ``xt[N, C, T, H, W]``; pooling is length-preserving (stride 1)."""
    out = ops.normalize(xt, cfg.norm1, axis=1)
    if cfg.norm2 is not None:
        pooled = ops.pool_temporal(xt, cfg.pool, cfg.k, 1, cfg.k // 2)
        out = ops.add(out, ops.normalize(pooled, cfg.norm2, axis=1))
    if cfg.style == "tada2d":
        out = ops.relu(out)
    return out


def _pointwise(x, k: ConvKernel):
    return ops.framewise_conv2d(x, k)


def _channels_last_linear(x, lin: LinearParams):
    y = ops.linear(ops.transpose(x, (0, 2, 3, 4, 1)), lin.weight, lin.bias)
    return ops.transpose(y, (0, 4, 1, 2, 3))


# ---------------------------------------------------------------------------
# TAda2D (ResNet bottleneck)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TAda2DBlockParams:
    conv1: ConvKernel                 # 1x1, C_in -> width
    norm1: NormParams
    tada: TAdaConvParams              # 3x3, width -> width (carries the spatial stride)
    agg: AggregationConfig            # its norm1 is the norm after the 3x3 conv
    conv3: ConvKernel                 # 1x1, width -> C_out
    norm3: NormParams
    shortcut: tuple[ConvKernel, NormParams] | None = None
    residual: bool = True

    @classmethod
    def random(cls, rng, cin, width, cout, *, stride=1, r=2, k1=3, k2=3, generator="v1",
               dim=CalibDim.CIN, pool="avg", dtype=np.float64) -> "TAda2DBlockParams":
        """Random block.  Call :func:`identity_init` for the initial state."""
        conv1 = ConvKernel.init(rng, width, cin, 1, bias=False, padding=0, dtype=dtype)
        base = ConvKernel.init(rng, width, width, 3, bias=False, stride=stride, padding=1, dtype=dtype)
        n_alpha = alpha_size(base, dim)
        gen = _make_generator(rng, generator, width, r, k1, k2, n_alpha, heads=2, dtype=dtype)
        agg = AggregationConfig(NormParams.random(rng, width, "batchnorm", dtype),
                                NormParams.random(rng, width, "batchnorm", dtype), pool, 3, "tada2d")
        conv3 = ConvKernel.init(rng, cout, width, 1, bias=False, padding=0, dtype=dtype)
        shortcut = None
        if cin != cout or stride != 1:
            shortcut = (ConvKernel.init(rng, cout, cin, 1, bias=False, stride=stride, padding=0, dtype=dtype),
                        NormParams.random(rng, cout, "batchnorm", dtype))
        return cls(conv1, NormParams.random(rng, width, "batchnorm", dtype), TAdaConvParams(base, gen, dim),
                   agg, conv3, NormParams.random(rng, cout, "batchnorm", dtype), shortcut)


def _make_generator(rng, kind, c, r, k1, k2, out_channels, heads, dtype):
    if kind == "v1":
        return CalibGenV1Params.random(rng, c, r=r, k1=k1, k2=k2, out_channels=out_channels, dtype=dtype)
    if kind == "v2":
        return CalibGenV2Params.random(rng, c, r=r, k1=k1, k2=k2, heads=heads,
                                       out_channels=out_channels, dtype=dtype)
    raise ValueError(f"unknown generator kind {kind!r}")


def _shortcut(x, p):
    if p.shortcut is None:
        return x
    k, norm = p.shortcut
    return ops.normalize(_pointwise(x, k), norm, axis=1)


def tada2d_block(x, p: TAda2DBlockParams):
    """1x1 reduce -> TAdaConv 3x3 -> aggregate -> 1x1 expand -> residual -> ReLU."""
    h = ops.relu(ops.normalize(_pointwise(x, p.conv1), p.norm1, axis=1))
    h = tadaconv_forward(h, p.tada)
    h = temporal_aggregate(h, p.agg)
    h = ops.normalize(_pointwise(h, p.conv3), p.norm3, axis=1)
    if p.residual:
        h = ops.add(h, _shortcut(x, p))
    return ops.relu(h)


def bottleneck_block(x, p: TAda2DBlockParams):
    """The static ResNet bottleneck the TAda2D block starts from.

    Uses the shared base kernel on every frame and ``agg.norm1`` as the norm
    after the 3x3 conv; the generator and ``agg.norm2`` are ignored.
    """
    h = ops.relu(ops.normalize(_pointwise(x, p.conv1), p.norm1, axis=1))
    h = ops.framewise_conv2d(h, p.tada.base)
    h = ops.relu(ops.normalize(h, p.agg.norm1, axis=1))
    h = ops.normalize(_pointwise(h, p.conv3), p.norm3, axis=1)
    if p.residual:
        h = ops.add(h, _shortcut(x, p))
    return ops.relu(h)


# ---------------------------------------------------------------------------
# TAdaConvNeXtV2
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TAdaConvNeXtV2BlockParams:
    """Depthwise TAdaConv (7x7 by default), aggregation, then the ConvNeXt MLP.

    ``agg.norm1`` plays the role of the ConvNeXt block's LayerNorm (it is where
    pretrained LayerNorm weights are loaded); ``agg.norm2`` is the extra norm
    on the pooled branch.  A V1 generator with ``agg.norm2=None`` gives the
    original TAdaConvNeXt block.
    """

    tada: TAdaConvParams
    agg: AggregationConfig
    pw1: LinearParams     # C -> expansion*C
    pw2: LinearParams     # expansion*C -> C
    layer_scale: np.ndarray | None = None
    residual: bool = True

    @classmethod
    def random(cls, rng, c, *, k=7, r=4, heads=2, expansion=4, generator="v2", pool="avg",
               aggregate=True, layer_scale=False, dtype=np.float64) -> "TAdaConvNeXtV2BlockParams":
        base = ConvKernel.init(rng, c, c, k, groups=c, bias=True, padding=k // 2, dtype=dtype)
        gen = _make_generator(rng, generator, c, r, 3, 3, c, heads, dtype)
        n2 = NormParams.random(rng, c, "layernorm", dtype) if aggregate else None
        agg = AggregationConfig(NormParams.random(rng, c, "layernorm", dtype), n2, pool, 3, "convnext")
        ls = rng.uniform(0.5, 1.5, c).astype(dtype) if layer_scale else None
        return cls(TAdaConvParams(base, gen, CalibDim.COUT), agg,
                   LinearParams.init(rng, expansion * c, c, dtype=dtype),
                   LinearParams.init(rng, c, expansion * c, dtype=dtype), ls)


def _convnext_tail(h, x, p):
    h = _channels_last_linear(h, p.pw1)
    h = ops.gelu(h)
    h = _channels_last_linear(h, p.pw2)
    if p.layer_scale is not None:
        c = value_of(p.layer_scale).shape[0]
        h = ops.mul(h, ops.reshape(p.layer_scale, (1, c, 1, 1, 1)))
    return ops.add(h, x) if p.residual else h


def tadaconvnextv2_block(x, p: TAdaConvNeXtV2BlockParams):
    """Depthwise TAdaConv -> aggregate (LN, no activation) -> pw1 -> GELU -> pw2 -> residual."""
    if not p.tada.base.is_depthwise:
        raise ValueError("TAdaConvNeXtV2 block needs a depthwise TAdaConv")
    h = tadaconv_forward(x, p.tada)
    h = temporal_aggregate(h, p.agg)
    return _convnext_tail(h, x, p)


def convnext_block(x, p: TAdaConvNeXtV2BlockParams):
    """Plain ConvNeXt block: shared depthwise conv -> LN (``agg.norm1``) -> MLP -> residual."""
    h = ops.framewise_conv2d(x, p.tada.base)
    h = ops.normalize(h, p.agg.norm1, axis=1)
    return _convnext_tail(h, x, p)


# ---------------------------------------------------------------------------
# TAdaFormer conv block
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TAdaFormerBlockParams:
    """Block inserted before each self-attention layer of a ViT.

    pw_in -> depthwise TAdaConv (V2 generator) -> aggregation with batchnorm
    and ReLU -> pw_out -> residual.  Token-grid reshaping is the caller's job.
    """

    pw_in: ConvKernel     # 1x1, C -> C_hidden
    tada: TAdaConvParams  # depthwise on C_hidden
    agg: AggregationConfig
    pw_out: ConvKernel    # 1x1, C_hidden -> C
    residual: bool = True

    @classmethod
    def random(cls, rng, c, hidden=None, *, k=3, r=2, heads=2, pool="avg", dtype=np.float64):
        hidden = c if hidden is None else hidden
        pw_in = ConvKernel.init(rng, hidden, c, 1, padding=0, dtype=dtype)
        base = ConvKernel.init(rng, hidden, hidden, k, groups=hidden, bias=True, padding=k // 2, dtype=dtype)
        gen = CalibGenV2Params.random(rng, hidden, r=r, heads=heads, dtype=dtype)
        agg = AggregationConfig(NormParams.random(rng, hidden, "batchnorm", dtype),
                                NormParams.random(rng, hidden, "batchnorm", dtype), pool, 3, "tada2d")
        pw_out = ConvKernel.init(rng, c, hidden, 1, padding=0, dtype=dtype)
        return cls(pw_in, TAdaConvParams(base, gen, CalibDim.COUT), agg, pw_out)


def tadaformer_block(x, p: TAdaFormerBlockParams, *, plain_conv=False):
    """``plain_conv=True`` swaps the TAdaConv for the shared depthwise conv."""
    h = _pointwise(x, p.pw_in)
    h = ops.framewise_conv2d(h, p.tada.base) if plain_conv else tadaconv_forward(h, p.tada)
    h = temporal_aggregate(h, p.agg)
    h = _pointwise(h, p.pw_out)
    return ops.add(h, x) if p.residual else h


# ---------------------------------------------------------------------------
# Initial state
# ---------------------------------------------------------------------------

def _init_tada(tp: TAdaConvParams) -> TAdaConvParams:
    if tp.generator is None:
        return tp
    return dataclasses.replace(tp, generator=init_identity(tp.generator))


def identity_init(p):
    """Initial state of a block: identity generator and zeroed pooled-branch norm.

    TAdaFormer blocks additionally get a zero output projection, which makes
    the whole block an identity map.
    """
    agg = p.agg if p.agg.norm2 is None else dataclasses.replace(p.agg, norm2=p.agg.norm2.zeroed())
    p = dataclasses.replace(p, tada=_init_tada(p.tada), agg=agg)
    if isinstance(p, TAdaFormerBlockParams):
        k = p.pw_out
        zb = None if k.bias is None else np.zeros_like(value_of(k.bias))
        p = dataclasses.replace(p, pw_out=dataclasses.replace(k, weight=np.zeros_like(value_of(k.weight)), bias=zb))
    return p


register("temporal_aggregate")(temporal_aggregate)
register("tada2d_block")(tada2d_block)
register("tadaconvnextv2_block")(tadaconvnextv2_block)
register("tadaformer_block")(tadaformer_block)
