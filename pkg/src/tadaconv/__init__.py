"""Temporally-adaptive convolutions on numpy.

Submodules:

``ops``          tensor primitives (conv, norms, pooling, activations)
``autodiff``     reverse-mode tape and ``vjp``
``calibration``  calibration-weight generators (V1 conv, V2 attention)
``layer``        the TAdaConv operator
``blocks``       TAda2D, TAdaConvNeXtV2 and TAdaFormer blocks
``cost``         closed-form FLOPs / parameter accounting
``oracles``      naive references and the finite-difference harness
``checks``       seeded property suites
``tensor_io``    binary tensor files
``serialize``    parameter directories and JSON configs
"""
from .autodiff import vjp, vjp_op
from .blocks import (
    AggregationConfig, TAda2DBlockParams, TAdaConvNeXtV2BlockParams, TAdaFormerBlockParams,
    bottleneck_block, convnext_block, identity_init, tada2d_block, tadaconvnextv2_block,
    tadaformer_block, temporal_aggregate,
)
from .calibration import CalibGenV1Params, CalibGenV2Params, calib_v1, calib_v2, init_identity
from .cost import OpCostSpec, cost_diff, load_catalog, network_cost, op_cost
from .layer import CalibDim, TAdaConvParams, calibrate_weights, tadaconv_forward
from .ops import ConvKernel, NormParams, ShapeError
from .tensor_io import TensorFormatError, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "vjp", "vjp_op",
    "AggregationConfig", "TAda2DBlockParams", "TAdaConvNeXtV2BlockParams", "TAdaFormerBlockParams",
    "bottleneck_block", "convnext_block", "identity_init", "tada2d_block", "tadaconvnextv2_block",
    "tadaformer_block", "temporal_aggregate",
    "CalibGenV1Params", "CalibGenV2Params", "calib_v1", "calib_v2", "init_identity",
    "OpCostSpec", "cost_diff", "load_catalog", "network_cost", "op_cost",
    "CalibDim", "TAdaConvParams", "calibrate_weights", "tadaconv_forward",
    "ConvKernel", "NormParams", "ShapeError",
    "TensorFormatError", "read_tensor", "write_tensor",
]
