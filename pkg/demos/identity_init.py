"""
Starting from a pretrained static network
=========================================

Zeroing the last layer of the calibration generator makes every calibration
weight exactly 1, so a freshly built TAdaConv reproduces the plain conv it
replaces.  Blocks additionally zero the norm on their pooled branch.
"""

import dataclasses

import numpy as np

from tadaconv import blocks, ops
from tadaconv.calibration import CalibGenV2Params, init_identity
from tadaconv.layer import TAdaConvParams, tadaconv_forward
from tadaconv.ops import ConvKernel

rng = np.random.default_rng(0)
x = rng.standard_normal((2, 16, 8, 14, 14))

# A "pretrained" 3x3 kernel and a randomly initialised V2 generator.
base = ConvKernel.init(rng, 32, 16, 3, padding=1)
gen = CalibGenV2Params.random(rng, 16, r=4, heads=2)
p = TAdaConvParams(base, gen, "cin")

y_random, alpha = tadaconv_forward(x, p, return_alpha=True)
print("random generator: alpha in", alpha.min().round(3), "..", alpha.max().round(3))

p0 = dataclasses.replace(p, generator=init_identity(gen))
y0, alpha0 = tadaconv_forward(x, p0, return_alpha=True)
print("identity generator: all alpha == 1 ->", bool(np.all(alpha0 == 1)))
print("matches the shared conv bit for bit ->", bool(np.array_equal(y0, ops.framewise_conv2d(x, base))))

# %%
# The same holds one level up.  A TAda2D bottleneck at initialisation is the
# ResNet bottleneck it was built from.
bp = blocks.identity_init(blocks.TAda2DBlockParams.random(rng, 16, 8, 32, stride=2, generator="v1"))
print("TAda2D == bottleneck ->", bool(np.array_equal(blocks.tada2d_block(x, bp), blocks.bottleneck_block(x, bp))))

# A TAdaFormer block starts as the identity map, so it can be dropped in
# front of any attention layer without disturbing a pretrained ViT.
fp = blocks.identity_init(blocks.TAdaFormerBlockParams.random(rng, 16, 32))
print("TAdaFormer == identity ->", bool(np.array_equal(blocks.tadaformer_block(x, fp), x)))
