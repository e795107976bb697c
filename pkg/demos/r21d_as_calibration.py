"""
(2+1)D convolution as calibrated spatial convolutions
=====================================================

A spatial conv followed by a 3-tap depthwise temporal conv can be rewritten
as a sum, over t-1, t and t+1, of spatial convs whose kernels are the shared
kernel scaled per output channel.  With a ReLU in between the scaling also
depends on location, through the sign pattern of the spatial conv output.
"""

import numpy as np

from tadaconv import ops
from tadaconv.ops import ConvKernel
from tadaconv.oracles import r21d_decompose_check, r21d_decomposed, r21d_literal, relu_mask

rng = np.random.default_rng(7)
kernel = ConvKernel.init(rng, 4, 3, 3)
beta = rng.uniform(-1, 1, (4, 3))
x = rng.uniform(-1, 1, (1, 3, 5, 8, 8))

for with_relu in (False, True):
    lit = r21d_literal(x, kernel, beta, with_relu)
    dec = r21d_decomposed(x, kernel, beta, with_relu)
    print(f"with_relu={with_relu!s:5s} output {lit.shape}, max gap {np.abs(lit - dec).max():.2e}")

# %%
# The gap is pure rounding: float32 leaves ~1e-7, float64 ~1e-16.
for dtype in (np.float32, np.float64):
    k = ConvKernel(kernel.weight.astype(dtype), kernel.bias.astype(dtype), padding=1)
    gap = r21d_decompose_check(x.astype(dtype), k, beta.astype(dtype), with_relu=True)
    print(np.dtype(dtype).name, f"{gap:.1e}")

# %%
# The location-dependent part is just the ReLU mask.
y = ops.conv2d(x[:, :, 0], kernel)
m = relu_mask(y)
print("\nfraction of active locations in frame 0:", float(m.mean()))
print("relu(y) == mask * y ->", bool(np.array_equal(np.maximum(y, 0), m * y)))
