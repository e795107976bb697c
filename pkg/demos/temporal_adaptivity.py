"""
Shared weights, frame-specific kernels
======================================

A plain per-frame conv treats frames independently: reversing the clip just
reverses the output.  TAdaConv's kernels depend on neighbouring frames
through the generator, so that symmetry breaks.
"""

import numpy as np

from tadaconv.calibration import CalibGenV1Params
from tadaconv.layer import TAdaConvParams, calibrate_weights, tadaconv_forward
from tadaconv.ops import ConvKernel

rng = np.random.default_rng(3)
c, t = 8, 6
base = ConvKernel.init(rng, c, c, 3, padding=1)
gen = CalibGenV1Params.random(rng, c, r=2, k1=3, k2=3, use_global=True)
p = TAdaConvParams(base, gen, "cin")

# A clip whose content brightens over time.
ramp = np.linspace(-2, 2, t)[None, None, :, None, None]
x = rng.uniform(-1, 1, (1, c, t, 7, 7)) + ramp * rng.uniform(-1, 1, (1, c, 1, 1, 1))

y, alpha = tadaconv_forward(x, p, return_alpha=True)
print("calibration weights per frame (first 4 channels):")
print(np.round(alpha[0, :, :4], 3))

flipped = tadaconv_forward(x[:, :, ::-1].copy(), p)
print("\nmax |reverse(f(x)) - f(reverse(x))| =", float(np.abs(y[:, :, ::-1] - flipped).max()))

# %%
# With the same alpha on every frame the operator is once again a shared
# conv, and the symmetry comes back.
ext = TAdaConvParams(base, None, "cin")
const = np.broadcast_to(alpha[:, :1], alpha.shape)
a = tadaconv_forward(x, ext, const)
b = tadaconv_forward(x[:, :, ::-1].copy(), ext, const)
print("frame-constant alpha:                 ", float(np.abs(a[:, :, ::-1] - b).max()))

# %%
# Every frame really does get its own kernel.
kernels = calibrate_weights(base.weight, alpha[0], "cin")
print("\ndistinct per-frame kernels:", len({k.tobytes() for k in kernels}), "of", t)
