"""Seeded property suites behind ``tadaconv check``.

Every suite returns a list of :class:`CheckRecord`; a record passes when
``max_err <= tolerance`` (or ``max_err > tolerance`` for lower-bound checks,
which carry ``bound="lower"``).  Configs are derived from the seed alone, so
reruns are byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blocks, calibration, ops
from .autodiff import value_of
from .layer import CalibDim, TAdaConvParams, alpha_size, calibrate_weights, tadaconv_forward
from .oracles import finite_diff_check, perframe_kernel_oracle, r21d_decompose_check
from .ops import ConvKernel, NormParams

__all__ = ["CheckRecord", "SUITES", "run_suite", "identity_suite", "oracle_suite", "decompose_suite",
           "grad_suite", "random_tadaconv", "random_block", "grad_cases"]

DIMS = tuple(CalibDim)
BLOCK_KINDS = ("tada2d", "tadaconvnextv2", "tadaformer")
_DT = {np.float32: "f32", np.float64: "f64"}


@dataclass
class CheckRecord:
    check: str
    seed: int
    dtype: str
    max_err: float
    tolerance: float
    bound: str = "upper"

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.max_err):
            return False
        return self.max_err > self.tolerance if self.bound == "lower" else self.max_err <= self.tolerance

    def to_dict(self) -> dict:
        d = {"check": self.check, "seed": self.seed, "dtype": self.dtype, "max_err": self.max_err,
             "tolerance": self.tolerance, "pass": self.passed}
        if self.bound != "upper":
            d["bound"] = self.bound
        return d


def _maxabs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(value_of(a), np.float64) - np.asarray(value_of(b), np.float64))))


# ---------------------------------------------------------------------------
# Seeded configs
# ---------------------------------------------------------------------------

def random_tadaconv(seed: int, dtype=np.float64, *, generator=None, dim=None, identity=False,
                    k1=None, bias=None):
    """Small TAdaConv config and matching input, both determined by ``seed``.

    Generators alternate V1/V2 and calibration dims cycle with the seed unless
    pinned.  ``cout`` configs are depthwise on every third seed.
    """
    rng = np.random.default_rng([seed, 7])
    generator = ("v1", "v2")[seed % 2] if generator is None else generator
    dim = DIMS[(seed // 2) % 4] if dim is None else CalibDim(dim)
    depthwise = dim is CalibDim.COUT and seed % 3 == 0
    cin = int(rng.choice([4, 6, 8]))
    cout = cin if depthwise else int(rng.choice([2, 4, 6]))
    k = int(rng.choice([1, 3])) if not depthwise else 3
    stride = int(rng.choice([1, 1, 2]))
    t, h, w = int(rng.integers(1, 5)), int(rng.integers(3, 8)), int(rng.integers(3, 8))
    r = int(rng.choice([r for r in (1, 2) if cin % r == 0]))
    k1 = int(rng.choice([1, 3])) if k1 is None else k1
    k2 = int(rng.choice([1, 3]))
    bias = bool(rng.integers(0, 2)) if bias is None else bias
    base = ConvKernel.init(rng, cout, cin, k, groups=cin if depthwise else 1, bias=bias,
                           stride=stride, padding=k // 2, dtype=dtype)
    n_alpha = alpha_size(base, dim)
    if generator == "v1":
        gen = calibration.CalibGenV1Params.random(rng, cin, r=r, k1=k1, k2=k2, out_channels=n_alpha,
                                                  use_global=bool(rng.integers(0, 2)), dtype=dtype)
    else:
        d = cin // r
        heads = int(rng.choice([h for h in (1, 2, 3) if d % h == 0]))
        gen = calibration.CalibGenV2Params.random(rng, cin, r=r, k1=k1, k2=k2, heads=heads,
                                                  out_channels=n_alpha, dtype=dtype)
    if identity:
        gen = calibration.init_identity(gen)
    x = rng.uniform(-1, 1, (int(rng.integers(1, 3)), cin, t, h, w)).astype(dtype)
    return TAdaConvParams(base, gen, dim), x


def random_block(seed: int, dtype=np.float64, *, kind=None, generator=None, dim=None):
    """Randomly sized block of the kind selected by ``seed`` plus an input."""
    rng = np.random.default_rng([seed, 11])
    kind = BLOCK_KINDS[seed % 3] if kind is None else kind
    generator = ("v1", "v2")[(seed // 3) % 2] if generator is None else generator
    t, h = int(rng.integers(1, 5)), int(rng.integers(3, 7))
    pool = ("avg", "max", "mix")[int(rng.integers(0, 3))]
    if kind == "tada2d":
        dim = DIMS[(seed // 6) % 4] if dim is None else dim
        cin, width = int(rng.choice([4, 8])), int(rng.choice([4, 8]))
        cout = int(rng.choice([4, 8]))
        stride = int(rng.choice([1, 2]))
        p = blocks.TAda2DBlockParams.random(rng, cin, width, cout, stride=stride, r=2, generator=generator,
                                            dim=dim, pool=pool, dtype=dtype)
        base = blocks.bottleneck_block
        fwd = blocks.tada2d_block
    elif kind == "tadaconvnextv2":
        cin = int(rng.choice([4, 8]))
        p = blocks.TAdaConvNeXtV2BlockParams.random(rng, cin, k=int(rng.choice([3, 5])), r=2, heads=2,
                                                    expansion=2, generator=generator, pool=pool,
                                                    layer_scale=bool(rng.integers(0, 2)), dtype=dtype)
        base = blocks.convnext_block
        fwd = blocks.tadaconvnextv2_block
    else:
        cin = int(rng.choice([4, 8]))
        p = blocks.TAdaFormerBlockParams.random(rng, cin, int(rng.choice([4, 8])), r=2, heads=2, pool=pool,
                                                dtype=dtype)
        base = None
        fwd = blocks.tadaformer_block
    x = rng.uniform(-1, 1, (1, cin, t, h, h)).astype(dtype)
    return p, x, fwd, base


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

def identity_suite(seeds) -> list[CheckRecord]:
    """Initialised operators and blocks reproduce their static baselines."""
    out = []
    for s in seeds:
        for dtype, tol in ((np.float32, 1e-6), (np.float64, 0.0)):
            p, x = random_tadaconv(s, dtype, identity=True)
            err = _maxabs(tadaconv_forward(x, p), ops.framewise_conv2d(x, p.base))
            out.append(CheckRecord(f"identity.tadaconv.{_gen_name(p)}.{p.dim.value}", s, _DT[dtype], err, tol))
            bp, bx, fwd, base = random_block(s, dtype)
            bp = blocks.identity_init(bp)
            ref = bx if base is None else base(bx, bp)
            err = _maxabs(fwd(bx, bp), ref)
            out.append(CheckRecord(f"identity.{fwd.__name__}.{_gen_name(bp.tada)}", s, _DT[dtype], err, tol))
    return out


def _gen_name(p: TAdaConvParams) -> str:
    return "v1" if isinstance(p.generator, calibration.CalibGenV1Params) else "v2"


def materialization_check(seed: int, dtype=np.float32) -> CheckRecord:
    p, x = random_tadaconv(seed, dtype)
    return CheckRecord(f"oracle.materialize.{_gen_name(p)}.{p.dim.value}", seed, _DT[dtype],
                       perframe_kernel_oracle(x, p), 1e-6)


def broadcast_checks(seed: int, dtype=np.float32) -> list[CheckRecord]:
    """C_in calibration == scaling the input; C_out calibration == scaling the output."""
    out = []
    for dim in (CalibDim.CIN, CalibDim.COUT):
        p, x = random_tadaconv(seed, dtype, dim=dim, bias=False)
        n, _, t = x.shape[:3]
        rng = np.random.default_rng([seed, 13])
        alpha = rng.uniform(0.2, 2.0, (n, t, p.alpha_size)).astype(dtype)
        y = tadaconv_forward(x, p, alpha)
        if dim is CalibDim.CIN:
            ref = ops.framewise_conv2d(x * alpha.transpose(0, 2, 1)[..., None, None], p.base)
        else:
            ref = ops.framewise_conv2d(x, p.base) * alpha.transpose(0, 2, 1)[..., None, None]
        rel = _maxabs(y, ref) / max(float(np.max(np.abs(ref))), 1e-30)
        out.append(CheckRecord(f"oracle.broadcast.{dim.value}", seed, _DT[dtype], rel, 1e-5))
    return out


def reverse_frames(a):
    return np.asarray(value_of(a))[:, :, ::-1]


def adaptivity_checks(seed: int, dtype=np.float64) -> list[CheckRecord]:
    """Frame reversal commutes with shared kernels but not with a K1=3 generator."""
    rng = np.random.default_rng([seed, 17])
    c, t = 8, int(rng.integers(3, 6))
    base = ConvKernel.init(rng, 8, c, 3, dtype=dtype)
    gen = calibration.CalibGenV1Params.random(rng, c, r=2, k1=3, k2=3, out_channels=c, use_global=True,
                                              dtype=dtype)
    p = TAdaConvParams(base, gen, CalibDim.CIN)
    # Frame-dependent contrast so descriptors differ along T.
    ramp = np.linspace(-2.0, 2.0, t, dtype=dtype)[None, None, :, None, None]
    x = (rng.uniform(-1, 1, (1, c, t, 5, 5)) + ramp * rng.uniform(-1, 1, (1, c, 1, 1, 1))).astype(dtype)
    gap = _maxabs(reverse_frames(tadaconv_forward(x, p)), tadaconv_forward(x[:, :, ::-1].copy(), p))
    alpha = np.broadcast_to(rng.uniform(0.5, 1.5, (1, 1, c)), (1, t, c)).astype(dtype)
    ext = TAdaConvParams(base, None, CalibDim.CIN)
    same = _maxabs(reverse_frames(tadaconv_forward(x, ext, alpha)),
                   tadaconv_forward(x[:, :, ::-1].copy(), ext, alpha))
    return [CheckRecord("oracle.adaptivity.generated", seed, _DT[dtype], gap, 1e-3, bound="lower"),
            CheckRecord("oracle.adaptivity.frame_constant", seed, _DT[dtype], same, 1e-6)]


def oracle_suite(seeds) -> list[CheckRecord]:
    out = []
    for s in seeds:
        out.append(materialization_check(s))
        out += broadcast_checks(s)
        out += adaptivity_checks(s)
    return out


def decompose_instance(seed: int, dtype, with_relu: bool) -> float:
    rng = np.random.default_rng([seed, 19])
    c = int(rng.integers(2, 7))
    ci = int(rng.integers(1, 7))
    t, h, w = int(rng.integers(1, 6)), int(rng.integers(3, 8)), int(rng.integers(3, 8))
    k = int(rng.choice([1, 3]))
    kernel = ConvKernel.init(rng, c, ci, k, dtype=dtype)
    beta = rng.uniform(-1, 1, (c, 3)).astype(dtype)
    x = rng.uniform(-1, 1, (1, ci, t, h, w)).astype(dtype)
    return r21d_decompose_check(x, kernel, beta, with_relu)


def decompose_suite(seeds) -> list[CheckRecord]:
    out = []
    for s in seeds:
        for with_relu in (False, True):
            for dtype, tol in ((np.float32, 1e-6), (np.float64, 1e-12)):
                name = "decompose.relu" if with_relu else "decompose.linear"
                out.append(CheckRecord(name, s, _DT[dtype], decompose_instance(s, dtype, with_relu), tol))
    return out


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def grad_cases(seed: int):
    """``(name, f, args, tolerance)`` for every primitive and the composed ops (float64)."""
    rng = np.random.default_rng([seed, 23])

    def u(*shape):
        return rng.uniform(-1, 1, shape)

    bn = NormParams.random(rng, 4, "batchnorm")
    ln = NormParams.random(rng, 4, "layernorm")
    k2d = ConvKernel.init(rng, 4, 4, 3, groups=2, stride=2, padding=1)
    k1d = ConvKernel.init(rng, 3, 4, 3, ndim=1)
    cases = [
        ("add", ops.add, (u(2, 3), u(3)), 1e-6),
        ("sub", ops.sub, (u(2, 3), u(2, 1)), 1e-6),
        ("mul", ops.mul, (u(2, 3), u(1, 3)), 1e-6),
        ("reshape", lambda a: ops.reshape(a, (3, 4)), (u(2, 6),), 1e-6),
        ("transpose", lambda a: ops.transpose(a, (2, 0, 1)), (u(2, 3, 4),), 1e-6),
        ("getitem", lambda a: ops.getitem(a, (slice(None), slice(1, 3))), (u(2, 4),), 1e-6),
        ("mean", lambda a: ops.mean(a, 1), (u(2, 3, 4),), 1e-6),
        ("matmul", ops.matmul, (u(2, 3, 4), u(2, 4, 5)), 1e-6),
        ("conv2d", ops.conv2d, (u(2, 4, 5, 5), k2d), 1e-6),
        ("conv1d", ops.conv1d, (u(1, 4, 6), k1d), 1e-6),
        ("linear", ops.linear, (u(2, 3, 4), u(5, 4), u(5)), 1e-6),
        ("gap_spatial", ops.gap_spatial, (u(1, 3, 2, 4, 4),), 1e-6),
        ("gap_temporal", ops.gap_temporal, (u(2, 3, 4),), 1e-6),
        ("batchnorm", lambda a, p: ops.normalize(a, p), (u(2, 4, 3, 3), bn), 1e-6),
        ("layernorm", lambda a, p: ops.normalize(a, p, axis=-1), (u(2, 3, 4), ln), 1e-6),
        ("relu", ops.relu, (u(3, 5),), 1e-6),
        ("gelu", ops.gelu, (u(3, 5),), 1e-6),
        ("softmax", ops.softmax, (u(3, 5),), 1e-6),
        ("pool_avg", lambda a: ops.pool_temporal(a, "avg"), (u(1, 2, 4, 3, 3),), 1e-6),
        ("pool_max", lambda a: ops.pool_temporal(a, "max"), (u(1, 2, 4, 3, 3),), 1e-6),
        ("pool_mix", lambda a: ops.pool_temporal(a, "mix"), (u(1, 2, 4, 3, 3),), 1e-6),
        ("calibrate_weights", lambda w, a: calibrate_weights(w, a, CalibDim.CINCOUT),
         (u(3, 4, 3, 3), u(2, 7)), 1e-6),
    ]
    v1 = TAdaConvParams(ConvKernel.init(rng, 6, 4, 3, bias=True, padding=1),
                        calibration.CalibGenV1Params.random(rng, 4, r=2, k1=3, k2=3), CalibDim.CIN)
    v2 = TAdaConvParams(ConvKernel.init(rng, 4, 4, 3, groups=4, bias=True, padding=1),
                        calibration.CalibGenV2Params.random(rng, 4, r=2, k1=3, k2=3, heads=2), CalibDim.COUT)
    g1 = calibration.CalibGenV1Params.random(rng, 4, r=2)
    g2 = calibration.CalibGenV2Params.random(rng, 4, r=2, heads=2)
    agg = blocks.AggregationConfig(NormParams.random(rng, 4), NormParams.random(rng, 4), "mix")
    block = blocks.TAda2DBlockParams.random(rng, 4, 4, 6, stride=1, r=1, generator="v1", dim="cincout")
    cases += [
        ("calib_v1", calibration.calib_v1, (u(1, 4, 4), g1), 1e-5),
        ("calib_v2", calibration.calib_v2, (u(1, 4, 4), g2), 1e-5),
        ("temporal_aggregate", blocks.temporal_aggregate, (u(1, 4, 4, 3, 3), agg), 1e-5),
        ("tadaconv_v1", tadaconv_forward, (u(1, 4, 4, 5, 5), v1), 1e-5),
        ("tadaconv_v2", tadaconv_forward, (u(1, 4, 4, 5, 5), v2), 1e-5),
        ("tada2d_block", blocks.tada2d_block, (u(1, 4, 4, 5, 5), block), 1e-5),
    ]
    return cases


def fixed_cotangent(f, args, seed):
    """Seeded weights for the scalar loss ``sum(w * f(args))``.

    A plain sum would make some checks vacuous: softmax rows always sum to 1,
    so their gradient under ``sum`` is identically zero.
    """
    shape = np.shape(value_of(f(*args)))
    return np.random.default_rng([seed, 29]).uniform(-1, 1, shape)


def grad_suite(seeds) -> list[CheckRecord]:
    out = []
    for s in seeds:
        for name, f, args, tol in grad_cases(s):
            res = finite_diff_check(f, args, seed=s, cotangent=fixed_cotangent(f, args, s))
            out.append(CheckRecord(f"grad.{name}", s, "f64", res.max_error, tol))
    return out


SUITES = {"identity": identity_suite, "oracle": oracle_suite, "grad": grad_suite, "decompose": decompose_suite}


def run_suite(name: str, seeds) -> list[CheckRecord]:
    if name == "all":
        return [rec for suite in SUITES.values() for rec in suite(seeds)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {sorted(SUITES) + ['all']}")
    return SUITES[name](seeds)
