import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tadaconv import checks, ops
from tadaconv.calibration import CalibGenV1Params, CalibGenV2Params, init_identity
from tadaconv.layer import CalibDim, TAdaConvParams
from tadaconv.ops import ConvKernel, ShapeError
from tadaconv.oracles import (finite_diff_check, naive_conv1d, naive_conv2d, perframe_kernel_oracle,
                              r21d_decompose_check, r21d_decomposed, r21d_literal, relu_mask)


# --- naive convolutions ----------------------------------------------------

def test_identity_kernel_returns_input(rng):
    x = rng.standard_normal((2, 3, 5, 6))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1
    np.testing.assert_array_equal(naive_conv2d(x, w, padding=1), x)
    w1 = np.zeros((3, 3, 3))
    for c in range(3):
        w1[c, c, 1] = 1
    np.testing.assert_array_equal(naive_conv1d(x[:, :, 0], w1, padding=1), x[:, :, 0])


def test_zero_kernel_returns_zeros(rng):
    y = naive_conv2d(rng.standard_normal((1, 4, 5, 5)), np.zeros((2, 4, 3, 3)), padding=1)
    assert y.shape == (1, 2, 5, 5) and np.all(y == 0)


@given(st.integers(0, 2**16), st.sampled_from([1, 2]), st.sampled_from([1, 2]), st.sampled_from([0, 1]),
       st.sampled_from([1, 3]))
def test_fast_conv2d_matches_loops(seed, groups, stride, pad, k):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4, 6, 7))
    kern = ConvKernel.init(rng, 4, 4, k, groups=groups, stride=stride, padding=pad)
    ref = naive_conv2d(x, kern.weight, kern.bias, stride, pad, groups)
    assert np.max(np.abs(ops.conv2d(x, kern) - ref)) <= 1e-6


@given(st.integers(0, 2**16), st.sampled_from([1, 3, 5]))
def test_fast_conv1d_matches_loops(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4, 7))
    kern = ConvKernel.init(rng, 3, 4, k, ndim=1)
    ref = naive_conv1d(x, kern.weight, kern.bias, padding=k // 2)
    assert np.max(np.abs(ops.conv1d(x, kern) - ref)) <= 1e-6


def test_oracle_refuses_large_inputs():
    with pytest.raises(ShapeError, match="16"):
        naive_conv2d(np.zeros((1, 1, 17, 4)), np.zeros((1, 1, 1, 1)))


def test_oracle_shape_mismatch():
    with pytest.raises(ShapeError):
        naive_conv2d(np.zeros((1, 3, 4, 4)), np.zeros((2, 2, 3, 3)))


# --- (2+1)D decomposition --------------------------------------------------

def _instance(seed, dtype=np.float64, bias=True):
    rng = np.random.default_rng(seed)
    kernel = ConvKernel.init(rng, 4, 3, 3, bias=bias, dtype=dtype)
    beta = rng.uniform(-1, 1, (4, 3)).astype(dtype)
    x = rng.uniform(-1, 1, (1, 3, 5, 6, 6)).astype(dtype)
    return x, kernel, beta


@pytest.mark.parametrize("with_relu", [False, True])
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-6), (np.float64, 1e-12)])
def test_decomposition_identity(with_relu, dtype, tol):
    for seed in range(10):
        assert r21d_decompose_check(*_instance(seed, dtype), with_relu) <= tol


def test_temporal_identity_gives_plain_framewise_conv():
    x, kernel, _ = _instance(0)
    beta = np.tile([0.0, 1.0, 0.0], (4, 1))
    expected = ops.framewise_conv2d(x, kernel)[0]
    np.testing.assert_array_equal(r21d_decomposed(x, kernel, beta, False), expected)
    np.testing.assert_array_equal(r21d_literal(x, kernel, beta, False), expected)


def test_relu_changes_the_result():
    x, kernel, beta = _instance(1)
    assert np.max(np.abs(r21d_literal(x, kernel, beta, True) - r21d_literal(x, kernel, beta, False))) > 1e-3


def test_float64_shrinks_the_discrepancy():
    errs = {dt: max(r21d_decompose_check(*_instance(s, dt), True) for s in range(5))
            for dt in (np.float32, np.float64)}
    assert errs[np.float64] * 1e4 <= errs[np.float32]


def test_decomposition_shape_errors():
    x, kernel, beta = _instance(0)
    with pytest.raises(ShapeError, match="beta"):
        r21d_decompose_check(x, kernel, beta[:, :2], False)
    with pytest.raises(ShapeError):
        r21d_decompose_check(np.concatenate([x, x]), kernel, beta, False)


@given(st.integers(0, 2**16))
def test_relu_mask_reconstructs_relu(seed):
    y = np.random.default_rng(seed).standard_normal((3, 4, 4))
    m = relu_mask(y)
    assert set(np.unique(m)) <= {0.0, 1.0}
    np.testing.assert_array_equal(m * y, np.maximum(y, 0))
    np.testing.assert_array_equal(m == 1, y > 0)


# --- per-frame materialisation ---------------------------------------------

def test_identity_generator_materializes_exactly(rng):
    base = ConvKernel.init(rng, 4, 4, 3, padding=1)
    gen = init_identity(CalibGenV1Params.random(rng, 4, r=2))
    assert perframe_kernel_oracle(rng.standard_normal((1, 4, 3, 5, 5)), TAdaConvParams(base, gen, "cin")) <= 1e-12


def test_random_v1_cin_materializes(rng):
    base = ConvKernel.init(rng, 6, 4, 3, padding=1)
    p = TAdaConvParams(base, CalibGenV1Params.random(rng, 4, r=2), CalibDim.CIN)
    assert perframe_kernel_oracle(rng.standard_normal((2, 4, 3, 5, 5)), p) <= 1e-6


def test_random_v2_depthwise_cout_materializes(rng):
    base = ConvKernel.init(rng, 8, 8, 3, groups=8, padding=1)
    p = TAdaConvParams(base, CalibGenV2Params.random(rng, 8, r=2, heads=2), CalibDim.COUT)
    assert perframe_kernel_oracle(rng.standard_normal((1, 8, 4, 5, 5)), p) <= 1e-6


# --- finite differences ----------------------------------------------------

def test_linear_layer_gradients_are_exact_to_rounding(rng):
    res = finite_diff_check(ops.linear, (rng.standard_normal((3, 4)), rng.standard_normal((5, 4)),
                                         rng.standard_normal(5)))
    assert res.max_error <= 1e-9
    assert set(res.errors) == {"arg0", "arg1", "arg2"}


def test_v1_chain_on_reference_shape():
    name, f, args, _ = next(c for c in checks.grad_cases(0) if c[0] == "tadaconv_v1")
    assert np.shape(args[0]) == (1, 4, 4, 5, 5)
    res = finite_diff_check(f, args)
    assert res.max_error <= 1e-5, res.worst


def test_tada2d_block_chain():
    _, f, args, _ = next(c for c in checks.grad_cases(0) if c[0] == "tada2d_block")
    res = finite_diff_check(f, args, max_coords=80)
    assert res.max_error <= 1e-5, res.worst


def test_large_leaves_are_subsampled(rng):
    res = finite_diff_check(lambda a: ops.mul(a, a), (rng.standard_normal((20, 20)),), max_coords=50)
    assert res.checked["arg0"] == 50


def test_wrong_gradient_is_detected(rng):
    from tadaconv.autodiff import primitive

    @primitive
    def bad_square(a):
        return a * a, lambda g: (g * a,)  # missing factor 2

    res = finite_diff_check(bad_square, (rng.uniform(1, 2, (3,)),))
    assert res.max_error > 0.4


def test_non_finite_values_raise(rng):
    with pytest.raises(FloatingPointError, match="non-finite"):
        finite_diff_check(lambda a: ops.mul(a, np.inf), (rng.standard_normal(3),))


def test_float32_inputs_are_rejected(rng):
    with pytest.raises(TypeError, match="float64"):
        finite_diff_check(ops.relu, (rng.standard_normal(3).astype(np.float32),))


# --- check records ---------------------------------------------------------

def test_check_record_json_shape():
    rec = checks.CheckRecord("decompose.linear", 3, "f64", 1e-15, 1e-12)
    d = rec.to_dict()
    assert d == {"check": "decompose.linear", "seed": 3, "dtype": "f64", "max_err": 1e-15,
                 "tolerance": 1e-12, "pass": True}
    json.dumps(d)
    low = checks.CheckRecord("oracle.adaptivity.generated", 0, "f64", 0.5, 1e-3, bound="lower")
    assert low.passed and low.to_dict()["bound"] == "lower"
    assert not checks.CheckRecord("x", 0, "f32", float("nan"), 1.0).passed


def test_suites_are_deterministic():
    a = [r.to_dict() for r in checks.run_suite("decompose", range(3))]
    b = [r.to_dict() for r in checks.run_suite("decompose", range(3))]
    assert a == b and all(r["pass"] for r in a)
    with pytest.raises(KeyError):
        checks.run_suite("nope", range(1))
