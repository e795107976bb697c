import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tadaconv import ops
from tadaconv.calibration import CalibGenV1Params
from tadaconv.cost import (VARIANTS, NetworkSpec, OpCostSpec, StageSpec, StemSpec, cost_diff, load_catalog,
                           network_cost, op_cost, round_pct)
from tadaconv.layer import CalibDim, TAdaConvParams, tadaconv_forward
from tadaconv.ops import ConvKernel

EXAMPLE = dict(c_out=64, c_in=64, k=3, t=8, h=56, w=56, r=4)


def _op(variant, **kw):
    return op_cost(OpCostSpec(**{**EXAMPLE, **kw}, variant=variant))


# Reference operator-level numbers for the 64-channel 8x56x56 example.
@pytest.mark.parametrize("variant,flops,params", [
    ("tadaconv", 926_795_264, 43_008),
    ("conv21d", 1_233_125_376, 49_152),
    ("conv2d", 924_844_032, 36_864),
])
def test_operator_example_is_integer_exact(variant, flops, params):
    rep = _op(variant)
    assert (rep.flops, rep.params) == (flops, params)


def test_operator_example_rounds_to_reference_gflops():
    assert f"{_op('tadaconv').gflops:.4f}" == "0.9268"
    assert f"{_op('conv21d').gflops:.4f}" == "1.2331"


def test_operator_deltas_against_plain_conv():
    base = _op("conv2d")
    d21 = cost_diff(_op("conv21d"), base)
    dta = cost_diff(_op("tadaconv"), base)
    assert f"{d21.gflops:.3f}" == "0.308" and round_pct(d21.flops_pct) == "33%"
    assert f"{dta.gflops:.3f}" == "0.002" and round_pct(dta.flops_pct) == "0.2%"
    assert (d21.params, round_pct(d21.params_pct)) == (12_288, "33%")
    assert (dta.params, round_pct(dta.params_pct)) == (6_144, "17%")


def test_identical_reports_have_zero_delta():
    d = cost_diff(_op("tadaconv"), _op("tadaconv"))
    assert (d.flops, d.params, d.flops_pct, d.params_pct) == (0, 0, 0.0, 0.0)
    assert d.to_dict()["flops_pct_rounded"] == "0%"


def test_round_pct_rounding():
    assert round_pct(33.33) == "33%"
    assert round_pct(0.2111) == "0.2%"
    assert round_pct(0.0625) == "0.06%"
    assert round_pct(16.67) == "17%"


def test_invalid_op_settings_raise():
    with pytest.raises(ValueError, match="divide"):
        OpCostSpec(64, 62, 3, 8, 56, 56, r=4)
    with pytest.raises(ValueError, match="positive"):
        OpCostSpec(64, 64, 0, 8, 56, 56)
    with pytest.raises(ValueError, match="variant"):
        OpCostSpec(64, 64, 3, 8, 56, 56, variant="conv3d")


FIELDS = ["c_out", "c_in", "k", "t", "h", "w"]


@given(st.sampled_from(VARIANTS), st.sampled_from(FIELDS),
       st.fixed_dictionaries({f: st.integers(1, 32) for f in FIELDS}), st.sampled_from([1, 2, 4]))
def test_cost_is_strictly_increasing_in_every_dimension(variant, field, dims, r):
    dims["c_in"] *= r
    spec = dict(dims, r=r, variant=variant)
    bigger = dict(spec, **{field: spec[field] + (r if field == "c_in" else 1)})
    assert op_cost(OpCostSpec(**bigger)).flops > op_cost(OpCostSpec(**spec)).flops


@given(st.sampled_from(VARIANTS), st.integers(1, 8), st.sampled_from([1, 3, 5]))
def test_report_totals_equal_layer_sums(variant, t, k):
    rep = op_cost(OpCostSpec(16, 16, k, t, 7, 7, r=4, variant=variant))
    assert rep.flops == sum(l.flops for l in rep.layers)
    assert rep.params == sum(l.params for l in rep.layers)


# --- network level ---------------------------------------------------------

@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


@pytest.mark.parametrize("name,gflops,mparams", [
    ("r50-r2d", 33.0, 24.3),
    ("r50-tadaconv", 33.02, 27.5),
    ("r50-r21d", 37.94, 28.1),
])
def test_resnet50_within_three_percent(catalog, name, gflops, mparams):
    rep = network_cost(catalog[name], t=8, hw=224, classes=400)
    assert abs(rep.gflops / gflops - 1) <= 0.03
    assert abs(rep.mparams / mparams - 1) <= 0.03
    assert rep.assumptions


@pytest.mark.parametrize("name", ["r50-r2d", "r50-r21d", "r50-tadaconv", "r50-tada2d"])
def test_network_totals_equal_layer_sums(catalog, name):
    rep = network_cost(catalog[name])
    assert rep.flops == sum(l.flops for l in rep.layers)
    assert rep.params == sum(l.params for l in rep.layers)
    assert len(rep.to_dict()["layers"]) == len(rep.layers)


def test_r2d_backbone_has_standard_resnet50_parameter_count(catalog):
    # 23.5M backbone + 2048*400+400 head.
    rep = network_cost(catalog["r50-r2d"], classes=400)
    head = [l for l in rep.layers if l.name == "head.fc"][0]
    assert head.params == 2048 * 400 + 400
    assert abs((rep.params - head.params) / 1e6 - 23.51) < 0.01


def test_aggregation_variant_adds_only_norm_parameters(catalog):
    a = network_cost(catalog["r50-tada2d"])
    b = network_cost(catalog["r50-tadaconv"])
    assert a.flops == b.flops
    assert a.params - b.params == 2 * sum(s.width * s.blocks for s in catalog["r50-r2d"].stages)


def test_inconsistent_resolution_plan_raises(catalog):
    net = catalog["r50-r2d"]
    with pytest.raises(ValueError, match="resolution"):
        network_cost(net, hw=220)
    odd = NetworkSpec("odd", StemSpec(), (StageSpec("s", 8, 16, 1, stride=3),))
    with pytest.raises(ValueError, match="resolution"):
        network_cost(odd, hw=32)


def test_custom_catalog_file(tmp_path):
    import json

    path = tmp_path / "nets.json"
    path.write_text(json.dumps({"networks": {
        "tiny": {"stem": {"cin": 3, "cout": 8, "k": 3, "stride": 2},
                 "stages": [{"name": "s1", "width": 4, "out": 8, "blocks": 1, "stride": 1}], "classes": 10},
        "tiny-tada": {"base": "tiny", "variant": "tadaconv"},
    }}))
    nets = load_catalog(path)
    assert nets["tiny-tada"].variant == "tadaconv" and nets["tiny-tada"].stages == nets["tiny"].stages
    assert network_cost(nets["tiny-tada"], t=2, hw=16).flops > network_cost(nets["tiny"], t=2, hw=16).flops


# --- measured MACs ---------------------------------------------------------

def test_counted_macs_agree_with_the_closed_form():
    c, k, t, hw, r = 16, 3, 4, 14, 4
    rng = np.random.default_rng(0)
    base = ConvKernel.init(rng, c, c, k, bias=False, padding=1)
    gen = CalibGenV1Params.random(rng, c, r=r, k1=k, k2=k, use_global=True)
    p = TAdaConvParams(base, gen, CalibDim.CIN)
    x = rng.standard_normal((1, c, t, hw, hw))
    with ops.count_macs() as macs:
        tadaconv_forward(x, p)
    terms = {l.name: l.flops for l in op_cost(OpCostSpec(c, c, k, t, hw, hw, r=r)).layers}
    assert macs["conv2d"] == terms["spatial_conv"]
    # Generator convs: the 2*K*T part of the closed-form generator term.
    assert macs["conv1d"] == c * (c // r) * 2 * k * t
    # The global pathway is a CxC map, which the closed form books as C*C/r.
    assert macs["linear"] == c * c
    assert terms["calibration_generator"] == c * (c // r) * (2 * k * t + 1)


def test_counted_macs_for_plain_conv_match_conv2d_variant():
    rng = np.random.default_rng(1)
    base = ConvKernel.init(rng, 8, 6, 3, bias=False, padding=1)
    with ops.count_macs() as macs:
        ops.framewise_conv2d(rng.standard_normal((1, 6, 3, 9, 9)), base)
    assert macs["conv2d"] == op_cost(OpCostSpec(8, 6, 3, 3, 9, 9, r=1, variant="conv2d")).flops
