"""Closed-form FLOPs and parameter accounting.

FLOPs are counted as multiply-accumulates (one MAC = one FLOP).  With that
convention the 64-channel, 8x56x56, 3x3 reference layer costs
64*64*9*8*56*56 = 924,844,032 as a plain conv.
Normalisation, activation and pooling costs are never added to ``flops``; the
per-layer breakdown reports them separately under ``aux_flops``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

__all__ = [
    "VARIANTS", "OpCostSpec", "LayerCost", "CostReport", "CostDelta", "op_cost",
    "StemSpec", "StageSpec", "NetworkSpec", "load_catalog", "network_cost", "cost_diff",
    "round_pct",
]

VARIANTS = ("conv2d", "conv21d", "tadaconv", "tadaconv_agg")


@dataclass(frozen=True)
class OpCostSpec:
    c_out: int
    c_in: int
    k: int
    t: int
    h: int
    w: int
    r: int = 4
    variant: str = "tadaconv"

    def __post_init__(self):
        for name in ("c_out", "c_in", "k", "t", "h", "w", "r"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.c_in % self.r:
            raise ValueError(f"r={self.r} must divide C_i={self.c_in}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass
class LayerCost:
    name: str
    flops: int
    params: int
    aux_flops: int = 0


@dataclass
class CostReport:
    flops: int
    params: int
    layers: list[LayerCost] = field(default_factory=list)
    assumptions: list[str] = field(default_factory=list)

    @classmethod
    def from_layers(cls, layers, assumptions=()):
        return cls(sum(l.flops for l in layers), sum(l.params for l in layers), list(layers), list(assumptions))

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    @property
    def mparams(self) -> float:
        return self.params / 1e6

    def to_dict(self) -> dict:
        return {"flops": self.flops, "params": self.params, "gflops": self.gflops, "mparams": self.mparams,
                "layers": [asdict(l) for l in self.layers], "assumptions": list(self.assumptions)}


# ---------------------------------------------------------------------------
# Operator level
# ---------------------------------------------------------------------------

def _op_terms(c_o, c_i, k, t, h_out, w_out, r, variant, h_in=None, w_in=None):
    """Layer list for one op.  ``h_in/w_in`` are where the descriptors are pooled."""
    h_in = h_out if h_in is None else h_in
    w_in = w_out if w_in is None else w_in
    thw = t * h_out * w_out
    layers = [LayerCost("spatial_conv", c_o * c_i * k * k * thw, c_o * c_i * k * k)]
    if variant == "conv21d":
        layers.append(LayerCost("temporal_conv", c_o * c_i * k * thw, c_o * c_i * k))
    elif variant in ("tadaconv", "tadaconv_agg"):
        layers += [
            LayerCost("descriptor_pooling", c_i * (t * h_in * w_in + t), 0),
            LayerCost("calibration_generator", c_i * (c_i // r) * (2 * k * t + 1), 2 * c_i * (c_i // r) * k),
            LayerCost("kernel_calibration", c_o * c_i * k * k * t, 0),
        ]
        if variant == "tadaconv_agg":
            # Pooled-branch norm (affine pair per channel); pool + norms are aux work.
            layers.append(LayerCost("temporal_aggregation", 0, 2 * c_o, aux_flops=(k + 4) * c_o * thw))
    return layers


def op_cost(spec: OpCostSpec) -> CostReport:
    """Operator-level cost of one conv replacement at a fixed resolution."""
    layers = _op_terms(spec.c_out, spec.c_in, spec.k, spec.t, spec.h, spec.w, spec.r, spec.variant)
    return CostReport.from_layers(layers)


# ---------------------------------------------------------------------------
# Network level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StemSpec:
    cin: int = 3
    cout: int = 64
    k: int = 7
    kt: int = 1
    stride: int = 2


@dataclass(frozen=True)
class StageSpec:
    name: str
    width: int
    out: int
    blocks: int
    stride: int = 1


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    stem: StemSpec
    stages: tuple[StageSpec, ...]
    classes: int = 400
    r: int = 4
    variant: str = "conv2d"

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "NetworkSpec":
        return cls(name=name, stem=StemSpec(**d["stem"]),
                   stages=tuple(StageSpec(**s) for s in d["stages"]),
                   classes=d.get("classes", 400), r=d.get("r", 4), variant=d.get("variant", "conv2d"))


def load_catalog(path=None) -> dict[str, NetworkSpec]:
    """Bundled (or user-supplied) catalog of network structures."""
    if path is None:
        text = resources.files("tadaconv").joinpath("data/networks.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)["networks"]
    out = {}
    for name, entry in raw.items():
        merged = dict(raw[entry["base"]], **{k: v for k, v in entry.items() if k != "base"}) if "base" in entry else entry
        out[name] = NetworkSpec.from_dict(name, merged)
    return out


def _downsample(size, stride, where):
    if size % stride:
        raise ValueError(f"inconsistent resolution plan at {where}: {size} not divisible by stride {stride}")
    return size // stride


NETWORK_ASSUMPTIONS = [
    "FLOPs count multiply-accumulates; norms, activations and pooling are excluded (reported as aux_flops).",
    "Stem is a 1x7x7 conv with spatial stride 2 and no max pooling; each stage downsamples in its 3x3 conv.",
    "Convs have no bias; every norm is a batchnorm contributing 2 params per channel.",
    "The first block of each stage has a 1x1 projection shortcut (conv + BN) with the stage stride.",
    "The classifier is global average pooling + a fully connected layer with bias.",
    "TAdaConv calibrates C_in of each 3x3 conv. Besides the two generator convs, it counts a CxC global "
    "linear map (+bias), the first generator conv's bias and the generator BN.",
    "R(2+1)D adds a dense 3x1x1 temporal conv + BN after each 3x3 spatial conv.",
]


def network_cost(net: NetworkSpec, variant: str | None = None, t: int = 8, hw: int = 224,
                 classes: int | None = None) -> CostReport:
    """Per-layer cost of a ResNet-style video backbone for a ``t x hw x hw`` clip."""
    variant = net.variant if variant is None else variant
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    classes = net.classes if classes is None else classes
    r = net.r
    layers: list[LayerCost] = []

    def conv(name, cout, cin, k, kt, t_, h, w):
        layers.append(LayerCost(name, cout * cin * k * k * kt * t_ * h * w, cout * cin * k * k * kt))

    def bn(name, c, t_, h, w):
        layers.append(LayerCost(name, 0, 2 * c, aux_flops=2 * c * t_ * h * w))

    s = net.stem
    res = _downsample(hw, s.stride, "stem")
    conv("stem.conv", s.cout, s.cin, s.k, s.kt, t, res, res)
    bn("stem.bn", s.cout, t, res, res)
    cin = s.cout
    for st in net.stages:
        for b in range(st.blocks):
            stride = st.stride if b == 0 else 1
            res_in = res
            res_out = _downsample(res, stride, f"{st.name}.{b}")
            p = f"{st.name}.{b}"
            conv(f"{p}.conv1", st.width, cin, 1, 1, t, res_in, res_in)
            bn(f"{p}.bn1", st.width, t, res_in, res_in)
            for term in _op_terms(st.width, st.width, 3, t, res_out, res_out, r, variant, res_in, res_in):
                layers.append(LayerCost(f"{p}.conv2.{term.name}", term.flops, term.params, term.aux_flops))
            if variant in ("tadaconv", "tadaconv_agg"):
                c, cr = st.width, st.width // r
                layers.append(LayerCost(f"{p}.conv2.generator_extras", c * c, c * c + c + cr + 2 * cr))
            bn(f"{p}.bn2", st.width, t, res_out, res_out)
            if variant == "conv21d":
                bn(f"{p}.bn2t", st.width, t, res_out, res_out)
            conv(f"{p}.conv3", st.out, st.width, 1, 1, t, res_out, res_out)
            bn(f"{p}.bn3", st.out, t, res_out, res_out)
            if b == 0 and (cin != st.out or stride != 1):
                conv(f"{p}.downsample", st.out, cin, 1, 1, t, res_out, res_out)
                bn(f"{p}.downsample_bn", st.out, t, res_out, res_out)
            cin = st.out
            res = res_out
    layers.append(LayerCost("head.fc", cin * classes, cin * classes + classes, aux_flops=cin * t * res * res))
    return CostReport.from_layers(layers, NETWORK_ASSUMPTIONS)


# ---------------------------------------------------------------------------
# Deltas
# ---------------------------------------------------------------------------

def round_pct(pct: float) -> str:
    """Percent rounded the way the comparison table prints it.

    Integers at or above 1%, one significant digit below.
    """
    if pct == 0:
        return "0%"
    if abs(pct) >= 1:
        return f"{round(pct):d}%"
    return f"{float(f'{pct:.1g}'):g}%"


@dataclass
class CostDelta:
    flops: int
    params: int
    flops_pct: float
    params_pct: float

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def to_dict(self) -> dict:
        return {"flops": self.flops, "params": self.params, "gflops": self.gflops,
                "flops_pct": self.flops_pct, "params_pct": self.params_pct,
                "flops_pct_rounded": round_pct(self.flops_pct), "params_pct_rounded": round_pct(self.params_pct)}


def cost_diff(a: CostReport, b: CostReport) -> CostDelta:
    """Absolute and relative change going from ``b`` (baseline) to ``a``."""
    def pct(x, base):
        return 0.0 if x == 0 else 100.0 * x / base

    df, dp = a.flops - b.flops, a.params - b.params
    return CostDelta(df, dp, pct(df, b.flops), pct(dp, b.params))
