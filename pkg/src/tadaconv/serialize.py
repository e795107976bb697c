"""Parameter directories and JSON configs.

A parameter directory holds one tensor file per array plus ``manifest.json``,
which records the dataclass structure, each tensor's role and shape, and the
generator hyperparameters (r, K1, K2, h, use_global).

Configs describe an operator or block to build from a seed::

    {"variant": "v1", "dim": "cin", "r": 4, "K1": 3, "K2": 3, "heads": 4,
     "use_global": true, "conv": {"cin": 16, "cout": 16, "k": 3, "stride": 1,
     "pad": 1, "groups": 1}, "seed": 0, "init": "identity", "dtype": "f32"}

    {"block": "tada2d", "cin": 16, "width": 8, "cout": 16, "generator": "v1",
     "dim": "cin", "seed": 0, "init": "identity"}

The base kernel of an operator config is drawn from its own random stream, so
a ``conv2d`` config and a TAdaConv config sharing a seed have the same W_b.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from pathlib import Path

import numpy as np

from . import blocks, calibration, layer, ops
from .autodiff import value_of
from .tensor_io import read_tensor, write_tensor

__all__ = [
    "ConfigError", "save_params", "load_params", "generator_hyperparameters",
    "build_operator", "build_block", "build_from_config", "run_config", "load_config",
]

FORMAT = "tada-params"
MANIFEST = "manifest.json"

_TYPES = {cls.__name__: cls for cls in (
    ops.ConvKernel, ops.NormParams, calibration.LinearParams, calibration.MhsaParams,
    calibration.CalibGenV1Params, calibration.CalibGenV2Params, layer.TAdaConvParams,
    blocks.AggregationConfig, blocks.TAda2DBlockParams, blocks.TAdaConvNeXtV2BlockParams,
    blocks.TAdaFormerBlockParams,
)}


class ConfigError(ValueError):
    """Invalid config, manifest, or a mismatch between config and data."""


# ---------------------------------------------------------------------------
# Parameter trees
# ---------------------------------------------------------------------------

def _encode(obj, path, tensors):
    if isinstance(obj, np.ndarray):
        tensors.append((path, obj))
        return {"tensor": path}
    if dataclasses.is_dataclass(obj):
        name = type(obj).__name__
        if name not in _TYPES:
            raise ConfigError(f"cannot serialize {name}")
        fields = {f.name: _encode(getattr(obj, f.name), f"{path}.{f.name}" if path else f.name, tensors)
                  for f in dataclasses.fields(obj)}
        return {"type": name, "fields": fields}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, tuple):
        return {"tuple": [_encode(v, f"{path}.{i}", tensors) for i, v in enumerate(obj)]}
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise ConfigError(f"cannot serialize value of type {type(obj).__name__} at {path or '<root>'}")


def _decode(node, load):
    if isinstance(node, dict):
        if "tensor" in node:
            return load(node["tensor"])
        if "tuple" in node:
            return tuple(_decode(v, load) for v in node["tuple"])
        if "type" in node:
            cls = _TYPES.get(node["type"])
            if cls is None:
                raise ConfigError(f"unknown parameter type {node['type']!r}")
            return cls(**{k: _decode(v, load) for k, v in node["fields"].items()})
        raise ConfigError(f"unrecognised manifest node with keys {sorted(node)}")
    return node


def _find_generators(obj):
    if isinstance(obj, (calibration.CalibGenV1Params, calibration.CalibGenV2Params)):
        yield obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from _find_generators(getattr(obj, f.name))
    elif isinstance(obj, tuple):
        for v in obj:
            yield from _find_generators(v)


def generator_hyperparameters(gen) -> dict:
    """Hyperparameters of a calibration generator as stored in manifests."""
    hp = {"generator": "v1" if isinstance(gen, calibration.CalibGenV1Params) else "v2", "r": gen.r,
          "K1": gen.conv_reduce.kernel_size[0], "K2": gen.conv_expand.kernel_size[0]}
    if isinstance(gen, calibration.CalibGenV1Params):
        hp["use_global"] = gen.use_global
    else:
        hp["h"] = gen.mhsa.heads
    return hp


def _role(path: str, root) -> str:
    obj = root
    parts = path.split(".")
    for part in parts[:-1]:
        obj = obj[int(part)] if isinstance(obj, tuple) else getattr(obj, part)
    kind = "statistic" if parts[-1] in ("running_mean", "running_var") else "parameter"
    return f"{type(obj).__name__}.{parts[-1]} ({kind})"


def save_params(directory, params, extra: dict | None = None) -> Path:
    """Write ``params`` (any supported dataclass tree) under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors: list[tuple[str, np.ndarray]] = []
    tree = _encode(params, "", tensors)
    gens = list(_find_generators(params))
    entries = []
    for path, arr in tensors:
        fname = f"{path}.tada"
        write_tensor(directory / fname, arr)
        entries.append({"name": path, "file": fname, "role": _role(path, params),
                        "shape": list(arr.shape), "dtype": "f32" if arr.dtype == np.float32 else "f64"})
    manifest = {
        "format": FORMAT, "version": 1, "type": type(params).__name__,
        "hyperparameters": generator_hyperparameters(gens[0]) if gens else {},
        "tensors": entries, "tree": tree,
    }
    if extra:
        manifest["extra"] = extra
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_params(directory):
    """Inverse of :func:`save_params`; shapes are checked against the manifest."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"no {MANIFEST} in {directory}") from e
    if manifest.get("format") != FORMAT:
        raise ConfigError(f"{directory / MANIFEST} is not a parameter manifest")
    entries = {e["name"]: e for e in manifest["tensors"]}

    def load(name):
        if name not in entries:
            raise ConfigError(f"manifest tree references unknown tensor {name!r}")
        arr = read_tensor(directory / entries[name]["file"])
        if list(arr.shape) != entries[name]["shape"]:
            raise ConfigError(f"tensor {name}: file shape {list(arr.shape)} != manifest {entries[name]['shape']}")
        return arr

    try:
        return _decode(manifest["tree"], load)
    except (TypeError, KeyError) as e:
        raise ConfigError(f"malformed manifest in {directory}: {e}") from e


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------

_DTYPES = {"f32": np.float32, "float32": np.float32, "f64": np.float64, "float64": np.float64}
OP_VARIANTS = ("v1", "v2", "external", "conv2d")
BLOCKS = ("tada2d", "tadaconvnextv2", "tadaformer")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _dtype(cfg, default):
    name = cfg.get("dtype")
    if name is None:
        return default
    if name not in _DTYPES:
        raise ConfigError(f"unknown dtype {name!r}")
    return _DTYPES[name]


def _int(cfg, key, default=None):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing required field {key!r}")
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def _base_kernel(conv: dict, seed: int, dtype) -> ops.ConvKernel:
    cin, cout, k = _int(conv, "cin"), _int(conv, "cout"), _int(conv, "k")
    stride, groups = _int(conv, "stride", 1), _int(conv, "groups", 1)
    pad = _int(conv, "pad", k // 2)
    if cin % groups or cout % groups:
        raise ConfigError(f"groups={groups} must divide cin={cin} and cout={cout}")
    weight_init = conv.get("weight_init", "uniform")
    rng = np.random.default_rng([seed, 0])
    kern = ops.ConvKernel.init(rng, cout, cin, k, groups=groups, bias=bool(conv.get("bias", False)),
                               stride=stride, padding=pad, dtype=dtype)
    if weight_init == "dirac":
        if cout != cin:
            raise ConfigError("dirac weight_init needs cin == cout")
        w = np.zeros_like(kern.weight)
        for o in range(cout):
            w[o, o % (cin // groups), k // 2, k // 2] = 1
        b = None if kern.bias is None else np.zeros_like(kern.bias)
        kern = dataclasses.replace(kern, weight=w, bias=b)
    elif weight_init != "uniform":
        raise ConfigError(f"unknown weight_init {weight_init!r}")
    return kern


def build_operator(cfg: dict, dtype=np.float64):
    """TAdaConvParams (or a ConvKernel for ``variant: conv2d``) from an operator config."""
    variant = cfg.get("variant")
    if variant not in OP_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {OP_VARIANTS}")
    if "conv" not in cfg:
        raise ConfigError("operator config needs a 'conv' section")
    dtype = _dtype(cfg, dtype)
    seed = _int(cfg, "seed", 0)
    try:
        base = _base_kernel(cfg["conv"], seed, dtype)
        if variant == "conv2d":
            return base
        dim = layer.CalibDim(cfg.get("dim", "cin"))
        n_alpha = layer.alpha_size(base, dim)
        gen = None
        if variant != "external":
            rng = np.random.default_rng([seed, 1])
            r, k1, k2 = _int(cfg, "r", 4), _int(cfg, "K1", 3), _int(cfg, "K2", 3)
            if variant == "v1":
                gen = calibration.CalibGenV1Params.random(
                    rng, base.in_channels, r=r, k1=k1, k2=k2, out_channels=n_alpha,
                    use_global=bool(cfg.get("use_global", True)), dtype=dtype)
            else:
                gen = calibration.CalibGenV2Params.random(
                    rng, base.in_channels, r=r, k1=k1, k2=k2, heads=_int(cfg, "heads", 4),
                    out_channels=n_alpha, dtype=dtype)
            if cfg.get("init", "identity") == "identity":
                gen = calibration.init_identity(gen)
            elif cfg.get("init") != "random":
                raise ConfigError(f"unknown init {cfg.get('init')!r}")
        return layer.TAdaConvParams(base, gen, dim)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


_BLOCK_ARGS = {
    "tada2d": (("cin", "width", "cout"), {"stride": "stride", "r": "r", "K1": "k1", "K2": "k2",
                                           "generator": "generator", "dim": "dim", "pool": "pool"}),
    "tadaconvnextv2": (("c",), {"k": "k", "r": "r", "heads": "heads", "expansion": "expansion",
                                "generator": "generator", "pool": "pool", "aggregate": "aggregate",
                                "layer_scale": "layer_scale"}),
    "tadaformer": (("c",), {"hidden": "hidden", "k": "k", "r": "r", "heads": "heads", "pool": "pool"}),
}
_BLOCK_TYPES = {"tada2d": blocks.TAda2DBlockParams, "tadaconvnextv2": blocks.TAdaConvNeXtV2BlockParams,
                "tadaformer": blocks.TAdaFormerBlockParams}


def build_block(cfg: dict, dtype=np.float64):
    kind = cfg.get("block")
    if kind not in BLOCKS:
        raise ConfigError(f"unknown block {kind!r}; expected one of {BLOCKS}")
    dtype = _dtype(cfg, dtype)
    required, optional = _BLOCK_ARGS[kind]
    args = [_int(cfg, name) for name in required]
    kwargs = {py: cfg[js] for js, py in optional.items() if js in cfg}
    unknown = set(cfg) - set(required) - set(optional) - {"block", "seed", "init", "dtype", "params"}
    if unknown:
        raise ConfigError(f"unknown {kind} config fields: {sorted(unknown)}")
    rng = np.random.default_rng(_int(cfg, "seed", 0))
    try:
        p = _BLOCK_TYPES[kind].random(rng, *args, dtype=dtype, **kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    init = cfg.get("init", "identity")
    if init == "identity":
        p = blocks.identity_init(p)
    elif init != "random":
        raise ConfigError(f"unknown init {init!r}")
    return p


def build_from_config(cfg: dict, dtype=np.float64):
    """Parameters for an operator or block config; ``params`` loads a saved directory instead."""
    if "params" in cfg:
        return load_params(cfg["params"])
    if "block" in cfg:
        return build_block(cfg, dtype)
    return build_operator(cfg, dtype)


def _cast(tree, dtype):
    from .autodiff import tree_map

    return tree_map(lambda a, _path: np.asarray(a, dtype=dtype), tree, trainable_only=False)


def run_config(cfg: dict, x: np.ndarray, alpha: np.ndarray | None = None):
    """Forward pass described by ``cfg`` on ``x``.  Returns ``(y, alpha or None)``.

    Parameters are built in the dtype of ``x`` unless the config pins one, in
    which case the two must agree.
    """
    x = np.asarray(x)
    if x.ndim != 5:
        raise ConfigError(f"input must be [N,C,T,H,W], got rank {x.ndim} shape {x.shape}")
    if "dtype" in cfg and _dtype(cfg, None) != x.dtype:
        raise ConfigError(f"config dtype {cfg['dtype']} does not match input dtype {x.dtype}")
    p = build_from_config(cfg, x.dtype.type)
    if "params" in cfg:
        p = _cast(p, x.dtype)
    try:
        if isinstance(p, ops.ConvKernel):
            return value_of(ops.framewise_conv2d(x, p)), None
        if isinstance(p, layer.TAdaConvParams):
            if p.generator is None and alpha is None:
                n, _, t = x.shape[:3]
                alpha = np.ones((n, t, p.alpha_size), dtype=x.dtype)
            y, a = layer.tadaconv_forward(x, p, alpha, return_alpha=True)
            return value_of(y), np.asarray(value_of(a), dtype=x.dtype)
        if isinstance(p, blocks.TAda2DBlockParams):
            fwd = blocks.tada2d_block
        elif isinstance(p, blocks.TAdaConvNeXtV2BlockParams):
            fwd = blocks.tadaconvnextv2_block
        elif isinstance(p, blocks.TAdaFormerBlockParams):
            fwd = blocks.tadaformer_block
        else:
            raise ConfigError(f"cannot run parameters of type {type(p).__name__}")
        a = layer.compute_alpha(_block_tada_input(x, p), p.tada)
        return value_of(fwd(x, p)), np.asarray(value_of(a), dtype=x.dtype)
    except ops.ShapeError as e:
        raise ConfigError(str(e)) from e


def _block_tada_input(x, p):
    """Activation that reaches the block's TAdaConv (for ``--dump-alpha``)."""
    if isinstance(p, blocks.TAda2DBlockParams):
        h = ops.framewise_conv2d(x, p.conv1)
        return ops.relu(ops.normalize(h, p.norm1, axis=1))
    if isinstance(p, blocks.TAdaFormerBlockParams):
        return ops.framewise_conv2d(x, p.pw_in)
    return x

