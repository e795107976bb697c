"""Command-line entry point: ``tadaconv {cost,check,bench,run}``.

Exit codes: 0 success, 1 check failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import nullcontext

import numpy as np

from . import blocks, calibration, checks, cost, ops, serialize
from .layer import CalibDim, TAdaConvParams, tadaconv_forward
from .ops import ConvKernel
from .tensor_io import TensorFormatError, read_tensor, write_tensor

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

BENCH_OPS = ("conv2d", "conv21d", "tadaconv-v1", "tadaconv-v2", "tada2d-block")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _threads_default():
    env = os.environ.get("TADA_THREADS")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"TADA_THREADS must be an integer, got {env!r}") from None


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------

def _render_report(title, report: cost.CostReport, delta: cost.CostDelta | None, out):
    print(title, file=out)
    width = max([len(l.name) for l in report.layers] + [5])
    print(f"  {'layer':<{width}}  {'FLOPs (MAC)':>16}  {'params':>12}", file=out)
    for l in report.layers:
        print(f"  {l.name:<{width}}  {l.flops:>16,}  {l.params:>12,}", file=out)
    print(f"  {'total':<{width}}  {report.flops:>16,}  {report.params:>12,}", file=out)
    print(f"  = {report.gflops:.4f} GFLOPs, {report.mparams:.4f} M params", file=out)
    if delta is not None:
        d = delta.to_dict()
        print(f"  vs conv2d: {delta.flops:+,} FLOPs ({d['flops_pct_rounded']}), "
              f"{delta.params:+,} params ({d['params_pct_rounded']})", file=out)
    for a in report.assumptions:
        print(f"  assumption: {a}", file=out)


def cmd_cost(args, out) -> int:
    if args.net is not None:
        try:
            catalog = cost.load_catalog(args.catalog)
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"cannot load catalog: {e}") from e
        if args.net not in catalog:
            raise UsageError(f"unknown catalog entry {args.net!r}; available: {', '.join(sorted(catalog))}")
        net = catalog[args.net]
        hw = 224 if args.hw is None else args.hw
        try:
            report = cost.network_cost(net, args.variant, t=args.t, hw=hw, classes=args.classes)
            baseline = cost.network_cost(net, "conv2d", t=args.t, hw=hw, classes=args.classes)
        except ValueError as e:
            raise UsageError(str(e)) from e
        title = f"{args.net} ({args.variant or net.variant}) at {args.t}x{hw}x{hw}"
    else:
        missing = [f"--{n}" for n in ("co", "ci", "hw") if getattr(args, n) is None]
        if missing:
            raise UsageError(f"--op needs {', '.join(missing)}")
        try:
            spec = cost.OpCostSpec(args.co, args.ci, args.k, args.t, args.hw, args.hw, args.r,
                                   args.variant or "tadaconv")
        except ValueError as e:
            raise UsageError(str(e)) from e
        report = cost.op_cost(spec)
        baseline = cost.op_cost(cost.OpCostSpec(args.co, args.ci, args.k, args.t, args.hw, args.hw, args.r,
                                                "conv2d"))
        title = f"op {spec.variant}: C_o={spec.c_out} C_i={spec.c_in} K={spec.k} T={spec.t} H=W={spec.h} r={spec.r}"
    delta = cost.cost_diff(report, baseline)
    if args.json:
        print(_dump({"report": report.to_dict(), "vs_conv2d": delta.to_dict()}), file=out)
    else:
        _render_report(title, report, delta, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(args, out) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    seeds = range(args.seed, args.seed + args.seeds)
    suites = list(checks.SUITES) if args.suite == "all" else [args.suite]
    with _thread_limit(args.threads):
        records = [r for s in suites for r in checks.run_suite(s, seeds)]
    failures = [r for r in records if not r.passed]
    summary = {}
    for r in records:
        entry = summary.setdefault(r.check, {"runs": 0, "failed": 0, "max_err": 0.0, "tolerance": r.tolerance})
        entry["runs"] += 1
        entry["failed"] += not r.passed
        entry["max_err"] = max(entry["max_err"], r.max_err)
    if args.json:
        payload = {"suites": suites, "seeds": args.seeds, "total": len(records), "failed": len(failures),
                   "summary": summary, "failures": [r.to_dict() for r in failures]}
        if args.all_records:
            payload["records"] = [r.to_dict() for r in records]
        print(_dump(payload), file=out)
    else:
        for name, e in summary.items():
            status = "PASS" if e["failed"] == 0 else "FAIL"
            print(f"{status}  {name:<40} {e['runs'] - e['failed']}/{e['runs']}  "
                  f"max_err={e['max_err']:.3e}  tol={e['tolerance']:.0e}", file=out)
        print(f"{len(records) - len(failures)}/{len(records)} checks passed", file=out)
        for r in failures:
            print(_dump(r.to_dict()), file=out)
    return EXIT_CHECK_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _parse_shape(text):
    try:
        shape = tuple(int(s) for s in text.replace("x", ",").split(","))
    except ValueError:
        raise UsageError(f"invalid --shape {text!r}; expected N,C,T,H,W") from None
    if len(shape) != 5 or any(s < 1 for s in shape):
        raise UsageError(f"invalid --shape {text!r}; expected five positive sizes N,C,T,H,W")
    return shape


def _heads_for(d):
    return next(h for h in (4, 2, 1) if d % h == 0)


def _bench_setup(op, shape, k, r, seed):
    """Forward closure, input and analytic cost for one bench op."""
    n, c, t, h, w = shape
    if c % r:
        raise UsageError(f"C={c} must be divisible by r={r}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape).astype(np.float32)
    base = ConvKernel.init(rng, c, c, k, dtype=np.float32)
    if op == "conv2d":
        fwd, variant = (lambda: ops.framewise_conv2d(x, base)), "conv2d"
    elif op == "conv21d":
        temporal = ConvKernel.init(rng, c, c, (3, 1), padding=(1, 0), dtype=np.float32)

        def fwd():
            y = ops.framewise_conv2d(x, base)
            return ops.conv2d(y.reshape(n, c, t, h * w), temporal).reshape(y.shape)
        variant = "conv21d"
    elif op in ("tadaconv-v1", "tadaconv-v2"):
        if op == "tadaconv-v1":
            gen = calibration.CalibGenV1Params.random(rng, c, r=r, dtype=np.float32)
        else:
            gen = calibration.CalibGenV2Params.random(rng, c, r=r, heads=_heads_for(c // r), dtype=np.float32)
        p = TAdaConvParams(base, gen, CalibDim.CIN)
        fwd, variant = (lambda: tadaconv_forward(x, p)), "tadaconv"
    else:
        p = blocks.TAda2DBlockParams.random(rng, c, c, c, r=r, dtype=np.float32)
        fwd, variant = (lambda: blocks.tada2d_block(x, p)), "tadaconv_agg"
    spec = cost.OpCostSpec(c, c, k, t, h, w, r, variant)
    report = cost.op_cost(spec)
    baseline = cost.op_cost(cost.OpCostSpec(c, c, k, t, h, w, r, "conv2d"))
    macs = report.flops * n
    if op == "tada2d-block":
        macs += 2 * c * c * t * h * w * n  # the two 1x1 convs
    return fwd, macs, cost.cost_diff(report, baseline)


def cmd_bench(args, out) -> int:
    shape = _parse_shape(args.shape)
    if args.iters < 1 or args.warmup < 0:
        raise UsageError("--iters must be >= 1 and --warmup >= 0")
    fwd, macs, delta = _bench_setup(args.op, shape, args.k, args.r, args.seed)
    d = delta.to_dict()
    result = {"op": args.op, "shape": list(shape), "k": args.k, "r": args.r, "seed": args.seed,
              "analytic_macs": macs,
              "overhead_vs_conv2d": {"flops": delta.flops, "flops_pct": d["flops_pct"],
                                     "flops_pct_rounded": d["flops_pct_rounded"],
                                     "params": delta.params, "params_pct_rounded": d["params_pct_rounded"]}}
    if not args.no_timing:
        with _thread_limit(args.threads):
            for _ in range(args.warmup):
                fwd()
            times = []
            for _ in range(args.iters):
                t0 = time.perf_counter()
                fwd()
                times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        result["timing"] = {"iters": args.iters, "warmup": args.warmup, "threads": args.threads,
                            "median_s": med, "p10_s": float(np.percentile(times, 10)),
                            "p90_s": float(np.percentile(times, 90)), "macs_per_s": macs / med if med else None}
    if args.json:
        print(_dump(result), file=out)
    else:
        print(f"{args.op} on {'x'.join(map(str, shape))}: {macs:,} MACs (analytic)", file=out)
        print(f"  overhead vs conv2d: {delta.flops:+,} FLOPs ({d['flops_pct_rounded']})", file=out)
        if "timing" in result:
            tm = result["timing"]
            print(f"  median {tm['median_s'] * 1e3:.3f} ms  p10 {tm['p10_s'] * 1e3:.3f} ms  "
                  f"p90 {tm['p90_s'] * 1e3:.3f} ms  {tm['macs_per_s'] / 1e9:.2f} GMAC/s", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args, out) -> int:
    try:
        cfg = serialize.load_config(args.config)
        x = read_tensor(args.input)
        alpha = read_tensor(args.alpha) if args.alpha else None
        with _thread_limit(args.threads):
            y, a = serialize.run_config(cfg, x, alpha)
    except (serialize.ConfigError, TensorFormatError, OSError, ValueError) as e:
        raise UsageError(str(e)) from e
    write_tensor(args.output, np.ascontiguousarray(y, dtype=x.dtype))
    if args.dump_alpha:
        if a is None:
            raise UsageError("--dump-alpha: this config has no calibration weights")
        write_tensor(args.dump_alpha, np.ascontiguousarray(a))
    print(f"wrote {args.output} {list(y.shape)} {y.dtype}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tadaconv", description="Temporally-adaptive convolution toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cost", help="FLOPs / parameter report")
    what = c.add_mutually_exclusive_group(required=True)
    what.add_argument("--op", action="store_true", help="a single conv replacement")
    what.add_argument("--net", metavar="NAME", help="a catalog network")
    c.add_argument("--variant", choices=cost.VARIANTS)
    c.add_argument("--co", type=int)
    c.add_argument("--ci", type=int)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--t", type=int, default=8)
    c.add_argument("--hw", type=int, help="frame height = width (default 224 for --net)")
    c.add_argument("--r", type=int, default=4)
    c.add_argument("--classes", type=int)
    c.add_argument("--catalog", help="network catalog JSON (default: bundled)")
    c.add_argument("--json", action="store_true")

    k = sub.add_parser("check", help="run property / oracle suites")
    k.add_argument("--suite", choices=[*checks.SUITES, "all"], default="all")
    k.add_argument("--seeds", type=int, default=10)
    k.add_argument("--seed", type=int, default=0, help="first seed")
    k.add_argument("--threads", type=int, default=_threads_default())
    k.add_argument("--json", action="store_true")
    k.add_argument("--all-records", action="store_true", help="include passing records in JSON")

    b = sub.add_parser("bench", help="micro-benchmark one op")
    b.add_argument("--op", choices=BENCH_OPS, required=True)
    b.add_argument("--shape", default="1,64,8,56,56", help="N,C,T,H,W")
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--r", type=int, default=4)
    b.add_argument("--iters", type=int, default=10)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--threads", type=int, default=_threads_default())
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-timing", action="store_true", help="skip execution; analytic numbers only")
    b.add_argument("--json", action="store_true")

    r = sub.add_parser("run", help="forward pass of a config over a tensor file")
    r.add_argument("--config", required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--output", required=True)
    r.add_argument("--alpha", help="calibration weights [N,T,S] for external-variant configs")
    r.add_argument("--dump-alpha", metavar="PATH")
    r.add_argument("--threads", type=int, default=_threads_default())
    return p


COMMANDS = {"cost": cmd_cost, "check": cmd_check, "bench": cmd_bench, "run": cmd_run}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        print(f"tadaconv: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
