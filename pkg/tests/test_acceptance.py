"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
under output capture) or directly as ``python3 tests/test_acceptance.py``.
"""
import io
import json
import sys
import time

import numpy as np

from tadaconv import checks
from tadaconv.cli import main as cli_main
from tadaconv.cost import OpCostSpec, load_catalog, network_cost, op_cost
from tadaconv.oracles import finite_diff_check

SEEDS = range(100)


# Collected for the terminal summary (see conftest.py).
RESULT_LINES: list[str] = []


def _gate(number, title, fn, limit_s, capsys=None):
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < limit_s
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail} | {elapsed:.2f}s (limit {limit_s:g}s)"
    RESULT_LINES.append(line)
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    assert ok, f"criterion {number}: {detail}, {elapsed:.2f}s"


def _records_ok(records):
    bad = [r.to_dict() for r in records if not r.passed]
    worst = max((r.max_err for r in records if r.bound == "upper"), default=0.0)
    detail = f"{len(records) - len(bad)}/{len(records)} pass, worst upper-bound err {worst:.2e}"
    lower = [r.max_err for r in records if r.bound == "lower"]
    if lower:
        detail += f", smallest lower-bound gap {min(lower):.2e}"
    return not bad, detail + (f", first failure {bad[0]}" if bad else "")


def operator_costs():
    tada = op_cost(OpCostSpec(64, 64, 3, 8, 56, 56, r=4, variant="tadaconv"))
    r21d = op_cost(OpCostSpec(64, 64, 3, 8, 56, 56, r=4, variant="conv21d"))
    got = (tada.flops, tada.params, r21d.flops, r21d.params)
    return got == (926_795_264, 43_008, 1_233_125_376, 49_152), f"tadaconv {got[0]:,}/{got[1]:,}, (2+1)D {got[2]:,}/{got[3]:,}"


def network_costs():
    nets = load_catalog()
    targets = {"r50-tadaconv": (33.02, 27.5), "r50-r21d": (37.94, 28.1)}
    parts, ok = [], True
    for name, (gf, mp) in targets.items():
        rep = network_cost(nets[name], t=8, hw=224, classes=400)
        df, dp = rep.gflops / gf - 1, rep.mparams / mp - 1
        ok &= abs(df) <= 0.03 and abs(dp) <= 0.03 and bool(rep.assumptions)
        parts.append(f"{name} {rep.gflops:.3f}G ({df:+.2%}) {rep.mparams:.3f}M ({dp:+.2%})")
    return ok, "; ".join(parts)


def identity_at_init():
    records = checks.identity_suite(SEEDS)
    names = {r.check for r in records}
    covered = (all(any(f".{g}." in n or n.endswith(f".{g}") for n in names) for g in ("v1", "v2"))
               and all(any(n.endswith(f".{d}") for n in names) for d in ("cin", "cout", "cincout", "k2"))
               and all(any(b in n for n in names) for b in checks.BLOCK_KINDS))
    ok, detail = _records_ok(records)
    return ok and covered, detail + ("" if covered else ", incomplete coverage")


def decomposition():
    return _records_ok(checks.decompose_suite(SEEDS))


def materialization():
    return _records_ok([checks.materialization_check(s) for s in SEEDS])


def broadcast_algebra():
    return _records_ok([r for s in SEEDS for r in checks.broadcast_checks(s)])


def gradients():
    cases = checks.grad_cases(0)
    required = {"tadaconv_v1", "tadaconv_v2", "tada2d_block"}
    records = []
    for name, f, args, _tol in cases:
        for a in args:
            shape = np.shape(a) if isinstance(a, np.ndarray) else ()
            if len(shape) == 5:
                n, c, t, h, w = shape
                assert n == 1 and c <= 6 and t <= 4 and h == w <= 5, (name, shape)
        res = finite_diff_check(f, args, cotangent=checks.fixed_cotangent(f, args, 0))
        records.append(checks.CheckRecord(f"grad.{name}", 0, "f64", res.max_error, 1e-5))
    ok, detail = _records_ok(records)
    return ok and required <= {c[0] for c in cases}, detail


def temporal_adaptivity():
    return _records_ok([r for s in SEEDS for r in checks.adaptivity_checks(s)])


def cli_overheads():
    rounded = {}
    for op in ("tadaconv-v1", "conv21d"):
        out = io.StringIO()
        code = cli_main(["bench", "--op", op, "--shape", "1,64,8,56,56", "--k", "3", "--r", "4",
                         "--no-timing", "--json"], out)
        rounded[op] = json.loads(out.getvalue())["overhead_vs_conv2d"]["flops_pct_rounded"] if code == 0 else None
    ok = rounded == {"tadaconv-v1": "0.2%", "conv21d": "33%"}
    return ok, f"tadaconv +{rounded['tadaconv-v1']}, (2+1)D +{rounded['conv21d']}"


def test_criterion_1_operator_costs(capsys):
    _gate(1, "operator-level cost (exact)", operator_costs, 1, capsys)


def test_criterion_2_network_costs(capsys):
    _gate(2, "network-level cost (+-3%)", network_costs, 1, capsys)


def test_criterion_3_identity_at_init(capsys):
    _gate(3, "identity at initialisation", identity_at_init, 60, capsys)


def test_criterion_4_decomposition(capsys):
    _gate(4, "(2+1)D decomposition identity", decomposition, 60, capsys)


def test_criterion_5_materialization(capsys):
    _gate(5, "per-frame kernel materialisation", materialization, 120, capsys)


def test_criterion_6_broadcast_algebra(capsys):
    _gate(6, "C_in / C_out broadcast algebra", broadcast_algebra, 30, capsys)


def test_criterion_7_gradients(capsys):
    _gate(7, "finite-difference gradients", gradients, 300, capsys)


def test_criterion_8_temporal_adaptivity(capsys):
    _gate(8, "temporal adaptivity", temporal_adaptivity, 30, capsys)


def test_criterion_9_cli_overheads(capsys):
    _gate(9, "CLI overhead percentages", cli_overheads, 1, capsys)


if __name__ == "__main__":
    failed = 0
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]:
        try:
            fn(None)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
