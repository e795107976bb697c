import io
import json
import subprocess
import sys

import numpy as np
import pytest

from tadaconv.cli import main
from tadaconv.tensor_io import read_tensor, write_tensor


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


# --- cost ------------------------------------------------------------------

def test_cost_op_table():
    code, text = run("cost", "--op", "--co", "64", "--ci", "64", "--k", "3", "--t", "8", "--hw", "56")
    assert code == 0
    assert "926,795,264" in text and "43,008" in text
    assert "(0.2%)" in text and "(17%)" in text


def test_cost_op_json_for_conv21d():
    code, text = run("cost", "--op", "--variant", "conv21d", "--co", "64", "--ci", "64", "--hw", "56", "--json")
    d = json.loads(text)
    assert code == 0
    assert d["report"]["flops"] == 1_233_125_376 and d["report"]["params"] == 49_152
    assert d["vs_conv2d"]["flops_pct_rounded"] == "33%"


def test_cost_net_reports_assumptions():
    code, text = run("cost", "--net", "r50-tadaconv", "--json")
    d = json.loads(text)
    assert code == 0
    assert abs(d["report"]["gflops"] / 33.02 - 1) <= 0.03
    assert d["report"]["assumptions"]
    code, text = run("cost", "--net", "r50-r21d", "--t", "8", "--hw", "224")
    assert code == 0 and "assumption:" in text and "vs conv2d" in text
    assert "= 37.9" in text


def test_cost_usage_errors(capsys):
    assert run("cost", "--net", "resnet-9000")[0] == 2
    assert "unknown catalog entry" in capsys.readouterr().err
    assert run("cost", "--op", "--co", "64")[0] == 2
    assert run("cost", "--op", "--co", "64", "--ci", "62", "--hw", "56")[0] == 2
    assert run("cost")[0] == 2


def test_cost_json_is_reproducible():
    argv = ("cost", "--net", "r50-tada2d", "--json")
    assert run(*argv)[1] == run(*argv)[1]


# --- check -----------------------------------------------------------------

def test_check_identity_passes():
    code, text = run("check", "--suite", "identity", "--seeds", "3")
    assert code == 0
    assert "12/12 checks passed" in text
    assert all(line.startswith("PASS") for line in text.splitlines()[:-1])


def test_check_decompose_hundred_seeds():
    code, text = run("check", "--suite", "decompose", "--seeds", "100", "--json")
    d = json.loads(text)
    assert code == 0 and d["total"] == 400 and d["failed"] == 0


def test_check_grad_json_records():
    code, text = run("check", "--suite", "grad", "--seeds", "1", "--json", "--all-records")
    d = json.loads(text)
    assert code == 0
    names = {r["check"] for r in d["records"]}
    assert {"grad.tadaconv_v1", "grad.tadaconv_v2", "grad.tada2d_block", "grad.softmax"} <= names
    for r in d["records"]:
        assert set(r) == {"check", "seed", "dtype", "max_err", "tolerance", "pass"}


def test_check_json_is_byte_identical():
    argv = ("check", "--suite", "oracle", "--seeds", "2", "--seed", "5", "--json", "--all-records")
    assert run(*argv)[1] == run(*argv)[1]


def test_check_exits_one_on_failure(monkeypatch):
    from tadaconv import checks

    monkeypatch.setitem(checks.SUITES, "decompose",
                        lambda seeds: [checks.CheckRecord("decompose.fake", s, "f64", 1.0, 1e-12) for s in seeds])
    code, text = run("check", "--suite", "decompose", "--seeds", "2")
    assert code == 1 and "FAIL" in text and '"pass": false' in text


def test_check_bad_seed_count():
    assert run("check", "--seeds", "0")[0] == 2


# --- bench -----------------------------------------------------------------

@pytest.mark.parametrize("op,pct", [("tadaconv-v1", "0.2%"), ("tadaconv-v2", "0.2%"), ("conv21d", "33%"),
                                    ("conv2d", "0%")])
def test_bench_overheads(op, pct):
    code, text = run("bench", "--op", op, "--no-timing", "--json")
    d = json.loads(text)
    assert code == 0
    assert d["overhead_vs_conv2d"]["flops_pct_rounded"] == pct
    assert "timing" not in d


def test_bench_runs_small_shape_with_threads():
    code, text = run("bench", "--op", "tada2d-block", "--shape", "1,8,4,6,6", "--r", "2", "--iters", "2",
                     "--warmup", "0", "--threads", "1", "--json")
    d = json.loads(text)
    assert code == 0 and d["timing"]["iters"] == 2 and d["analytic_macs"] > 0
    _, again = run("bench", "--op", "tada2d-block", "--shape", "1,8,4,6,6", "--r", "2", "--no-timing", "--json")
    assert json.loads(again)["analytic_macs"] == d["analytic_macs"]


@pytest.mark.parametrize("shape", ["1,64,8,56", "1,0,8,56,56", "a,b,c,d,e"])
def test_bench_rejects_bad_shapes(shape):
    assert run("bench", "--op", "conv2d", "--shape", shape, "--no-timing")[0] == 2


def test_bench_rejects_indivisible_reduction():
    assert run("bench", "--op", "tadaconv-v1", "--shape", "1,6,2,4,4", "--r", "4", "--no-timing")[0] == 2


# --- run -------------------------------------------------------------------

def _write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


OP = {"r": 2, "K1": 3, "K2": 3, "conv": {"cin": 4, "cout": 4, "k": 3}, "seed": 2}


def test_run_identity_operator_is_byte_identical_to_conv2d(tmp_path):
    x = np.random.default_rng(0).standard_normal((1, 4, 3, 6, 6)).astype(np.float32)
    write_tensor(tmp_path / "x.tada", x)
    outs = {}
    for variant in ("v1", "v2", "conv2d"):
        cfg = _write_json(tmp_path / f"{variant}.json", {**OP, "variant": variant, "heads": 2})
        args = ["run", "--config", cfg, "--input", str(tmp_path / "x.tada"), "--output",
                str(tmp_path / f"{variant}.tada")]
        if variant != "conv2d":
            args += ["--dump-alpha", str(tmp_path / f"{variant}.alpha.tada")]
        assert run(*args)[0] == 0
        outs[variant] = (tmp_path / f"{variant}.tada").read_bytes()
    assert outs["v1"] == outs["conv2d"] and outs["v2"] == outs["conv2d"]
    alpha = read_tensor(tmp_path / "v1.alpha.tada")
    assert alpha.shape == (1, 3, 4) and alpha.dtype == np.float32 and np.all(alpha == 1)


@pytest.mark.parametrize("k", [1, 3])
def test_run_dirac_kernel_round_trips(tmp_path, k):
    x = np.random.default_rng(1).standard_normal((2, 4, 2, 5, 5))
    write_tensor(tmp_path / "x.tada", x)
    cfg = _write_json(tmp_path / "d.json", {"variant": "v1", "r": 2, "seed": 0,
                                            "conv": {"cin": 4, "cout": 4, "k": k, "weight_init": "dirac"}})
    for src, dst in (("x", "y"), ("y", "z")):
        assert run("run", "--config", cfg, "--input", str(tmp_path / f"{src}.tada"),
                   "--output", str(tmp_path / f"{dst}.tada"))[0] == 0
    assert (tmp_path / "z.tada").read_bytes() == (tmp_path / "x.tada").read_bytes()


def test_run_external_with_alpha_file(tmp_path):
    x = np.random.default_rng(2).standard_normal((1, 4, 2, 5, 5))
    write_tensor(tmp_path / "x.tada", x)
    write_tensor(tmp_path / "a.tada", np.full((1, 2, 4), 2.0))
    cfg = _write_json(tmp_path / "e.json", {"variant": "external", "dim": "cout",
                                            "conv": {"cin": 4, "cout": 4, "k": 3}})
    ref = _write_json(tmp_path / "c.json", {"variant": "conv2d", "conv": {"cin": 4, "cout": 4, "k": 3}})
    run("run", "--config", cfg, "--input", str(tmp_path / "x.tada"), "--alpha", str(tmp_path / "a.tada"),
        "--output", str(tmp_path / "y.tada"))
    run("run", "--config", ref, "--input", str(tmp_path / "x.tada"), "--output", str(tmp_path / "z.tada"))
    np.testing.assert_allclose(read_tensor(tmp_path / "y.tada"), 2 * read_tensor(tmp_path / "z.tada"),
                               rtol=1e-14)


def test_run_block_config(tmp_path):
    x = np.random.default_rng(3).standard_normal((1, 8, 3, 5, 5))
    write_tensor(tmp_path / "x.tada", x)
    cfg = _write_json(tmp_path / "b.json", {"block": "tadaformer", "c": 8, "hidden": 8, "seed": 1})
    assert run("run", "--config", cfg, "--input", str(tmp_path / "x.tada"), "--output", str(tmp_path / "y.tada"),
               "--dump-alpha", str(tmp_path / "a.tada"))[0] == 0
    np.testing.assert_array_equal(read_tensor(tmp_path / "y.tada"), x)
    assert read_tensor(tmp_path / "a.tada").shape == (1, 3, 8)


def test_run_saved_params_directory(tmp_path):
    from tadaconv.serialize import build_operator, save_params

    p = build_operator({**OP, "variant": "v1", "init": "random"})
    save_params(tmp_path / "params", p)
    x = np.random.default_rng(4).standard_normal((1, 4, 3, 5, 5))
    write_tensor(tmp_path / "x.tada", x)
    cfg = _write_json(tmp_path / "p.json", {"params": str(tmp_path / "params")})
    assert run("run", "--config", cfg, "--input", str(tmp_path / "x.tada"), "--output", str(tmp_path / "y.tada"))[0] == 0
    from tadaconv.layer import tadaconv_forward
    np.testing.assert_array_equal(read_tensor(tmp_path / "y.tada"), tadaconv_forward(x, p))


def test_run_errors_exit_two(tmp_path, capsys):
    write_tensor(tmp_path / "x.tada", np.zeros((1, 3, 2, 4, 4)))
    write_tensor(tmp_path / "flat.tada", np.zeros((3, 4)))
    cfg = _write_json(tmp_path / "c.json", {**OP, "variant": "v1"})
    for inp in ("x.tada", "flat.tada", "missing.tada"):
        assert run("run", "--config", cfg, "--input", str(tmp_path / inp), "--output", str(tmp_path / "y"))[0] == 2
    err = capsys.readouterr().err
    assert "channels" in err and "rank" in err
    (tmp_path / "bad.tada").write_bytes(b"TADX" + bytes(20))
    assert run("run", "--config", cfg, "--input", str(tmp_path / "bad.tada"), "--output", str(tmp_path / "y"))[0] == 2
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{not json")
    assert run("run", "--config", str(bad_cfg), "--input", str(tmp_path / "x.tada"),
               "--output", str(tmp_path / "y"))[0] == 2


# --- process level ---------------------------------------------------------

def test_module_entry_point_and_thread_env(tmp_path):
    env = {"TADA_THREADS": "1", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "tadaconv", "check", "--suite", "decompose", "--seeds", "2"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert "8/8 checks passed" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "tadaconv", "cost", "--op", "--co", "64", "--ci", "64",
                           "--hw", "56"], capture_output=True, text=True, env={**env, "TADA_THREADS": "x"})
    assert proc.returncode == 2 and "TADA_THREADS" in proc.stderr


def test_thread_count_does_not_change_results():
    a = run("check", "--suite", "oracle", "--seeds", "2", "--threads", "1", "--json", "--all-records")[1]
    b = run("check", "--suite", "oracle", "--seeds", "2", "--threads", "4", "--json", "--all-records")[1]
    assert a == b
