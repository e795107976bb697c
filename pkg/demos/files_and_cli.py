"""
Configs, tensor files and the command line
==========================================

Builds an operator from a JSON config, saves its parameters, and runs it
through the ``tadaconv run`` command on a tensor file.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from tadaconv.serialize import build_operator, load_params, save_params
from tadaconv.tensor_io import read_tensor, write_tensor

work = Path(tempfile.mkdtemp())

cfg = {"variant": "v1", "dim": "cin", "r": 2, "K1": 3, "K2": 3, "use_global": True,
       "conv": {"cin": 8, "cout": 8, "k": 3}, "seed": 0, "init": "random"}
p = build_operator(cfg)
save_params(work / "params", p)
manifest = json.loads((work / "params" / "manifest.json").read_text())
print("saved", len(manifest["tensors"]), "tensors; generator:", manifest["hyperparameters"])
assert np.array_equal(load_params(work / "params").base.weight, p.base.weight)

# %%
# Feed a clip through the saved operator with the CLI and keep the
# calibration weights it produced.
x = np.random.default_rng(1).standard_normal((1, 8, 4, 6, 6)).astype(np.float32)
write_tensor(work / "x.tada", x)
(work / "run.json").write_text(json.dumps({"params": str(work / "params")}))
cmd = [sys.executable, "-m", "tadaconv", "run", "--config", str(work / "run.json"),
       "--input", str(work / "x.tada"), "--output", str(work / "y.tada"), "--dump-alpha", str(work / "a.tada")]
print(subprocess.run(cmd, capture_output=True, text=True, check=True).stdout.strip())
print("alpha per frame, channel 0:", read_tensor(work / "a.tada")[0, :, 0].round(3))

# %%
# Cost and property checks are one command each.
for argv in (["cost", "--op", "--co", "64", "--ci", "64", "--hw", "56"],
             ["check", "--suite", "identity", "--seeds", "5"]):
    out = subprocess.run([sys.executable, "-m", "tadaconv", *argv], capture_output=True, text=True)
    print(f"$ tadaconv {' '.join(argv)}  (exit {out.returncode})")
    print("\n".join(out.stdout.splitlines()[-3:]))
