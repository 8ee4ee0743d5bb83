"""Cross-backend checks: MVPP_NUMBA=0 must reproduce numba results exactly.

Both backends execute the same statements in the same order on the same
pre-drawn randomness, so traces, paths and occupation measures are
bit-identical; only speed differs.
"""

import json
import os
import subprocess
import sys

import pytest

import mvpp

PROBE = r"""
import json
import numpy as np
import mvpp
from mvpp import engine, models
from mvpp.diffusion import sample_killed_path, self_interacting_occupation
from mvpp.engine import make_rng

out = {"backend": mvpp.BACKEND}

spec = models.rrt_outdegree_urn()
st = engine.init(spec.m0, spec.replacement, spec.weight, seed=11)
engine.run(st, 2000)
out["urn"] = sorted(st.m.as_dict().items())

kd = models.build_model("killed_diffusion_ou", {"c": 2.0, "kappa": 1.0, "dt": 1e-3})
path = sample_killed_path(kd.extra["diffusion"], 0.25, make_rng(12))
out["path"] = path[:50].tolist() + [float(path.sum()), len(path)]

si = models.build_model("self_interacting_ou", {"c": 2.0, "kappa": 4.0, "dt": 1e-3})
res = self_interacting_occupation(si.extra["diffusion"], 20.0, make_rng(13))
out["si"] = [float(res.positions.sum()), float(res.positions[-1]), int(res.n_jumps)]

print(json.dumps(out))
"""


def run_probe(numba_flag):
    env = dict(os.environ, MVPP_NUMBA=numba_flag)
    proc = subprocess.run(
        [sys.executable, "-c", PROBE], capture_output=True, text=True, env=env, timeout=300
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_python_backend_matches_numba_bit_for_bit():
    fast = run_probe("1")
    slow = run_probe("0")
    assert fast["backend"] == "numba"
    assert slow["backend"] == "python"
    assert fast["urn"] == slow["urn"]
    assert fast["path"] == slow["path"]
    assert fast["si"] == slow["si"]


@pytest.mark.skipif(
    os.environ.get("MVPP_NUMBA", "1").lower() in ("0", "off", "false", "no"),
    reason="backend disabled explicitly",
)
def test_default_backend_is_numba():
    assert mvpp.BACKEND == "numba"
