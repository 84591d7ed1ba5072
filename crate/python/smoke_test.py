"""Smoke test for the gklab_py extension.

Build and install first:

    pip install maturin
    maturin build -m crates/gklab-py/Cargo.toml --release -o dist
    pip install dist/gklab_py-*.whl
    python python/smoke_test.py
"""

import math
import os
import sys
import tempfile

import gklab_py as gk


def close(x, y, tol):
    return abs(x - y) <= tol * max(1.0, abs(y))


def main():
    params = gk.HopfParams(math.exp(-1.0), math.exp(-0.7))
    assert close(params.ratio, 0.7, 1e-14), params.ratio
    try:
        gk.HopfParams(0.5, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("beta = 1 accepted")

    p, a, b = 0.3, -1.0, -0.7
    j = gk.j_matrix(p, a, b)
    r = b / a
    assert close(j[0][1], -p, 1e-14) and close(j[0][3], (1 - p) / r, 1e-14), j

    state = gk.GkState.tanh(params, 0.9, 2.0, 20.0, 2048)
    res = state.verify()
    assert max(res.values()) < 1e-7, res
    dets = state.det_plus()
    ang = state.angle()
    assert all(close(d, 4 * (1 + q) ** 2, 1e-12) for d, q in zip(dets, ang))
    cols = state.columns()
    assert len(cols["t"]) == len(state) == 2048

    sol = gk.Soliton.solve(params, 6.0, 2048)
    assert sol.kappa_i == [-1.0, -1.0, 0.0] and sol.kappa_j == [1.0, -1.0, 0.0]
    rep = sol.verify()
    assert rep["structural"] < 1e-10 and rep["bismut"] < 1e-6, rep

    std = gk.Soliton.solve(gk.HopfParams.from_logs(-1.0, -1.0), 12.0, 1024)
    trace = std.flow(t_end=0.01, dt=1e-3)
    assert len(trace["time"]) == 11 and max(trace["sigma_drift"]) < 1e-8
    phi = std.random_potentials(3, 1)[0]
    rig = std.rigidity(phi, t_end=0.002, dt=5e-4, sample_every=1)
    jv = rig["J"]
    assert all(jv[k - 1] - 2 * jv[k] + jv[k + 1] > 0 for k in range(1, len(jv) - 1))

    with tempfile.TemporaryDirectory() as d:
        assert gk.run_cli(["verify", "--grid-n", "512", "--out", os.path.join(d, "v")]) == 0
        assert gk.run_cli(["solve", "--beta", "1.5"]) == 2
        assert os.path.exists(os.path.join(d, "v", "manifest.json"))

    print("smoke test ok")


if __name__ == "__main__":
    sys.exit(main())
