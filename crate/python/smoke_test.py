#!/usr/bin/env python3
"""Smoke test for the thermolearn_py extension module.

Builds the cdylib with cargo (unless THERMOLEARN_SKIP_BUILD is set), stages
it on a temporary sys.path as `thermolearn_py.so`, and exercises the main
types and operations end to end.
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_and_import():
    if not os.environ.get("THERMOLEARN_SKIP_BUILD"):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "thermolearn-py"],
            cwd=ROOT,
            check=True,
        )
    lib = os.path.join(ROOT, "target", "release", "libthermolearn_py.so")
    if not os.path.exists(lib):
        sys.exit(f"extension library not found at {lib}")
    stage = tempfile.mkdtemp(prefix="thermolearn_py_")
    shutil.copy(lib, os.path.join(stage, "thermolearn_py.so"))
    sys.path.insert(0, stage)
    import thermolearn_py

    return thermolearn_py


def approx(a, b, tol):
    assert abs(a - b) < tol, f"{a} vs {b} (tol {tol})"


def main():
    tl = build_and_import()

    # propagation against scalar tanh arithmetic
    net = tl.Septuple.zeroed([1, 1], activation="tanh")
    net.set_weight(1, 0, 1.0)
    state = net.fixed_state([0.5])
    approx(state[1], math.tanh(0.5), 1e-15)
    approx(net.boundary_loss([0.5], [0.9]), 0.5 * (math.tanh(0.5) - 0.9) ** 2, 1e-12)
    assert net.validate() == []

    # checkpoint round-trip
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "net.txt")
        net.save(path)
        back = tl.Septuple.load(path)
        assert back.fixed_state([0.5]) == state

    # training reduces the boundary loss on separable data
    data = tl.Dataset.synth(records=120, input_dim=6, n_classes=3, sigma=0.2, seed=7)
    assert len(data) == 120 and data.input_dim == 6 and data.output_dim == 3
    model = tl.Septuple([6, 8, 3], activation="tanh", seed=1)
    log = model.train(data, epochs=150, learning_rate=0.05, batch_size=16, seed=1)
    assert log["u_boundary"][-1] < 0.25 * log["u_boundary"][0]

    # spectral diagnostics: unit determinant and a positive spectrum
    report = model.analyze(data)
    assert abs(report["sum_log"]) < 1e-9
    assert all(l > 0 for l in report["lambdas"])
    assert report["mu2"] >= 0

    # two-peak toy curve value at log lambda ~ 0 for beta 0.25
    logl, values, extrema = tl.toy_curve(0.25, points=801, lo=-4.0, hi=4.0)
    at_zero = min(zip(logl, values), key=lambda p: abs(p[0]))[1]
    approx(at_zero, 68.32, 0.01)
    assert any(kind == "maximum" and abs(x) < 1e-3 for x, _, kind in extrema)

    # Gaussian-model scalars
    approx(tl.free_energy(1.0, [1.0, 1.0, 1.0]), 1.5 * (math.log(2) - math.log(2 * math.pi)), 1e-12)
    approx(tl.avg_loss(1.0, [1.0, 1.0]), 0.5, 1e-12)
    beta, gap = tl.beta_from_gap([2.0, 0.0, -0.2, -3.9, -4.0])
    approx(gap, -2.05, 1e-9)

    # Monte Carlo vs the analytic Gaussian value on a quadratic instance
    pair = tl.Septuple.zeroed([1, 1], activation="identity")
    pair.set_weight(1, 0, 1.0)
    est = pair.metropolis(beta=1.0, window="gaussian", n_samples=60_000, burn_in=6_000, seed=3)
    assert abs(est["mean_h"] - est["u_gaussian_exact"]) < 4 * est["stderr_h"]
    approx(est["u_gaussian_exact"], 0.5, 1e-12)

    print("smoke test passed")


if __name__ == "__main__":
    main()
