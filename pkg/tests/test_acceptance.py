"""One test per acceptance criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""

import math
import os
import time

import numpy as np
import pytest

from vrscp import streams
from vrscp.baselines import BaselineConfig, reinforce_run
from vrscp.checks import (
    check_finalsolver,
    check_grad_unbiased,
    check_hvp_unbiased,
    check_oracle,
    check_saddle,
    check_subsolver,
)
from vrscp.cli import main
from vrscp.driver import HyperParams, vrscp_run
from vrscp.env import exact_dp, gridworld, sample_iid
from vrscp.estimators import EstimatorContext, HvpOperator, grad_estimate, phi_grad
from vrscp.evaluation import pr_metric
from vrscp.policy import make_policy
from vrscp.sources import TrajectorySource

from settings import GRIDWORLD_BUDGET, GRIDWORLD_GRID_STEP, GRIDWORLD_REINFORCE, GRIDWORLD_VRSCP


def report(number, name, passed, detail, seconds):
    print(f"\n{'PASS' if passed else 'FAIL'}  [{number:>2}] {name:<32} {detail} ({seconds:.1f}s)")


def run_check(number, result, limit=None):
    ok = result.passed and (limit is None or result.seconds < limit)
    detail = result.detail + ("" if limit is None else f"; limit {limit:.0f}s")
    report(number, result.name, ok, detail, result.seconds)
    assert result.passed, result.detail
    if limit is not None:
        assert result.seconds < limit


def gridworld_source():
    mdp = gridworld()
    return TrajectorySource(mdp, make_policy("softmax-tabular", mdp))


def test_gradient_unbiasedness():
    run_check(1, check_grad_unbiased(n=200_000, draws=3), limit=60)


def test_hvp_unbiasedness():
    run_check(2, check_hvp_unbiased(n=200_000, draws=3, vecs=5), limit=90)


def test_per_trajectory_identity_and_linearity():
    t0 = time.perf_counter()
    src = gridworld_source()
    ctx = EstimatorContext(src.policy, src.mdp.gamma)
    rng = streams.stream(0, streams.DIAGNOSTIC, 10)
    theta = rng.uniform(-1, 1, src.dim)
    batch = sample_iid(src.mdp, src.policy, theta, 1000, rng)
    identical = all(np.array_equal(phi_grad(ctx, batch[i], theta), grad_estimate(ctx, batch[i], theta))
                    for i in range(len(batch)))
    op = HvpOperator(ctx, batch, theta)
    u, w = rng.standard_normal((2, src.dim))
    hu, hw = op.per_trajectory(u), op.per_trajectory(w)
    # scaling by powers of two is exact in binary floating point
    scaled = all(np.array_equal(op.per_trajectory(2.0**k * u), 2.0**k * hu) for k in (-2, 1, 3))
    a, b = 0.3, -1.7
    combo = op.per_trajectory(a * u + b * w)
    scale = np.abs(a * hu).max() + np.abs(b * hw).max()
    general = float(np.abs(combo - (a * hu + b * hw)).max() / scale)
    ok = identical and scaled and general <= 1e-12
    report(3, "per-trajectory identity", ok,
           f"phi==grad on 1000: {identical}; 2^k scaling bitwise: {scaled}; "
           f"general combination rel. error {general:.1e}", time.perf_counter() - t0)
    assert ok


def test_cubic_oracle():
    run_check(4, check_oracle(instances=100, probes=100_000))


def test_subsolver_guarantee():
    run_check(5, check_subsolver(count=50, need=45), limit=30)


def test_finalsolver_contract():
    run_check(6, check_finalsolver(count=20))


def test_saddle_escape():
    run_check(7, check_saddle(seeds=10, need=9), limit=120)


def test_variance_reduction_witness():
    t0 = time.perf_counter()
    src = gridworld_source()
    exact_grad = {}

    def grad_at(theta):
        key = theta.tobytes()
        if key not in exact_grad:
            exact_grad[key] = exact_dp(src.mdp, src.policy, theta)[1]
        return exact_grad[key]

    vr_err, fresh_err = [], []
    for seed in range(10):
        hp = HyperParams(seed=seed, T=30, **GRIDWORLD_VRSCP)

        def monitor(state, out):
            if out.checkpoint:
                return
            g = grad_at(state.theta_prev)
            vr_err.append(float(np.sum((out.v - g) ** 2)))
            # a fresh estimate costing what the correction cost
            fresh = src.grad_batch(state.theta_prev, out.S_t, seed, out.t, streams.DIAGNOSTIC)
            fresh_err.append(float(np.sum((fresh - g) ** 2)))

        vrscp_run(hp, src, monitor=monitor)
    vr, fresh = float(np.mean(vr_err)), float(np.mean(fresh_err))
    ok = len(vr_err) > 0 and vr < fresh
    report(8, "variance-reduction witness", ok,
           f"mean sq. error {vr:.3e} (recursion) vs {fresh:.3e} (fresh, same cost) "
           f"over {len(vr_err)} iterations", time.perf_counter() - t0)
    assert ok


def test_pr_metric_fixtures():
    from vrscp.records import RunRecord

    t0 = time.perf_counter()

    def record(seed, returns, probes=(10, 20, 30)):
        rows = [{"t": i, "probes": p, "eval_return": r} for i, (p, r) in enumerate(zip(probes, returns))]
        return RunRecord("fixture", seed, rows, {"termination": "max_iterations"})

    z = 1.959963984540054
    recs = [record(0, [1.0, 2.0, 3.0]), record(1, [2.0, 3.0, 4.0]), record(2, [3.0, 4.0, 8.0])]
    expected = ((2 - z / math.sqrt(3)) + (3 - z / math.sqrt(3)) + (5 - z * math.sqrt(7) / math.sqrt(3))) / 3
    hand = abs(pr_metric(recs, 3, 30, 10).pr - expected)
    constant = pr_metric([record(s, [0.3] * 3) for s in range(4)]).pr == 0.3
    grid = tuple(range(10, 110, 10))
    peak = [0.9, 0.9, 0.8, 0.3, 0.1, 0.1, 0.1, 0.2, 0.3, 0.5]
    rng = np.random.default_rng(0)
    p = pr_metric([record(s, np.add(peak, 0.02 * rng.normal(size=10)), grid) for s in range(5)]).pr
    q = pr_metric([record(s, 0.5 + 0.02 * rng.normal(size=10), grid) for s in range(5)]).pr
    ok = hand <= 1e-12 and constant and p < q
    report(9, "PR metric fixtures", ok,
           f"hand fixture error {hand:.1e}; constant exact: {constant}; "
           f"early peak {p:.3f} < steady {q:.3f}", time.perf_counter() - t0)
    assert ok


def test_gridworld_vrscp_vs_reinforce():
    t0 = time.perf_counter()
    src = gridworld_source()
    vr = [vrscp_run(HyperParams(seed=s, T=10**6, probe_budget=GRIDWORLD_BUDGET, **GRIDWORLD_VRSCP), src)
          for s in range(10)]
    rf = [reinforce_run(BaselineConfig(seed=s, T=10**6, probe_budget=GRIDWORLD_BUDGET,
                                       **GRIDWORLD_REINFORCE), src)
          for s in range(10)]
    T = GRIDWORLD_BUDGET - GRIDWORLD_BUDGET % GRIDWORLD_GRID_STEP
    pr_vr = pr_metric(vr, 10, T, GRIDWORLD_GRID_STEP).pr
    pr_rf = pr_metric(rf, 10, T, GRIDWORLD_GRID_STEP).pr
    seconds = time.perf_counter() - t0
    ok = pr_vr >= pr_rf and seconds < 15 * 60
    report(10, "gridworld PR(10) vs REINFORCE", ok,
           f"VR-SCP {pr_vr:.4f} vs REINFORCE {pr_rf:.4f} at {GRIDWORLD_BUDGET} probes", seconds)
    assert seconds < 15 * 60
    assert pr_vr >= pr_rf


CONFIG = """
seeds = [0, 1, 2, 3]
probe_budget = 3000

[env]
kind = "gridworld"

[policy]
family = "softmax-tabular"

[algorithm]
name = "vrscp"
eps = 0.001
rho = 0.1
L = 1.0
T = 100
Q = 2
b_check = 20
b_h = 5
c_S = 0.0001
"""


def test_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONFIG)
    dirs = []
    for name, workers in (("a", 1), ("b", 1), ("c", 2), ("d", 4)):
        out = tmp_path / name
        assert main(["run", str(cfg), "--out", str(out), "--workers", str(workers), "--trace"]) == 0
        dirs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out)) if f != "manifest.json"})
    ok = all(d == dirs[0] for d in dirs[1:]) and len(dirs[0]) == 12
    report(11, "CLI determinism", ok,
           f"{len(dirs[0])} files byte-identical across reruns and 1/2/4 workers", time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
