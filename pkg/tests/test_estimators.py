import numpy as np
import pytest

from vrscp import streams
from vrscp.env import (
    Trajectory,
    enumerate_exact,
    enumerate_trajectories,
    exact_dp,
    gridworld,
    random_mdp,
    sample_iid,
)
from vrscp.errors import ConfigError, NumericError
from vrscp.estimators import (
    EstimatorContext,
    HvpOperator,
    batch_mean_grad,
    batch_mean_hvp,
    dump_csv,
    grad_estimate,
    hvp_estimate,
    per_trajectory_grads,
    phi_grad,
)
from vrscp.policy import GaussianLinear, SoftmaxTabular, make_policy


def two_state():
    mdp = random_mdp(n_states=2, n_actions=2, horizon=4, gamma=0.9, seed=7)
    return mdp, SoftmaxTabular(2, 2)


def gridworld_batch(n=64, seed=0):
    mdp = gridworld()
    pol = make_policy("softmax-tabular", mdp)
    theta = np.random.default_rng(seed).uniform(-1, 1, pol.dim)
    batch = sample_iid(mdp, pol, theta, n, streams.stream(seed, streams.DIAGNOSTIC))
    return EstimatorContext(pol, mdp.gamma), batch, theta


def test_gamma_checked():
    with pytest.raises(ConfigError):
        EstimatorContext(SoftmaxTabular(1, 2), 1.0)
    with pytest.raises(ConfigError):
        EstimatorContext(SoftmaxTabular(1, 2), 0.9, baseline="linear")


# gradient -------------------------------------------------------------------

def test_zero_reward_gives_zero():
    ctx, batch, theta = gridworld_batch(1)
    t = Trajectory(batch.states[0], batch.actions[0], np.zeros(batch.horizon))
    assert np.array_equal(grad_estimate(ctx, t, theta), np.zeros(len(theta)))
    assert np.array_equal(phi_grad(ctx, t, theta), np.zeros(len(theta)))


def test_bandit_gradient_example():
    ctx = EstimatorContext(SoftmaxTabular(1, 2), 0.9)
    t = Trajectory(np.array([0]), np.array([0]), np.array([1.0]))
    assert np.allclose(grad_estimate(ctx, t, np.zeros(2)), [0.5, -0.5], atol=1e-15)


def test_gaussian_linear_phi_grad_example():
    ctx = EstimatorContext(GaussianLinear(2), 0.9)
    t = Trajectory(np.array([[1.0, 0.0]]), np.array([0.5]), np.array([1.0]))
    assert np.allclose(phi_grad(ctx, t, np.zeros(2)), [0.5, 0.0], atol=1e-15)


def test_phi_grad_identical_to_grad_estimate():
    ctx, batch, theta = gridworld_batch(20)
    for i in range(len(batch)):
        assert np.array_equal(phi_grad(ctx, batch[i], theta), grad_estimate(ctx, batch[i], theta))


def test_weighted_gradient_equals_enumeration():
    mdp, pol = two_state()
    ctx = EstimatorContext(pol, mdp.gamma)
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    _, g, _ = enumerate_exact(mdp, pol, theta)
    batch, p = enumerate_trajectories(mdp, pol, theta)
    est = p @ per_trajectory_grads(ctx, batch, theta)
    assert np.allclose(est, g, atol=1e-10)


def test_non_finite_contribution_names_step():
    ctx = EstimatorContext(SoftmaxTabular(1, 2), 0.9)
    t = Trajectory(np.array([0, 0]), np.array([0, 1]), np.array([1.0, np.inf]))
    with pytest.raises(NumericError, match="step"):
        grad_estimate(ctx, t, np.zeros(2))


def test_baseline_preserves_expectation():
    mdp, pol = two_state()
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    _, g, _ = enumerate_exact(mdp, pol, theta)
    ctx = EstimatorContext(pol, mdp.gamma, baseline="per-step-batch-mean")
    n = 100_000
    rows = per_trajectory_grads(ctx, sample_iid(mdp, pol, theta, n, streams.stream(2, 6)), theta)
    se = rows.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(rows.mean(axis=0) - g) <= 4 * se)


# HVP ------------------------------------------------------------------------

def test_hvp_zero_vector():
    ctx, batch, theta = gridworld_batch(1)
    assert np.array_equal(hvp_estimate(ctx, batch[0], theta, np.zeros(len(theta))),
                          np.zeros(len(theta)))


def test_gaussian_linear_hvp_example():
    ctx = EstimatorContext(GaussianLinear(2), 0.9)
    t = Trajectory(np.array([[1.0, 0.0]]), np.array([0.5]), np.array([1.0]))
    hv = hvp_estimate(ctx, t, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(hv, [-0.75, 0.0], atol=1e-15)


def test_weighted_hvp_equals_enumeration():
    mdp, pol = two_state()
    ctx = EstimatorContext(pol, mdp.gamma)
    theta = np.array([0.3, -0.2, 0.5, 0.1])
    _, _, H = enumerate_exact(mdp, pol, theta)
    batch, p = enumerate_trajectories(mdp, pol, theta)
    op = HvpOperator(ctx, batch, theta)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.normal(size=pol.dim)
        assert np.allclose(p @ op.per_trajectory(v), H @ v, atol=1e-10)


def test_expected_hvp_symmetric():
    mdp, pol = two_state()
    ctx = EstimatorContext(pol, mdp.gamma)
    theta = np.array([-0.4, 0.2, 0.0, 0.7])
    batch, p = enumerate_trajectories(mdp, pol, theta)
    op = HvpOperator(ctx, batch, theta)
    u, w = np.random.default_rng(1).normal(size=(2, pol.dim))
    assert abs((p @ op.per_trajectory(u)) @ w - (p @ op.per_trajectory(w)) @ u) <= 1e-10


def test_hvp_dimension_mismatch():
    ctx, batch, theta = gridworld_batch(1)
    with pytest.raises(ConfigError):
        hvp_estimate(ctx, batch[0], theta, np.zeros(3))


def test_hvp_linearity_power_of_two_bitwise():
    ctx, batch, theta = gridworld_batch(32)
    op = HvpOperator(ctx, batch, theta)
    u = np.random.default_rng(3).normal(size=len(theta))
    base = op.per_trajectory(u)
    for k in (-3, -1, 1, 4):
        assert np.array_equal(op.per_trajectory(2.0**k * u), 2.0**k * base)


# batch means ----------------------------------------------------------------

def test_batch_of_one_and_duplicate():
    ctx, batch, theta = gridworld_batch(2)
    t = batch[0]
    single = grad_estimate(ctx, t, theta)
    assert np.array_equal(batch_mean_grad(ctx, [t], theta), single)
    assert np.array_equal(batch_mean_grad(ctx, [t, t], theta), single)
    v = np.ones(len(theta))
    hv = hvp_estimate(ctx, t, theta, v)
    assert np.array_equal(batch_mean_hvp(ctx, [t], theta, v), hv)
    assert np.array_equal(batch_mean_hvp(ctx, [t, t], theta, v), hv)


def test_batch_mean_matches_serial_loop():
    ctx, batch, theta = gridworld_batch(64)
    acc = np.zeros(len(theta))
    for i in range(len(batch)):
        acc = acc + grad_estimate(ctx, batch[i], theta)
    assert np.array_equal(batch_mean_grad(ctx, batch, theta), acc / 64)
    v = np.random.default_rng(0).normal(size=len(theta))
    acc = np.zeros(len(theta))
    for i in range(len(batch)):
        acc = acc + hvp_estimate(ctx, batch[i], theta, v)
    assert np.array_equal(batch_mean_hvp(ctx, batch, theta, v), acc / 64)


def test_empty_batch_rejected():
    ctx, batch, theta = gridworld_batch(1)
    with pytest.raises(ConfigError):
        batch_mean_grad(ctx, [], theta)


def test_dump_csv(tmp_path):
    ctx, batch, theta = gridworld_batch(3)
    path = tmp_path / "grads.csv"
    rows = per_trajectory_grads(ctx, batch, theta)
    dump_csv(path, rows)
    back = np.loadtxt(path, delimiter=",", skiprows=1)[:, 1:]
    assert np.array_equal(back, rows)


def test_gradient_variance_is_finite():
    ctx, batch, theta = gridworld_batch(500)
    var = per_trajectory_grads(ctx, batch, theta).var(axis=0, ddof=1).sum()
    assert np.isfinite(var) and var > 0


def test_gridworld_random_policy_value():
    mdp = gridworld()
    pol = make_policy("softmax-tabular", mdp)
    J, g, _ = exact_dp(mdp, pol, np.zeros(pol.dim))
    assert J == pytest.approx(-0.11365, abs=5e-5)
    assert np.linalg.norm(g) > 0

