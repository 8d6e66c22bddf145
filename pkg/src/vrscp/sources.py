"""Stochastic first/second-order oracles consumed by the optimisers.

A source hands out batch-mean gradients, fixed-batch HVP operators, the
interpolated HVP correction used between checkpoints, and evaluation returns.
Every random draw is keyed by ``(seed, purpose, iteration, index)`` through
:mod:`vrscp.streams`.

:class:`TrajectorySource` wraps an MDP and a policy.  :class:`SyntheticSource`
adds Gaussian noise to the exact derivatives of an analytic function, which
isolates the optimiser from trajectory sampling.
"""

import numpy as np

from . import streams
from .env import discounted_returns, exact_dp, sample_batch
from .errors import ConfigError
from .estimators import EstimatorContext, HvpOperator, ordered_mean, per_trajectory_grads
from .policy import check_params


def interpolation_points(theta_prev, theta_cur, S):
    """``theta_s = (1 - s/S) theta_cur + (s/S) theta_prev`` for ``s = 1..S``."""
    return [(1.0 - s / S) * theta_cur + (s / S) * theta_prev for s in range(1, S + 1)]


def hvp_correction(mdp, policy, ctx, theta_prev, theta_cur, S, rngs):
    """Estimate ``grad J(theta_cur) - grad J(theta_prev)`` from HVPs on the segment.

    ``rngs`` supplies one stream per interpolation point; trajectory ``s`` is
    drawn under ``pi_{theta_s}``.  No likelihood ratios are involved.
    """
    if S < 1:
        raise ConfigError("S_t must be at least 1")
    rngs = list(rngs)
    if len(rngs) != S:
        raise ConfigError(f"need {S} streams, got {len(rngs)}")
    theta_prev = check_params(policy, theta_prev)
    theta_cur = check_params(policy, theta_cur)
    step = theta_cur - theta_prev
    rows = []
    for theta_s, rng in zip(interpolation_points(theta_prev, theta_cur, S), rngs):
        batch = sample_batch(mdp, policy, theta_s, [rng])
        rows.append(HvpOperator(ctx, batch, theta_s).per_trajectory(step)[0])
    return ordered_mean(rows)


class TrajectorySource:
    """Oracle backed by sampled trajectories of ``mdp`` under ``policy``."""

    def __init__(self, mdp, policy, baseline="off"):
        self.mdp = mdp
        self.policy = policy
        self.ctx = EstimatorContext(policy, mdp.gamma, baseline)

    @property
    def dim(self):
        return self.policy.dim

    @property
    def horizon(self):
        return self.mdp.horizon

    @property
    def exact_available(self):
        return self.mdp.tabular

    def sample(self, params, seed, purpose, iteration, n):
        return sample_batch(self.mdp, self.policy, params, streams.streams(seed, purpose, iteration, n))

    def grad_batch(self, params, n, seed, iteration, purpose=streams.CHECKPOINT):
        batch = self.sample(params, seed, purpose, iteration, n)
        return ordered_mean(per_trajectory_grads(self.ctx, batch, params))

    def hvp_operator(self, params, n, seed, iteration):
        return HvpOperator(self.ctx, self.sample(params, seed, streams.HVP, iteration, n), params)

    def correction(self, theta_prev, theta_cur, S, seed, iteration):
        rngs = streams.streams(seed, streams.CORRECTION, iteration, S)
        return hvp_correction(self.mdp, self.policy, self.ctx, theta_prev, theta_cur, S, rngs)

    def evaluate(self, params, n, seed, iteration):
        batch = self.sample(params, seed, streams.EVALUATION, iteration, n)
        return float(ordered_mean(discounted_returns(batch, self.mdp.gamma)[:, None])[0])

    def exact(self, params):
        """Exact ``(J, grad, hess)``; tabular environments only."""
        if not self.mdp.tabular:
            raise ConfigError("exact derivatives need a tabular environment")
        return exact_dp(self.mdp, self.policy, params)


class SyntheticSource:
    """Noisy derivatives of an analytic objective ``f`` (to be maximised).

    Each gradient sample is ``grad f + noise`` and each Hessian sample is
    ``hess f + noise_std * Z`` with ``Z`` a standard Gaussian matrix.  With
    ``grad_noise="relative"`` the gradient noise is scaled by ``||grad f||``,
    so samples are exact wherever the true gradient vanishes.
    """

    horizon = 1
    exact_available = True

    def __init__(self, f, grad, hess, dim, noise_std=0.01, grad_noise="additive"):
        if grad_noise not in ("additive", "relative"):
            raise ConfigError("grad_noise must be 'additive' or 'relative'")
        if noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        self.f, self.grad, self.hess = f, grad, hess
        self.dim = int(dim)
        self.noise_std = float(noise_std)
        self.grad_noise = grad_noise

    def _grad_sample(self, params, rng):
        g = self.grad(params)
        scale = self.noise_std
        if self.grad_noise == "relative":
            scale *= float(np.linalg.norm(g))
        return g + scale * rng.standard_normal(self.dim)

    def _hess_sample(self, params, rng):
        return self.hess(params) + self.noise_std * rng.standard_normal((self.dim, self.dim))

    def grad_batch(self, params, n, seed, iteration, purpose=streams.CHECKPOINT):
        rngs = streams.streams(seed, purpose, iteration, n)
        return ordered_mean([self._grad_sample(params, g) for g in rngs])

    def hvp_operator(self, params, n, seed, iteration):
        rngs = streams.streams(seed, streams.HVP, iteration, n)
        H = ordered_mean([self._hess_sample(params, g) for g in rngs])
        return lambda x: H @ x

    def correction(self, theta_prev, theta_cur, S, seed, iteration):
        if S < 1:
            raise ConfigError("S_t must be at least 1")
        rngs = streams.streams(seed, streams.CORRECTION, iteration, S)
        step = theta_cur - theta_prev
        rows = [self._hess_sample(th, g) @ step
                for th, g in zip(interpolation_points(theta_prev, theta_cur, S), rngs)]
        return ordered_mean(rows)

    def evaluate(self, params, n, seed, iteration):
        return float(self.f(params))

    def exact(self, params):
        return float(self.f(params)), self.grad(params), self.hess(params)


def strict_saddle(noise_std=0.01, grad_noise="relative"):
    """``f(x, y) = -x^2 + y^2 - y^4 / 2``: strict saddle at 0, maxima at ``(0, +-1)``."""

    def f(t):
        return -t[0] ** 2 + t[1] ** 2 - 0.5 * t[1] ** 4

    def grad(t):
        return np.array([-2.0 * t[0], 2.0 * t[1] - 2.0 * t[1] ** 3])

    def hess(t):
        return np.array([[-2.0, 0.0], [0.0, 2.0 - 6.0 * t[1] ** 2]])

    return SyntheticSource(f, grad, hess, 2, noise_std=noise_std, grad_noise=grad_noise)


def quadratic(center, curvature, noise_std=1e-4, grad_noise="additive"):
    """``f(t) = 1/2 (t - c)^T K (t - c)`` with symmetric ``K`` (use negative definite for a peak)."""
    c = np.asarray(center, dtype=np.float64)
    K = np.asarray(curvature, dtype=np.float64)
    return SyntheticSource(
        lambda t: 0.5 * (t - c) @ K @ (t - c),
        lambda t: K @ (t - c),
        lambda t: K.copy(),
        len(c),
        noise_std=noise_std,
        grad_noise=grad_noise,
    )
