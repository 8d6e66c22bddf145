"""Per-trajectory gradient and Hessian-vector-product estimators.

For a trajectory ``tau`` with returns-to-go ``Psi_h`` (discounted from the
trajectory start) and scores ``g_h = grad log pi(a_h | s_h)``:

* gradient estimate ``sum_h Psi_h g_h`` (this is also ``grad Phi``),
* HVP estimate ``<sum_h g_h, v> grad Phi + sum_h Psi_h hess log pi(a_h|s_h) v``.

Transition terms drop out of ``grad log p(tau)``, so only policy scores are
needed.  Sums over ``h`` and over the batch run in index order.
"""

from dataclasses import dataclass

import numpy as np

from .env import as_batch, returns_to_go_array
from .errors import ConfigError, NumericError
from .policy import _check_vec, check_params

BASELINES = ("off", "per-step-batch-mean")


@dataclass(frozen=True)
class EstimatorContext:
    policy: object
    gamma: float
    baseline: str = "off"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")


def _flat_pairs(batch):
    N, H = batch.rewards.shape
    if batch.states.ndim == 2:
        states = batch.states.reshape(N * H)
    else:
        states = batch.states.reshape(N * H, -1)
    return states, batch.actions.reshape(N * H)


def _scores(ctx, batch, params):
    """Per-step scores ``(N, H, d)``."""
    N, H = batch.rewards.shape
    s, a = _flat_pairs(batch)
    g = ctx.policy.grad_log_prob(params, s, a).reshape(N, H, -1)
    return g


def _step_sum(weights, per_step):
    """``sum_h weights[:, h] * per_step[:, h]`` accumulated in order of ``h``."""
    N, H, d = per_step.shape
    acc = np.zeros((N, d))
    for h in range(H):
        term = weights[:, h, None] * per_step[:, h]
        if not np.all(np.isfinite(term)):
            raise NumericError(f"non-finite estimator contribution at step {h}")
        acc = acc + term
    return acc


def _loo_baseline(psi):
    """Per-step mean of ``Psi_h`` over the other trajectories in the batch."""
    N = psi.shape[0]
    if N < 2:
        return np.zeros_like(psi)
    return (psi.sum(axis=0, keepdims=True) - psi) / (N - 1)


def per_trajectory_grads(ctx, batch, params, baseline=None):
    """Row ``i`` is the gradient estimate for trajectory ``i``."""
    params = check_params(ctx.policy, params)
    batch = as_batch(batch)
    psi = returns_to_go_array(batch.rewards, ctx.gamma)
    if (baseline or ctx.baseline) == "per-step-batch-mean":
        psi = psi - _loo_baseline(psi)
    return _step_sum(psi, _scores(ctx, batch, params))


def grad_estimate(ctx, traj, params):
    """``sum_h Psi_h grad log pi(a_h|s_h)``; unbiased for ``grad J``."""
    return per_trajectory_grads(ctx, as_batch(traj), params, baseline="off")[0]


def phi_grad(ctx, traj, params):
    """``grad Phi(theta, tau)``, the same sum as :func:`grad_estimate`."""
    return grad_estimate(ctx, traj, params)


class HvpOperator:
    """``vec -> mean_i Hhat(theta, tau_i) vec`` over a fixed batch.

    Scores, returns-to-go and ``grad Phi`` are cached at construction, so each
    call costs one batched log-policy HVP plus ``O(N H d)`` arithmetic.
    """

    def __init__(self, ctx, batch, params):
        self.ctx = ctx
        self.params = check_params(ctx.policy, params)
        self.batch = as_batch(batch)
        if len(self.batch) == 0:
            raise ConfigError("HVP operator needs a non-empty batch")
        self.psi = returns_to_go_array(self.batch.rewards, ctx.gamma)
        scores = _scores(ctx, self.batch, self.params)
        self.score_sum = _step_sum(np.ones_like(self.psi), scores)
        self.grad_phi = _step_sum(self.psi, scores)
        self._pairs = _flat_pairs(self.batch)
        self.calls = 0

    @property
    def dim(self):
        return self.ctx.policy.dim

    def per_trajectory(self, vec):
        vec = _check_vec(self.ctx.policy, vec)
        N, H = self.psi.shape
        s, a = self._pairs
        hv = self.ctx.policy.hvp_log_prob(self.params, s, a, vec).reshape(N, H, -1)
        coef = (self.score_sum * vec).sum(axis=1)
        return coef[:, None] * self.grad_phi + _step_sum(self.psi, hv)

    def __call__(self, vec):
        self.calls += 1
        return ordered_mean(self.per_trajectory(vec))


def hvp_estimate(ctx, traj, params, vec):
    """Single-trajectory HVP estimate; cost ``O(H d)``, no Hessian formed."""
    return HvpOperator(ctx, as_batch(traj), params).per_trajectory(vec)[0]


def ordered_mean(rows):
    """Arithmetic mean of rows, summed strictly in index order."""
    rows = np.asarray(rows)
    if rows.shape[0] == 0:
        raise ConfigError("empty batch")
    acc = np.zeros(rows.shape[1:])
    for r in rows:
        acc = acc + r
    return acc / rows.shape[0]


def batch_mean_grad(ctx, trajectories, params):
    batch = as_batch(trajectories)
    if len(batch) == 0:
        raise ConfigError("empty batch")
    return ordered_mean(per_trajectory_grads(ctx, batch, params))


def batch_mean_hvp(ctx, trajectories, params, vec):
    batch = as_batch(trajectories)
    if len(batch) == 0:
        raise ConfigError("empty batch")
    return HvpOperator(ctx, batch, params)(vec)


def dump_csv(path, rows):
    """Write per-trajectory estimator vectors, one row per trajectory."""
    rows = np.atleast_2d(rows)
    header = "index," + ",".join(f"c{j}" for j in range(rows.shape[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, r in enumerate(rows):
            fh.write(f"{i}," + ",".join(format(float(x), ".17g") for x in r) + "\n")
