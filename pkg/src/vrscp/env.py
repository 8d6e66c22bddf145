"""Finite-horizon MDPs, trajectory sampling and exact oracles.

Sampling is split in two stages: each trajectory first draws a fixed-size
block of uniforms from its own generator, then a vectorised rollout turns the
stacked blocks into a :class:`Trajectories` batch.  One stream per trajectory
keeps results independent of batching and worker layout.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, EnumerationBudgetError, NumericError
from .policy import check_params

ENUMERATION_BUDGET = 10**7
_TINY = np.finfo(np.float64).tiny


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class Trajectory:
    """One rollout; ``states[h], actions[h], rewards[h]`` for ``h < length``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = len(self.rewards)
        if len(self.states) != n or len(self.actions) != n:
            raise ConfigError("trajectory arrays must share one length")

    @property
    def length(self):
        return len(self.rewards)


@dataclass(frozen=True)
class Trajectories:
    """A batch of equal-length rollouts stacked along axis 0."""

    states: np.ndarray   # (N, H) ints or (N, H, n_s) floats
    actions: np.ndarray  # (N, H)
    rewards: np.ndarray  # (N, H)

    def __len__(self):
        return self.rewards.shape[0]

    @property
    def horizon(self):
        return self.rewards.shape[1]

    def __getitem__(self, i):
        return Trajectory(self.states[i], self.actions[i], self.rewards[i])

    @classmethod
    def stack(cls, trajs):
        trajs = list(trajs)
        if not trajs:
            raise ConfigError("cannot stack an empty list of trajectories")
        return cls(
            np.stack([t.states for t in trajs]),
            np.stack([t.actions for t in trajs]),
            np.stack([t.rewards for t in trajs]),
        )

    @classmethod
    def concat(cls, batches):
        batches = list(batches)
        return cls(
            np.concatenate([b.states for b in batches]),
            np.concatenate([b.actions for b in batches]),
            np.concatenate([b.rewards for b in batches]),
        )


def as_batch(traj):
    if isinstance(traj, Trajectories):
        return traj
    if isinstance(traj, (list, tuple)):
        return Trajectories.stack(traj)
    return Trajectories(traj.states[None], traj.actions[None], traj.rewards[None])


# environments -----------------------------------------------------------------

class TabularMDP:
    """Finite MDP with transition tensor ``P[s, a, s']`` and reward ``R[s, a]``.

    The horizon is fixed; absorbing states are expected to self-loop with zero
    reward so every rollout has exactly ``horizon`` steps.
    """

    tabular = True

    def __init__(self, P, R, p0, gamma, horizon, name="tabular"):
        P = np.array(P, dtype=np.float64)
        R = np.array(R, dtype=np.float64)
        p0 = np.array(p0, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2] or p0.shape != (P.shape[0],):
            raise ConfigError("inconsistent MDP array shapes")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ConfigError("transition rows must be distributions (tolerance 1e-12)")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ConfigError("initial distribution must sum to 1")
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
        if int(horizon) < 1:
            raise ConfigError("horizon must be a positive integer")
        _freeze(P, R, p0)
        self.P, self.R, self.p0 = P, R, p0
        self.gamma = float(gamma)
        self.horizon = int(horizon)
        self.name = name
        self.R0 = float(np.max(np.abs(R)))
        self._p0_cdf = np.cumsum(p0)
        self._P_cdf = np.cumsum(P, axis=2)

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]

    @property
    def noise_size(self):
        return 1 + 2 * self.horizon

    def _inverse_cdf(self, cdf, u):
        idx = (cdf <= u[:, None]).sum(axis=1)
        return np.minimum(idx, cdf.shape[1] - 1)

    def rollout(self, policy, params, noise):
        n, H = noise.shape[0], self.horizon
        states = np.empty((n, H), dtype=np.int64)
        actions = np.empty((n, H), dtype=np.int64)
        s = self._inverse_cdf(np.broadcast_to(self._p0_cdf, (n, self.n_states)), noise[:, 0])
        for h in range(H):
            a = policy.sample_actions(params, s, noise[:, 1 + 2 * h])
            states[:, h], actions[:, h] = s, a
            if h + 1 < H:
                s = self._inverse_cdf(self._P_cdf[s, a], noise[:, 2 + 2 * h])
        return Trajectories(states, actions, self.R[states, actions])

    def state_marginals(self, policy, params):
        """Exact ``Pr(s_h = s)`` for ``h < H`` via repeated matrix products."""
        pi = policy.probs_table(params)
        T = np.einsum("sa,sat->st", pi, self.P)
        out = [self.p0]
        for _ in range(self.horizon - 1):
            out.append(out[-1] @ T)
        return np.array(out)


def gridworld(size=5, horizon=15, gamma=0.99, goal_reward=1.0, step_penalty=-0.01, slip=0.0):
    """Square grid, start top-left, absorbing goal bottom-right.

    Actions are up/right/down/left; moves into a wall leave the agent in place.
    With probability ``slip`` the move is replaced by a uniformly random one.
    Reward is ``step_penalty`` per step off the goal plus the expected
    ``goal_reward`` for arriving at it.
    """
    if size < 2:
        raise ConfigError("gridworld size must be at least 2")
    if not 0.0 <= slip < 1.0:
        raise ConfigError("slip must lie in [0, 1)")
    S, goal = size * size, size * size - 1
    moves = ((-1, 0), (0, 1), (1, 0), (0, -1))
    det = np.zeros((S, 4, S))
    for s in range(S):
        r, c = divmod(s, size)
        for a, (dr, dc) in enumerate(moves):
            rr, cc = r + dr, c + dc
            if not (0 <= rr < size and 0 <= cc < size):
                rr, cc = r, c
            det[s, a, rr * size + cc] = 1.0
    P = (1.0 - slip) * det + slip * det.mean(axis=1, keepdims=True)
    P[goal] = 0.0
    P[goal, :, goal] = 1.0
    R = step_penalty + goal_reward * P[:, :, goal]
    R[goal] = 0.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    return TabularMDP(P, R, p0, gamma, horizon, name=f"gridworld{size}x{size}")


def random_mdp(n_states=5, n_actions=2, horizon=5, gamma=0.9, seed=0, concentration=1.0):
    """Dirichlet transitions and initial distribution, rewards uniform on [0, 1)."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    p0 = rng.dirichlet(np.full(n_states, concentration))
    p0 /= p0.sum()
    return TabularMDP(P, R, p0, gamma, horizon, name=f"random{n_states}x{n_actions}")


class LinearGaussianMDP:
    """Linear dynamics with Gaussian noise and quadratic cost, scalar action.

    ``s' = clip(A s + B clip(a) + w)``, reward ``-(s^T Q s + c a^2)`` on the
    clipped quantities, so rewards stay bounded by ``R0``.  The stored action
    is the one the policy emitted; clamping only affects the dynamics.
    """

    tabular = False

    def __init__(self, A, B, gamma=0.9, horizon=10, noise_std=0.1, init_std=0.5,
                 state_cost=1.0, action_cost=0.1, state_bound=2.0, action_bound=2.0,
                 name="linear-gaussian"):
        A = np.array(A, dtype=np.float64)
        B = np.array(B, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape != (A.shape[0],):
            raise ConfigError("A must be square and B a vector of matching length")
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
        if int(horizon) < 1:
            raise ConfigError("horizon must be a positive integer")
        if min(noise_std, init_std, state_bound, action_bound) <= 0:
            raise ConfigError("noise scales and bounds must be positive")
        _freeze(A, B)
        self.A, self.B = A, B
        self.gamma, self.horizon = float(gamma), int(horizon)
        self.noise_std, self.init_std = float(noise_std), float(init_std)
        self.state_cost, self.action_cost = float(state_cost), float(action_cost)
        self.state_bound, self.action_bound = float(state_bound), float(action_bound)
        self.name = name
        self.R0 = self.state_cost * self.state_dim * self.state_bound**2 + self.action_cost * self.action_bound**2

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def noise_size(self):
        return self.state_dim + self.horizon * (1 + self.state_dim)

    def rollout(self, policy, params, noise):
        n, H, k = noise.shape[0], self.horizon, self.state_dim
        z = ndtri(noise)
        states = np.empty((n, H, k))
        actions = np.empty((n, H))
        rewards = np.empty((n, H))
        s = np.clip(self.init_std * z[:, :k], -self.state_bound, self.state_bound)
        col = k
        for h in range(H):
            a = policy.sample_actions(params, s, z[:, col])
            if not np.all(np.isfinite(a)):
                raise NumericError("policy produced a non-finite action")
            ac = np.clip(a, -self.action_bound, self.action_bound)
            states[:, h], actions[:, h] = s, a
            rewards[:, h] = -(self.state_cost * (s * s).sum(axis=1) + self.action_cost * ac * ac)
            w = self.noise_std * z[:, col + 1:col + 1 + k]
            drift = (s[:, None, :] * self.A[None]).sum(axis=-1)
            s = np.clip(drift + ac[:, None] * self.B + w, -self.state_bound, self.state_bound)
            col += 1 + k
        return Trajectories(states, actions, rewards)


def linear_gaussian(state_dim=2, horizon=10, gamma=0.9, **kw):
    """A mildly unstable 2-D (or n-D) double-integrator-like system."""
    A = np.eye(state_dim) * 1.05
    A[np.arange(state_dim - 1), np.arange(1, state_dim)] = 0.1
    B = np.zeros(state_dim)
    B[-1] = 0.5
    return LinearGaussianMDP(A, B, gamma=gamma, horizon=horizon, **kw)


# sampling ---------------------------------------------------------------------

def _noise_block(mdp, rng):
    # strictly inside (0, 1) so inverse-normal transforms stay finite
    return np.clip(rng.random(mdp.noise_size), _TINY, 1.0 - 1e-16)


def sample_batch(mdp, policy, params, rngs):
    """One trajectory per generator in ``rngs``, in order."""
    params = check_params(policy, params)
    rngs = list(rngs)
    if not rngs:
        raise ConfigError("sample_batch needs at least one stream")
    noise = np.stack([_noise_block(mdp, g) for g in rngs])
    return mdp.rollout(policy, params, noise)


def sample_trajectory(mdp, policy, params, rng):
    """Draw one trajectory from ``p(tau | pi_theta)`` using one stream."""
    return sample_batch(mdp, policy, params, [rng])[0]


def sample_iid(mdp, policy, params, n, rng, chunk=50_000):
    """Fast path for Monte-Carlo checks: ``n`` trajectories from a single stream."""
    params = check_params(policy, params)
    out = []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        noise = np.clip(rng.random((m, mdp.noise_size)), _TINY, 1.0 - 1e-16)
        out.append(mdp.rollout(policy, params, noise))
    return Trajectories.concat(out)


# returns ----------------------------------------------------------------------

def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")


def returns_to_go_array(rewards, gamma):
    """``Psi[..., h] = sum_{t >= h} gamma^t r_t`` along the last axis.

    The discount is indexed from the start of the trajectory, not from ``h``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    H = rewards.shape[-1]
    psi = np.empty_like(rewards)
    acc = np.zeros(rewards.shape[:-1])
    for h in range(H - 1, -1, -1):
        acc = acc + gamma**h * rewards[..., h]
        psi[..., h] = acc
    return psi


def returns_to_go(traj, gamma):
    _check_gamma(gamma)
    return returns_to_go_array(traj.rewards, gamma)


def discounted_return(traj, gamma):
    """``sum_h gamma^h r_h``; bit-identical to ``returns_to_go(traj)[0]``."""
    _check_gamma(gamma)
    if traj.length == 0:
        return 0.0
    return float(returns_to_go_array(traj.rewards, gamma)[0])


def discounted_returns(batch, gamma):
    _check_gamma(gamma)
    return returns_to_go_array(batch.rewards, gamma)[:, 0]


# exact oracles ------------------------------------------------------------------

def trajectory_count(mdp):
    return (mdp.n_states * mdp.n_actions) ** mdp.horizon


def enumerate_exact(mdp, policy, params, budget=ENUMERATION_BUDGET):
    """Exact ``J``, gradient and Hessian by summing over every trajectory.

    Uses ``grad p = p g`` and ``hess p = p (g g^T + H)`` where ``g`` and ``H``
    are the summed score and log-policy Hessian of the trajectory.
    """
    if not mdp.tabular:
        raise ConfigError("enumeration needs a tabular MDP")
    params = check_params(policy, params)
    count = trajectory_count(mdp)
    if count > budget:
        raise EnumerationBudgetError(count, budget)
    S, A, H, d = mdp.n_states, mdp.n_actions, mdp.horizon, policy.dim
    ss, aa = np.divmod(np.arange(S * A), A)
    logpi = policy.log_prob(params, ss, aa).reshape(S, A)
    glp = policy.grad_log_prob(params, ss, aa).reshape(S, A, d)
    hlp = policy.hess_log_prob(params, ss, aa).reshape(S, A, d, d)
    disc = mdp.gamma ** np.arange(H)

    J, grad, hess = 0.0, np.zeros(d), np.zeros((d, d))
    chunk = max(1, min(count, 2_000_000 // max(1, d * d)))
    for start in range(0, count, chunk):
        idx = np.arange(start, min(count, start + chunk))
        digits = np.empty((idx.size, H), dtype=np.int64)
        rem = idx
        for h in range(H - 1, -1, -1):
            rem, digits[:, h] = np.divmod(rem, S * A)
        s, a = np.divmod(digits, A)
        with np.errstate(divide="ignore"):
            logp = np.log(mdp.p0[s[:, 0]]) + logpi[s, a].sum(axis=1)
            if H > 1:
                logp = logp + np.log(mdp.P[s[:, :-1], a[:, :-1], s[:, 1:]]).sum(axis=1)
        p = np.exp(logp)
        keep = p > 0
        if not np.any(keep):
            continue
        s, a, p = s[keep], a[keep], p[keep]
        R = (mdp.R[s, a] * disc).sum(axis=1)
        g = glp[s, a].sum(axis=1)
        Hl = hlp[s, a].sum(axis=1)
        w = p * R
        J += w.sum()
        grad += w @ g
        hess += np.einsum("n,ni,nj->ij", w, g, g) + np.einsum("n,nij->ij", w, Hl)
    return float(J), grad, hess


def exact_dp(mdp, policy, params):
    """Exact ``J``, gradient and Hessian by forward propagation of the state law.

    Carries the state distribution at each step together with its first and
    second derivatives in ``theta``; cost is polynomial in ``S, A, d, H``,
    so it handles instances far beyond the enumeration budget.
    """
    if not mdp.tabular:
        raise ConfigError("exact_dp needs a tabular MDP")
    params = check_params(policy, params)
    S, A, d = mdp.n_states, mdp.n_actions, policy.dim
    ss, aa = np.divmod(np.arange(S * A), A)
    pi = np.exp(policy.log_prob(params, ss, aa)).reshape(S, A)
    g = policy.grad_log_prob(params, ss, aa).reshape(S, A, d)
    hl = policy.hess_log_prob(params, ss, aa).reshape(S, A, d, d)
    dpi = pi[..., None] * g
    d2pi = pi[..., None, None] * (g[..., :, None] * g[..., None, :] + hl)

    dist = mdp.p0.copy()
    ddist = np.zeros((S, d))
    d2dist = np.zeros((S, d, d))
    J, grad, hess = 0.0, np.zeros(d), np.zeros((d, d))
    for h in range(mdp.horizon):
        x = dist[:, None] * pi
        dx = ddist[:, None, :] * pi[..., None] + dist[:, None, None] * dpi
        d2x = (d2dist[:, None] * pi[..., None, None]
               + ddist[:, None, :, None] * dpi[..., None, :]
               + dpi[..., :, None] * ddist[:, None, None, :]
               + dist[:, None, None, None] * d2pi)
        w = mdp.gamma**h * mdp.R
        J += float((x * w).sum())
        grad += np.einsum("sa,sai->i", w, dx)
        hess += np.einsum("sa,saij->ij", w, d2x)
        dist = np.einsum("sa,sat->t", x, mdp.P)
        ddist = np.einsum("sai,sat->ti", dx, mdp.P)
        d2dist = np.einsum("saij,sat->tij", d2x, mdp.P)
    return J, grad, hess


def exact_objective(mdp, policy, params):
    """Exact ``(J, grad, hess)``; alias for the dynamic-programming oracle."""
    return exact_dp(mdp, policy, params)


def export_exact(path, J, grad, hess):
    """Write the oracle output as a flat text matrix.

    Row 0 holds ``J`` padded with zeros, row 1 the gradient, rows 2.. the
    Hessian; values use 17 significant digits.
    """
    d = len(grad)
    mat = np.zeros((d + 2, d))
    mat[0, 0] = J
    mat[1] = grad
    mat[2:] = hess
    np.savetxt(path, mat, fmt="%.17g", header=f"exact oracle d={d}: row0=J, row1=grad, rows2..=hessian")


def import_exact(path):
    mat = np.atleast_2d(np.loadtxt(path))
    return float(mat[0, 0]), mat[1].copy(), mat[2:].copy()



def enumerate_trajectories(mdp, policy, params, budget=ENUMERATION_BUDGET):
    """Every positive-probability trajectory with its probability under ``pi_theta``."""
    if not mdp.tabular:
        raise ConfigError("enumeration needs a tabular MDP")
    params = check_params(policy, params)
    count = trajectory_count(mdp)
    if count > budget:
        raise EnumerationBudgetError(count, budget)
    S, A, H = mdp.n_states, mdp.n_actions, mdp.horizon
    digits = np.empty((count, H), dtype=np.int64)
    rem = np.arange(count)
    for h in range(H - 1, -1, -1):
        rem, digits[:, h] = np.divmod(rem, S * A)
    s, a = np.divmod(digits, A)
    pi = policy.probs_table(params)
    p = mdp.p0[s[:, 0]] * np.prod(pi[s, a], axis=1)
    if H > 1:
        p = p * np.prod(mdp.P[s[:, :-1], a[:, :-1], s[:, 1:]], axis=1)
    keep = p > 0
    s, a = s[keep], a[keep]
    return Trajectories(s, a, mdp.R[s, a]), p[keep]
