"""Differentiable stochastic policies.

All three families expose vectorised ``log_prob``, ``grad_log_prob`` and
``hvp_log_prob`` over a batch of ``(state, action)`` pairs.  Every
row is computed with elementwise operations and reductions along a short
trailing axis, so the result for one pair does not depend on how many other
pairs share the call.  The batch estimators rely on that to reproduce a
serial loop bit for bit.

Parameter vectors are flat ``float64`` arrays.  Checkpoints use a 16-byte
little-endian header (magic, version, dimension) followed by the raw values.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

CHECKPOINT_MAGIC = b"VRSP"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def check_params(policy, params):
    """Validate dimension and finiteness, returning a float64 copy-free view."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != policy.dim:
        raise ConfigError(
            f"parameter vector has shape {params.shape}, policy expects ({policy.dim},)"
        )
    bad = np.flatnonzero(~np.isfinite(params))
    if bad.size:
        raise NumericError(f"non-finite policy parameter at index {int(bad[0])}")
    return params


def _check_vec(policy, vec):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (policy.dim,):
        raise ConfigError(f"vector has shape {vec.shape}, expected ({policy.dim},)")
    return vec


def _rowdot(x, y):
    # reduction over the trailing axis only; per-row result is batch-size independent
    return (x * y).sum(axis=-1)


@dataclass(frozen=True)
class SoftmaxTabular:
    """Tabular softmax policy, one logit per (state, action)."""

    n_states: int
    n_actions: int
    family = "softmax-tabular"

    @property
    def dim(self):
        return self.n_states * self.n_actions

    @property
    def discrete(self):
        return True

    def logits(self, params):
        return params.reshape(self.n_states, self.n_actions)

    def log_probs_table(self, params):
        """``log pi(a|s)`` for every state and action, shape ``(S, A)``."""
        z = self.logits(params)
        m = z.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
        return z - lse

    def probs_table(self, params):
        return np.exp(self.log_probs_table(params))

    def log_prob(self, params, states, actions):
        out = self.log_probs_table(params)[states, actions]
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite log-probability")
        return out

    def grad_log_prob(self, params, states, actions):
        n = len(states)
        p = self.probs_table(params)[states]
        block = -p
        block[np.arange(n), actions] += 1.0
        out = np.zeros((n, self.n_states, self.n_actions))
        out[np.arange(n), states] = block
        return out.reshape(n, self.dim)

    def hvp_log_prob(self, params, states, actions, vec):
        n = len(states)
        p = self.probs_table(params)[states]
        vs = vec.reshape(self.n_states, self.n_actions)[states]
        block = -(p * vs - p * _rowdot(p, vs)[:, None])
        out = np.zeros((n, self.n_states, self.n_actions))
        out[np.arange(n), states] = block
        return out.reshape(n, self.dim)

    def hess_log_prob(self, params, states, actions):
        """Dense Hessians ``(n, d, d)``; closed form ``-(diag p - p p^T)`` per block."""
        n = len(states)
        p = self.probs_table(params)[states]
        A = self.n_actions
        out = np.zeros((n, self.dim, self.dim))
        for i in range(n):
            lo = states[i] * A
            out[i, lo:lo + A, lo:lo + A] = np.outer(p[i], p[i]) - np.diag(p[i])
        return out

    def sample_actions(self, params, states, u):
        cdf = np.cumsum(self.probs_table(params)[states], axis=1)
        a = (cdf <= u[:, None]).sum(axis=1)
        return np.minimum(a, self.n_actions - 1)


def _features(kind, states):
    states = np.atleast_2d(states)
    if kind == "identity":
        return states
    if kind == "identity+bias":
        return np.concatenate([states, np.ones((states.shape[0], 1))], axis=1)
    raise ConfigError(f"unknown feature map {kind!r}")


@dataclass(frozen=True)
class GaussianLinear:
    """Scalar-action Gaussian policy ``N(theta . phi(s), sigma^2)``."""

    state_dim: int
    sigma: float = 1.0
    features: str = "identity"
    family = "gaussian-linear"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        _features(self.features, np.zeros((1, self.state_dim)))

    @property
    def dim(self):
        return self.state_dim + (self.features == "identity+bias")

    @property
    def discrete(self):
        return False

    def _phi(self, states):
        return _features(self.features, np.asarray(states, dtype=np.float64))

    def mean(self, params, states):
        return _rowdot(self._phi(states), params)

    def log_prob(self, params, states, actions):
        z = (np.asarray(actions, dtype=np.float64) - self.mean(params, states)) / self.sigma
        out = -0.5 * z * z - math.log(self.sigma) - LOG_SQRT_2PI
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite log-probability")
        return out

    def grad_log_prob(self, params, states, actions):
        phi = self._phi(states)
        resid = (np.asarray(actions, dtype=np.float64) - _rowdot(phi, params)) / self.sigma**2
        return resid[:, None] * phi

    def hvp_log_prob(self, params, states, actions, vec):
        phi = self._phi(states)
        return -(_rowdot(phi, vec) / self.sigma**2)[:, None] * phi

    def hess_log_prob(self, params, states, actions):
        phi = self._phi(states)
        return -(phi[:, :, None] * phi[:, None, :]) / self.sigma**2

    def sample_actions(self, params, states, z):
        return self.mean(params, states) + self.sigma * z


@dataclass(frozen=True)
class GaussianMLP:
    """Gaussian policy whose mean is a tanh MLP; fixed standard deviation.

    Gradients use a hand-written backward pass and Hessian-vector products the
    forward-over-reverse R-operator, so no ``d x d`` matrix is ever formed.
    """

    state_dim: int
    hidden: tuple = (8, 8)
    sigma: float = 1.0
    family = "gaussian-mlp"
    _shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigError("gaussian-mlp needs two positive hidden widths")
        h1, h2 = self.hidden
        shapes = ((h1, self.state_dim), (h1,), (h2, h1), (h2,), (h2,), (1,))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "_shapes", shapes)

    @property
    def dim(self):
        return sum(int(np.prod(s)) for s in self._shapes)

    @property
    def discrete(self):
        return False

    def unpack(self, params):
        out, k = [], 0
        for s in self._shapes:
            n = int(np.prod(s))
            out.append(params[k:k + n].reshape(s))
            k += n
        return out

    @staticmethod
    def _pack(parts):
        n = parts[0].shape[0]
        return np.concatenate([p.reshape(n, -1) for p in parts], axis=1)

    def _forward(self, params, states):
        W1, b1, W2, b2, w3, b3 = self.unpack(params)
        x = np.atleast_2d(np.asarray(states, dtype=np.float64))
        a1 = np.tanh(_rowdot(x[:, None, :], W1[None]) + b1)
        a2 = np.tanh(_rowdot(a1[:, None, :], W2[None]) + b2)
        m = _rowdot(a2, w3) + b3[0]
        return x, a1, a2, m

    def mean(self, params, states):
        return self._forward(params, states)[3]

    def log_prob(self, params, states, actions):
        m = self.mean(params, states)
        z = (np.asarray(actions, dtype=np.float64) - m) / self.sigma
        out = -0.5 * z * z - math.log(self.sigma) - LOG_SQRT_2PI
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite log-probability")
        return out

    def _mean_grad(self, params, x, a1, a2):
        _, _, W2, _, w3, _ = self.unpack(params)
        n = x.shape[0]
        g_z2 = w3[None, :] * (1.0 - a2 * a2)
        g_a1 = _rowdot(np.swapaxes(W2, 0, 1)[None], g_z2[:, None, :])
        g_z1 = g_a1 * (1.0 - a1 * a1)
        return self._pack([
            g_z1[:, :, None] * x[:, None, :],
            g_z1,
            g_z2[:, :, None] * a1[:, None, :],
            g_z2,
            a2,
            np.ones((n, 1)),
        ])

    def grad_log_prob(self, params, states, actions):
        x, a1, a2, m = self._forward(params, states)
        delta = (np.asarray(actions, dtype=np.float64) - m) / self.sigma**2
        return delta[:, None] * self._mean_grad(params, x, a1, a2)

    def hvp_log_prob(self, params, states, actions, vec):
        W1, b1, W2, b2, w3, b3 = self.unpack(params)
        V1, c1, V2, c2, v3, c3 = self.unpack(vec)
        x, a1, a2, m = self._forward(params, states)
        n = x.shape[0]
        W2T, V2T = np.swapaxes(W2, 0, 1), np.swapaxes(V2, 0, 1)
        s1, s2 = 1.0 - a1 * a1, 1.0 - a2 * a2
        # forward R-pass
        r_a1 = s1 * (_rowdot(x[:, None, :], V1[None]) + c1)
        r_a2 = s2 * (_rowdot(a1[:, None, :], V2[None]) + _rowdot(r_a1[:, None, :], W2[None]) + c2)
        r_m = _rowdot(a2, v3) + _rowdot(r_a2, w3) + c3[0]
        # backward pass and its R-derivative
        g_z2 = w3[None, :] * s2
        r_g_z2 = v3[None, :] * s2 - 2.0 * w3[None, :] * a2 * r_a2
        g_a1 = _rowdot(W2T[None], g_z2[:, None, :])
        r_g_a1 = _rowdot(V2T[None], g_z2[:, None, :]) + _rowdot(W2T[None], r_g_z2[:, None, :])
        g_z1 = g_a1 * s1
        r_g_z1 = r_g_a1 * s1 - 2.0 * g_a1 * a1 * r_a1
        grad_m = self._pack([
            g_z1[:, :, None] * x[:, None, :], g_z1,
            g_z2[:, :, None] * a1[:, None, :], g_z2,
            a2, np.ones((n, 1)),
        ])
        hv_m = self._pack([
            r_g_z1[:, :, None] * x[:, None, :], r_g_z1,
            r_g_z2[:, :, None] * a1[:, None, :] + g_z2[:, :, None] * r_a1[:, None, :], r_g_z2,
            r_a2, np.zeros((n, 1)),
        ])
        # log pi = -(a - m)^2 / (2 sigma^2) + const
        delta = (np.asarray(actions, dtype=np.float64) - m) / self.sigma**2
        return delta[:, None] * hv_m - (r_m / self.sigma**2)[:, None] * grad_m

    def hess_log_prob(self, params, states, actions):
        eye = np.eye(self.dim)
        cols = [self.hvp_log_prob(params, states, actions, eye[j]) for j in range(self.dim)]
        return np.stack(cols, axis=2)

    def sample_actions(self, params, states, z):
        return self.mean(params, states) + self.sigma * z


def make_policy(family, mdp, *, sigma=1.0, hidden=(8, 8), features="identity"):
    """Build a policy of ``family`` matching the spaces of ``mdp``."""
    if family not in ("softmax-tabular", "gaussian-linear", "gaussian-mlp"):
        raise ConfigError(f"unknown policy family {family!r}")
    if family == "softmax-tabular":
        if not mdp.tabular:
            raise ConfigError("softmax-tabular needs a tabular environment")
        return SoftmaxTabular(mdp.n_states, mdp.n_actions)
    if mdp.tabular:
        raise ConfigError(f"{family} needs a continuous environment")
    if family == "gaussian-linear":
        return GaussianLinear(mdp.state_dim, sigma=sigma, features=features)
    return GaussianMLP(mdp.state_dim, hidden=tuple(hidden), sigma=sigma)


def init_params(policy, rng, scale=0.1):
    """Uniform draw in ``[-scale, scale]``."""
    return rng.uniform(-scale, scale, size=policy.dim)


# single-pair conveniences ------------------------------------------------------

def _one(policy, s):
    if policy.discrete:
        return np.array([int(s)])
    return np.atleast_2d(np.asarray(s, dtype=np.float64))


def log_prob(policy, params, s, a):
    params = check_params(policy, params)
    return float(policy.log_prob(params, _one(policy, s), np.array([a]))[0])


def grad_log_prob(policy, params, s, a):
    params = check_params(policy, params)
    return policy.grad_log_prob(params, _one(policy, s), np.array([a]))[0]


def hvp_log_prob(policy, params, s, a, vec):
    params = check_params(policy, params)
    vec = _check_vec(policy, vec)
    return policy.hvp_log_prob(params, _one(policy, s), np.array([a]), vec)[0]


# checkpoints ----------------------------------------------------------------

def save_params(path, params):
    params = np.ascontiguousarray(params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.shape[0]))
        fh.write(params.tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated checkpoint header")
    magic, version, d = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * d:
        raise ConfigError(f"{path}: expected {d} values, found {len(body) / 8:g}")
    return np.frombuffer(body, dtype="<f8").astype(np.float64)
