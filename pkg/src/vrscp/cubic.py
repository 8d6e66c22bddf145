"""Cubic-regularised model and its approximate maximisers.

The model is ``m(h) = <v, h> + 1/2 <U[h], h> - (M/6) ||h||^3`` where ``U`` is
only available as a Hessian-vector-product operator.  Two gradient-ascent
solvers work from ``U`` alone; :func:`oracle_global_max` needs the dense
matrix and exists to check them.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, OracleError


@dataclass
class CubicModel:
    v: np.ndarray
    U: object  # callable vec -> vec
    M: float

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        if not self.M > 0:
            raise ConfigError(f"cubic penalty M must be positive, got {self.M}")
        if not callable(self.U):
            raise ConfigError("U must be a callable HVP operator")

    @classmethod
    def from_dense(cls, v, U, M):
        U = np.asarray(U, dtype=np.float64)
        return cls(v, lambda x: U @ x, M)

    @property
    def dim(self):
        return self.v.shape[0]


@dataclass(frozen=True)
class SolverParams:
    """Constants shared by both solvers.

    ``C_s``, ``C_F`` and ``c_prime`` are left symbolic by the theory; the
    defaults keep iteration counts small at desk scale.
    """

    L: float
    eps: float
    rho: float
    C_s: float = 10.0
    C_F: float = 10.0
    c_prime: float = 1.0
    cap_factor: float = 10.0
    T_sub: int | None = None

    def __post_init__(self):
        for name in ("L", "eps", "rho", "C_s", "C_F", "c_prime", "cap_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver parameter {name} must be positive")
        if self.T_sub is not None and self.T_sub < 0:
            raise ConfigError("T_sub must be non-negative")

    @property
    def eta(self):
        return 1.0 / (20.0 * self.L)

    def admissible(self, M):
        """Whether ``eps <= 4 L^2 rho / M``."""
        return self.eps <= 4.0 * self.L**2 * self.rho / M

    def subsolver_iterations(self, M):
        if self.T_sub is not None:
            return int(self.T_sub)
        return math.ceil(self.C_s * self.L / (M * math.sqrt(self.eps / self.rho)))

    def finalsolver_cap(self):
        return int(self.cap_factor * math.ceil(self.C_F * self.L / math.sqrt(self.rho * self.eps)))


def _value(model, h, Uh):
    return float(model.v @ h + 0.5 * (Uh @ h) - model.M / 6.0 * np.linalg.norm(h) ** 3)


def _grad(model, h, Uh):
    return model.v + Uh - 0.5 * model.M * np.linalg.norm(h) * h


def model_value(model, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape != model.v.shape:
        raise ConfigError(f"h has shape {h.shape}, model dimension is {model.dim}")
    return _value(model, h, model.U(h))


def model_grad(model, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape != model.v.shape:
        raise ConfigError(f"h has shape {h.shape}, model dimension is {model.dim}")
    return _grad(model, h, model.U(h))


def cauchy_point(model):
    """Maximiser of the model along the direction of ``v`` (zero if ``v = 0``)."""
    v, M = model.v, model.M
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return np.zeros_like(v)
    # positive root of ||v|| + R v^T U v / ||v||^2 - (M/2) R^2 = 0, the
    # maximiser along v; the minimisation form flips the sign of ``curv``
    curv = float(v @ model.U(v)) / (M * nv * nv)
    Rc = curv + math.sqrt(curv * curv + 2.0 * nv / M)
    return v / nv * Rc


def _unit_sphere(rng, d):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def cubic_subsolver(model, params, rng, trace=None):
    """Cauchy step for large ``v``, otherwise perturbed gradient ascent.

    Returns ``(delta, model value at delta)``.  When ``trace`` is a list,
    rows ``(iteration, ||delta||, m(delta), ||grad m(delta)||)`` are appended.
    """
    v, M, L = model.v, model.M, params.L
    if np.linalg.norm(v) >= L * L / M:
        delta = cauchy_point(model)
        Ud = model.U(delta)
        if trace is not None:
            trace.append((0, float(np.linalg.norm(delta)), _value(model, delta, Ud),
                          float(np.linalg.norm(_grad(model, delta, Ud)))))
        return delta, _value(model, delta, Ud)

    sigma = params.c_prime * math.sqrt(M * params.eps) / L
    eta = params.eta
    v_tilde = v + sigma * _unit_sphere(rng, model.dim)
    delta = np.zeros_like(v)
    for t in range(params.subsolver_iterations(M) + 1):
        Ud = model.U(delta)
        if trace is not None:
            trace.append((t, float(np.linalg.norm(delta)), _value(model, delta, Ud),
                          float(np.linalg.norm(_grad(model, delta, Ud)))))
        delta = delta + eta * (v_tilde + Ud - 0.5 * M * np.linalg.norm(delta) * delta)
        if not np.all(np.isfinite(delta)):
            raise NumericError(f"cubic subsolver diverged at iteration {t}")
    return delta, model_value(model, delta)


@dataclass(frozen=True)
class FinalsolverResult:
    delta: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


def cubic_finalsolver(model, params, trace=None):
    """Gradient ascent from zero until ``||grad m|| < eps / 2`` or the cap."""
    eta, cap, tol = params.eta, params.finalsolver_cap(), params.eps / 2.0
    delta = np.zeros_like(model.v)
    g = model.v.copy()
    gn = float(np.linalg.norm(g))
    it = 0
    if trace is not None:
        trace.append((0, 0.0, 0.0, gn))
    while gn >= tol and it < cap:
        delta = delta + eta * g
        Ud = model.U(delta)
        g = _grad(model, delta, Ud)
        gn = float(np.linalg.norm(g))
        it += 1
        if not np.all(np.isfinite(delta)) or not math.isfinite(gn):
            raise NumericError(f"cubic finalsolver diverged at iteration {it}")
        if trace is not None:
            trace.append((it, float(np.linalg.norm(delta)), _value(model, delta, Ud), gn))
    return FinalsolverResult(delta, gn, it, gn < tol)


def oracle_global_max(v, U_dense, M, tol=1e-8):
    """Exact global maximiser of the cubic model for a dense symmetric ``U``.

    Solves ``r = ||(M r / 2 I - U)^{-1} v||`` on ``r > max(0, 2 lambda_max / M)``
    by bisection in the eigenbasis, with the boundary solution for the hard
    case.  Returns ``(h_star, m_star)`` after checking stationarity and the
    second-order condition ``M ||h|| / 2 I - U >= 0`` to ``tol``.
    """
    v = np.asarray(v, dtype=np.float64)
    U = np.asarray(U_dense, dtype=np.float64)
    d = v.shape[0]
    if U.shape != (d, d):
        raise ConfigError("U must be d x d")
    if d > 16:
        raise ConfigError("oracle_global_max is limited to d <= 16")
    if np.max(np.abs(U - U.T), initial=0.0) > 1e-10:
        raise ConfigError("U must be symmetric within 1e-10")
    if not M > 0:
        raise ConfigError("M must be positive")
    U = 0.5 * (U + U.T)
    lam, Q = np.linalg.eigh(U)
    w = Q.T @ v
    lmax = lam[-1]
    r_low = max(0.0, 2.0 * lmax / M)
    scale = max(1.0, float(np.linalg.norm(v)))
    top = lam >= lmax - 1e-12 * max(1.0, abs(lmax))
    w_top = float(np.linalg.norm(w[top]))

    def h_of(r, mask=None):
        denom = 0.5 * M * r - lam
        coef = np.zeros(d)
        ok = np.ones(d, bool) if mask is None else mask
        coef[ok] = w[ok] / denom[ok]
        return Q @ coef

    if w_top <= 1e-13 * scale and r_low > 0.0:
        rest = h_of(r_low, ~top)
        nrest = float(np.linalg.norm(rest))
        if nrest <= r_low:
            # hard case: pad with a top-eigenvector component up to norm r_low
            alpha = math.sqrt(max(0.0, r_low * r_low - nrest * nrest))
            h = rest + alpha * Q[:, np.flatnonzero(top)[-1]]
            return _certify(v, U, M, h, tol)
        mask = ~top
    elif np.linalg.norm(v) == 0.0:
        return _certify(v, U, M, np.zeros(d), tol)
    else:
        mask = None

    def phi(r):
        return float(np.linalg.norm(h_of(r, mask))) - r

    lo = r_low
    hi = r_low + max(1.0, math.sqrt(2.0 * float(np.linalg.norm(v)) / M))
    while phi(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    r = lo if lo > r_low and abs(phi(lo)) < abs(phi(hi)) else hi
    return _certify(v, U, M, h_of(r, mask), tol)


def _certify(v, U, M, h, tol):
    model = CubicModel.from_dense(v, U, M)
    g = np.linalg.norm(model_grad(model, h))
    psd = 0.5 * M * np.linalg.norm(h) - np.linalg.eigvalsh(U)[-1]
    if g > tol or psd < -tol:
        raise OracleError(
            f"oracle certificate failed: gradient residual {g:.3e}, PSD margin {psd:.3e}"
        )
    return h, model_value(model, h)
