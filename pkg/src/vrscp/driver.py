"""Variance-reduced stochastic cubic-regularised policy gradient.

Each iteration ``t``:

1. ``v_t`` is a fresh ``b_check`` batch mean when ``t % Q == 0``; otherwise
   ``v_{t-1}`` plus an HVP correction averaged over ``S_t`` points on the
   segment ``[theta_{t-1}, theta_t]``, each with its own fresh trajectory.
2. ``U_t`` is the mean HVP operator over a fresh ``b_h`` batch at ``theta_t``.
3. The subsolver approximately maximises the cubic model.  If the model
   increase exceeds ``eps^{3/2} / (6 sqrt(rho))`` the step is taken; otherwise
   the finalsolver step is taken and the run stops.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import streams
from .cubic import CubicModel, SolverParams, cubic_finalsolver, cubic_subsolver
from .errors import ConfigError, NumericError
from .policy import init_params
from .records import RunRecord


@dataclass(frozen=True)
class HyperParams:
    eps: float
    rho: float
    L: float
    T: int
    M: float | None = None
    Q: int | None = None
    b_check: int = 100
    b_h: int = 20
    c_S: float = 1.0
    S_min: int = 1
    S_max: int = 256
    C_s: float = 10.0
    C_F: float = 10.0
    c_prime: float = 1.0
    cap_factor: float = 10.0
    T_sub: int | None = None
    xi: float = 0.1
    seed: int = 0
    eval_batch: int = 20
    probe_budget: int | None = None
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("eps", "rho", "L", "c_S", "xi", "init_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.M is not None and not self.M > 0:
            raise ConfigError(f"M must be positive, got {self.M}")
        if self.T < 0:
            raise ConfigError("T must be non-negative")
        if self.Q is not None and self.Q < 1:
            raise ConfigError("Q must be at least 1")
        if self.S_min < 1 or self.S_max < self.S_min:
            raise ConfigError("need 1 <= S_min <= S_max")
        if min(self.b_check, self.b_h, self.eval_batch) < 1:
            raise ConfigError("batch sizes must be at least 1")
        if self.probe_budget is not None and self.probe_budget < 1:
            raise ConfigError("probe_budget must be positive")
        if not self.eps <= 4.0 * self.L**2 * self.rho / self.penalty:
            raise ConfigError(
                f"eps={self.eps} violates eps <= 4 L^2 rho / M = {4 * self.L**2 * self.rho / self.penalty}"
            )
        self.solver_params()

    @property
    def penalty(self):
        """Cubic penalty; defaults to ``4 rho``."""
        return 4.0 * self.rho if self.M is None else float(self.M)

    @property
    def period(self):
        """Checkpoint period; defaults to ``round(sqrt(rho) M / (sqrt(eps) L))``."""
        if self.Q is not None:
            return int(self.Q)
        return max(1, round(math.sqrt(self.rho) * self.penalty / (math.sqrt(self.eps) * self.L)))

    @property
    def threshold(self):
        return self.eps**1.5 / (6.0 * math.sqrt(self.rho))

    def solver_params(self):
        return SolverParams(self.L, self.eps, self.rho, C_s=self.C_s, C_F=self.C_F,
                            c_prime=self.c_prime, cap_factor=self.cap_factor, T_sub=self.T_sub)


def theory_batch_sizes(eps, rho, L, W, T, xi, d):
    """Batch sizes required by the convergence theorem (display only)."""
    b_check = 19440.0 * W**2 * math.log(4.0 * T / xi) ** 2 / eps**2
    b_h = 1080.0 * L**2 * math.log(4.0 * d * T / xi) / (rho * eps)
    return math.ceil(b_check), math.ceil(b_h)


def theory_S_coefficient(L, L1, rho, M, delta):
    """``C_2`` of the segment-sample schedule ``S_t = C_2 Q ||dtheta||^2 / eps^2``."""
    lg = math.log(1.0 / delta)
    return 38880.0 * L**2 * lg**2 + 4.0**1.25 * math.sqrt(1080.0 * lg) * rho**2 * L1**3 * M**-1.75


def compute_S_t(dtheta_norm, hp):
    """``clamp(ceil(c_S Q ||dtheta||^2 / eps^2), S_min, S_max)``."""
    if dtheta_norm < 0:
        raise ConfigError("displacement norm must be non-negative")
    raw = math.ceil(hp.c_S * hp.period * dtheta_norm**2 / hp.eps**2)
    return int(min(max(raw, hp.S_min), hp.S_max))


@dataclass
class DriverState:
    t: int
    theta: np.ndarray
    theta_prev: np.ndarray | None = None
    v: np.ndarray | None = None
    probes: int = 0
    trajectories: int = 0


@dataclass
class StepOutcome:
    t: int
    checkpoint: bool
    v: np.ndarray
    correction: np.ndarray | None
    S_t: int
    delta_m: float
    h: np.ndarray
    branch: str
    terminated: bool
    grad_trajectories: int
    trajectories: int
    final: object = None
    extras: dict = field(default_factory=dict)


def vrscp_step(state, hp, source, trace=None, force_checkpoint=False):
    """One iteration; returns ``(new_state, outcome)``."""
    t, theta = state.t, state.theta
    seed = hp.seed
    checkpoint = force_checkpoint or t % hp.period == 0 or state.v is None
    if checkpoint:
        v = source.grad_batch(theta, hp.b_check, seed, t)
        corr, S_t, n_grad = None, 0, hp.b_check
    else:
        S_t = compute_S_t(float(np.linalg.norm(theta - state.theta_prev)), hp)
        corr = source.correction(state.theta_prev, theta, S_t, seed, t)
        v = state.v + corr
        n_grad = S_t
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite gradient estimate at iteration {t}")
    U = source.hvp_operator(theta, hp.b_h, seed, t)
    model = CubicModel(v, U, hp.penalty)
    sp = hp.solver_params()
    sub_trace = [] if trace is not None else None
    h, dm = cubic_subsolver(model, sp, streams.stream(seed, streams.SUBSOLVER, t), trace=sub_trace)
    branch = "cauchy" if np.linalg.norm(v) >= hp.L**2 / hp.penalty else "ascent"
    final = None
    if trace is not None:
        trace.extend(("sub", t) + row for row in sub_trace)
    if dm > hp.threshold:
        terminated = False
    else:
        fin_trace = [] if trace is not None else None
        final = cubic_finalsolver(model, sp, trace=fin_trace)
        h, branch, terminated = final.delta, "final", True
        if trace is not None:
            trace.extend(("final", t) + row for row in fin_trace)
    used = n_grad + hp.b_h
    new = DriverState(
        t=t + 1,
        theta=theta + h,
        theta_prev=theta,
        v=v,
        probes=state.probes + source.horizon * used,
        trajectories=state.trajectories + used,
    )
    return new, StepOutcome(t, checkpoint, v, corr, S_t, float(dm), h, branch, terminated,
                            n_grad, used, final)


def _initial_theta(hp, source, theta0):
    if theta0 is not None:
        return np.array(theta0, dtype=np.float64)
    return init_params(source, streams.stream(hp.seed, streams.INIT), hp.init_scale)


def mu_value(grad, lam_max, rho):
    """``max(||grad||^{3/2}, lambda_max^3 / rho^{3/2})``."""
    return max(float(np.linalg.norm(grad)) ** 1.5, float(lam_max) ** 3 / rho**1.5)


def _run(hp, source, theta0, algorithm, force_checkpoint, monitor, trace):
    theta = _initial_theta(hp, source, theta0)
    state = DriverState(0, theta)
    record = RunRecord(algorithm, hp.seed)
    reason = "max_iterations" if hp.T > 0 else "no_iterations"
    for _ in range(hp.T):
        state, out = vrscp_step(state, hp, source, trace=trace, force_checkpoint=force_checkpoint)
        ret = source.evaluate(state.theta, hp.eval_batch, hp.seed, out.t)
        record.rows.append({
            "t": out.t, "probes": state.probes, "eval_return": ret, "delta_m": out.delta_m,
            "h_norm": float(np.linalg.norm(out.h)), "S_t": out.S_t, "branch": out.branch,
            "checkpoint": out.checkpoint, "grad_trajectories": out.grad_trajectories,
        })
        if monitor is not None:
            monitor(state, out)
        if out.terminated:
            reason = "finalsolver" if out.final.converged else "finalsolver_cap"
            break
        if hp.probe_budget is not None and state.probes >= hp.probe_budget:
            reason = "probe_budget"
            break
    record.theta = state.theta
    record.summary = {
        "termination": reason,
        "iterations": state.t,
        "total_probes": state.probes,
        "total_trajectories": state.trajectories,
        "final_mu": final_mu(source, state.theta, hp),
    }
    return record


def final_mu(source, theta, hp):
    if getattr(source, "exact_available", False):
        _, g, H = source.exact(theta)
        return mu_value(g, np.linalg.eigvalsh(0.5 * (H + H.T))[-1], hp.rho)
    return None


def vrscp_run(hp, source, theta0=None, monitor=None, trace=None):
    """Run until the finalsolver fires, ``T`` iterations, or the probe budget."""
    return _run(hp, source, theta0, "vrscp", False, monitor, trace)


def scrn_run(hp, source, theta0=None, monitor=None, trace=None):
    """Same loop with a fresh ``b_check`` gradient batch every iteration."""
    return _run(hp, source, theta0, "scrn", True, monitor, trace)


# stationarity diagnostic --------------------------------------------------------

@dataclass(frozen=True)
class MuEstimate:
    mu: float
    grad_norm: float
    lam_max: float
    converged: bool = True


def top_eigenvalue(op, dim, rng, iters=50, tol=1e-6):
    """Largest algebraic eigenvalue of a (nearly symmetric) operator.

    A first power iteration bounds the spectral radius ``s``; a second runs on
    ``op + s I`` so the top of the spectrum dominates.  Returns
    ``(lambda, converged)`` with convergence judged on the Rayleigh quotient.
    """
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    radius = 0.0
    for _ in range(iters):
        y = op(x)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0, True
        radius, x = max(radius, ny), y / ny
    shift = 1.1 * radius
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    lam, converged = -np.inf, False
    for _ in range(iters):
        y = op(x) + shift * x
        new = float(x @ y)
        y /= np.linalg.norm(y)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            converged = True
            lam = new
            x = y
            break
        lam, x = new, y
    return lam - shift, converged


def mu_diagnostic(source, params, rho, mode="exact", n=10_000, seed=0, iters=50, tol=1e-6):
    """Stationarity measure ``max(||grad J||^{3/2}, lambda_max(hess J)^3 / rho^{3/2})``."""
    params = np.asarray(params, dtype=np.float64)
    if mode == "exact":
        _, g, H = source.exact(params)
        lam = float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1])
        return MuEstimate(mu_value(g, lam, rho), float(np.linalg.norm(g)), lam)
    if mode != "estimated":
        raise ConfigError("mode must be 'exact' or 'estimated'")
    g = source.grad_batch(params, n, seed, 0, purpose=streams.DIAGNOSTIC)
    op = source.hvp_operator(params, n, seed, 10**6)
    lam, ok = top_eigenvalue(op, len(params), streams.stream(seed, streams.DIAGNOSTIC, 1), iters, tol)
    return MuEstimate(mu_value(g, lam, rho), float(np.linalg.norm(g)), lam, ok)


def hyperparams_dict(hp):
    return asdict(hp)
