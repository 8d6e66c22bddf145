"""Oracle-backed verification suites.

Each check returns a :class:`CheckResult`; the command line prints them as a
table and the test-suite asserts on them.  Sizes default to the full
verification settings and can be scaled down for quick runs.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import streams
from .baselines import BaselineConfig, reinforce_run
from .cubic import CubicModel, SolverParams, cubic_finalsolver, cubic_subsolver, oracle_global_max
from .driver import HyperParams, vrscp_run
from .env import enumerate_exact, random_mdp, sample_iid
from .errors import ConfigError
from .estimators import EstimatorContext, HvpOperator, per_trajectory_grads
from .policy import SoftmaxTabular
from .records import dumps
from .sources import strict_saddle


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34} {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


# estimators -------------------------------------------------------------------

def unbiasedness_setting(theta_seed=0):
    """The 5-state / 2-action, H=5, gamma=0.9 instance with softmax policy."""
    mdp = random_mdp(n_states=5, n_actions=2, horizon=5, gamma=0.9, seed=0)
    policy = SoftmaxTabular(5, 2)
    return mdp, policy


def _z_scores(rows, exact):
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(n)
    return np.abs(mean - exact) / np.where(se > 0, se, np.inf), mean, se


def check_grad_unbiased(n=200_000, draws=3, seed=0):
    def run():
        mdp, policy = unbiasedness_setting()
        ctx = EstimatorContext(policy, mdp.gamma)
        rng = streams.stream(seed, streams.DIAGNOSTIC, 0)
        worst = 0.0
        for _ in range(draws):
            theta = rng.uniform(-1.0, 1.0, policy.dim)
            _, g, _ = enumerate_exact(mdp, policy, theta)
            batch = sample_iid(mdp, policy, theta, n, rng)
            z, _, _ = _z_scores(per_trajectory_grads(ctx, batch, theta), g)
            worst = max(worst, float(z.max()))
        return worst <= 4.0, f"max |z| = {worst:.2f} over {draws} draws, N={n}"
    return _timed("gradient unbiasedness", run)


def check_hvp_unbiased(n=200_000, draws=3, vecs=5, seed=0):
    def run():
        mdp, policy = unbiasedness_setting()
        ctx = EstimatorContext(policy, mdp.gamma)
        rng = streams.stream(seed, streams.DIAGNOSTIC, 1)
        worst = 0.0
        for _ in range(draws):
            theta = rng.uniform(-1.0, 1.0, policy.dim)
            _, _, H = enumerate_exact(mdp, policy, theta)
            op = HvpOperator(ctx, sample_iid(mdp, policy, theta, n, rng), theta)
            for _ in range(vecs):
                u = rng.standard_normal(policy.dim)
                u /= np.linalg.norm(u)
                z, _, _ = _z_scores(op.per_trajectory(u), H @ u)
                worst = max(worst, float(z.max()))
        return worst <= 4.0, f"max |z| = {worst:.2f} over {draws}x{vecs} vectors, N={n}"
    return _timed("HVP unbiasedness", run)


# cubic solvers ----------------------------------------------------------------

def random_symmetric(rng, d, bound):
    """Symmetric matrix with eigenvalues uniform in ``[-bound, bound]``."""
    Qm, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.uniform(-bound, bound, d)
    return (Qm * lam) @ Qm.T


def check_oracle(instances=100, probes=100_000, seed=0):
    def run():
        rng = streams.stream(seed, streams.DIAGNOSTIC, 2)
        worst = -np.inf
        for _ in range(instances):
            d = int(rng.integers(1, 6))
            U = random_symmetric(rng, d, 2.0)
            U = 0.5 * (U + U.T)
            v = rng.standard_normal(d) * rng.choice([1e-3, 0.1, 1.0])
            M = float(rng.uniform(0.5, 4.0))
            h, m = oracle_global_max(v, U, M, tol=1e-8)
            R = 2.0 * max(np.linalg.norm(h), 1e-3)
            x = rng.standard_normal((probes, d))
            x *= (R * rng.uniform(0, 1, probes) ** (1.0 / d) / np.linalg.norm(x, axis=1))[:, None]
            r = np.linalg.norm(x, axis=1)
            vals = x @ v + 0.5 * np.einsum("ij,jk,ik->i", x, U, x) - M / 6.0 * r**3
            worst = max(worst, float(vals.max() - m))
        return worst <= 1e-9, f"certificates ok; best probe excess {worst:.2e} over {instances} instances"
    return _timed("cubic oracle optimality", run)


def subsolver_instances(count, seed, eps=1e-3, rho=1.0, L=1.0):
    """Instances with ``||h*|| >= sqrt(eps/rho)`` and ``||U|| <= L``."""
    M = 4.0 * rho
    rng = streams.stream(seed, streams.DIAGNOSTIC, 3)
    out = []
    while len(out) < count:
        U = random_symmetric(rng, 5, L)
        v = rng.standard_normal(5)
        v *= rng.uniform(0.0, 0.3) / np.linalg.norm(v)
        h, m = oracle_global_max(v, U, M)
        if np.linalg.norm(h) >= math.sqrt(eps / rho):
            out.append((v, U, h, m))
    return out, SolverParams(L, eps, rho), M


def check_subsolver(count=50, need=45, seed=0, eps=1e-3):
    def run():
        inst, sp, M = subsolver_instances(count, seed, eps=eps)
        bound = M * sp.rho**-1.5 * sp.eps**1.5 / 24.0
        ok = 0
        for k, (v, U, _, _) in enumerate(inst):
            _, dm = cubic_subsolver(CubicModel.from_dense(v, U, M), sp,
                                    streams.stream(seed, streams.SUBSOLVER, k))
            ok += dm >= bound
        return ok >= need, f"{ok}/{count} runs reach the model-increase bound {bound:.3e}"
    return _timed("subsolver guarantee", run)


def check_finalsolver(count=20, seed=0, eps=0.01, rho=1.0, L=1.0):
    def run():
        M = 4.0 * rho
        sp = SolverParams(L, eps, rho)
        rng = streams.stream(seed, streams.DIAGNOSTIC, 4)
        bad = []
        for k in range(count):
            U = random_symmetric(rng, 5, L)
            v = rng.standard_normal(5)
            v *= rng.uniform(0.0, 1.0) / np.linalg.norm(v)
            h_star, _ = oracle_global_max(v, U, M)
            res = cubic_finalsolver(CubicModel.from_dense(v, U, M), sp)
            if not (res.converged and res.grad_norm < eps / 2
                    and np.linalg.norm(res.delta) <= np.linalg.norm(h_star) + 1e-8):
                bad.append(k)
        return not bad, f"{count - len(bad)}/{count} normal exits within the global-max radius"
    return _timed("finalsolver contract", run)


# saddle escape ----------------------------------------------------------------

SADDLE_EPS = 0.01
SADDLE_RHO = 1.0


def saddle_hyperparams(seed, T=200, **kw):
    # |2 - 6 y^2| <= 8 on |y| <= 1.2, so L = 8 bounds the Hessian along the path
    params = dict(eps=SADDLE_EPS, rho=SADDLE_RHO, L=8.0, T=T, b_check=20, b_h=5, c_S=1.0,
                  S_max=4096, C_s=30.0, seed=seed)
    params.update(kw)
    return HyperParams(**params)


def reached_sosp(source, theta, eps, rho):
    _, g, H = source.exact(theta)
    return (np.linalg.norm(g) <= eps
            and np.linalg.eigvalsh(H)[-1] <= math.sqrt(rho * eps))


def check_saddle(seeds=10, need=9, grad_noise="relative", seed_offset=0):
    def run():
        src = strict_saddle(noise_std=0.01, grad_noise=grad_noise)
        escaped, stayed, budgets = 0, 0, []
        for s in range(seed_offset, seed_offset + seeds):
            hp = saddle_hyperparams(s)
            rec = vrscp_run(hp, src, theta0=np.zeros(2))
            escaped += bool(reached_sosp(src, rec.theta, hp.eps, hp.rho))
            budget = rec.summary["total_probes"]
            budgets.append(budget)
            ga = reinforce_run(BaselineConfig(step_size=0.05, batch=hp.b_check, T=10**9, seed=s,
                                              probe_budget=budget, rho=hp.rho),
                               src, theta0=np.zeros(2))
            stayed += float(np.linalg.norm(ga.theta)) <= 1e-6
        ok = escaped >= need and stayed == seeds
        return ok, (f"cubic escaped {escaped}/{seeds}; gradient ascent stayed {stayed}/{seeds} "
                    f"(budgets {min(budgets)}-{max(budgets)} probes, {grad_noise} gradient noise)")
    return _timed(f"saddle escape ({grad_noise})", run)


def check_saddle_escape_only(seeds=10, need=9, grad_noise="additive"):
    def run():
        src = strict_saddle(noise_std=0.01, grad_noise=grad_noise)
        escaped = 0
        for s in range(seeds):
            hp = saddle_hyperparams(s)
            escaped += bool(reached_sosp(src, vrscp_run(hp, src, theta0=np.zeros(2)).theta,
                                         hp.eps, hp.rho))
        return escaped >= need, f"cubic escaped {escaped}/{seeds} with {grad_noise} gradient noise"
    return _timed(f"saddle escape ({grad_noise})", run)


# suites -----------------------------------------------------------------------

SUITES = {
    "estimators": (check_grad_unbiased, check_hvp_unbiased),
    "cubic": (check_oracle, check_subsolver, check_finalsolver),
    "saddle": (check_saddle, check_saddle_escape_only),
}


def run_suite(name, quick=False):
    if name == "all":
        return [r for key in SUITES for r in run_suite(key, quick)]
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; expected one of {sorted(SUITES) + ['all']}")
    results = []
    for fn in SUITES[name]:
        if quick and fn in (check_grad_unbiased, check_hvp_unbiased):
            results.append(fn(n=20_000))
        elif quick and fn is check_oracle:
            results.append(fn(instances=20, probes=10_000))
        else:
            results.append(fn())
    return results


def summary_json(results):
    return dumps({
        "passed": all(r.passed for r in results),
        "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail, "seconds": r.seconds}
                   for r in results],
    }) + "\n"
