"""Reference optimisers that share sources, streams and the record schema.

``reinforce_run`` ascends along fresh batch-mean gradients with a fixed step.
``scrn_run`` is the cubic driver without the recursion: a fresh checkpoint
batch every iteration.
"""

from dataclasses import dataclass

import numpy as np

from . import streams
from .driver import final_mu, scrn_run
from .errors import ConfigError, NumericError
from .policy import init_params
from .records import RunRecord


@dataclass(frozen=True)
class BaselineConfig:
    step_size: float
    batch: int = 10
    T: int = 100
    seed: int = 0
    eval_batch: int = 20
    probe_budget: int | None = None
    init_scale: float = 0.1
    rho: float = 1.0  # only used for the final stationarity diagnostic

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if self.batch < 1 or self.eval_batch < 1:
            raise ConfigError("batch sizes must be at least 1")
        if self.T < 0:
            raise ConfigError("T must be non-negative")
        if self.probe_budget is not None and self.probe_budget < 1:
            raise ConfigError("probe_budget must be positive")


def reinforce_run(cfg, source, theta0=None, monitor=None):
    """``theta <- theta + step_size * mean_i grad_estimate(tau_i)`` per iteration."""
    if theta0 is None:
        theta = init_params(source, streams.stream(cfg.seed, streams.INIT), cfg.init_scale)
    else:
        theta = np.array(theta0, dtype=np.float64)
    record = RunRecord("reinforce", cfg.seed)
    probes = trajectories = 0
    reason = "max_iterations" if cfg.T > 0 else "no_iterations"
    for t in range(cfg.T):
        g = source.grad_batch(theta, cfg.batch, cfg.seed, t, purpose=streams.BATCH)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient estimate at iteration {t}")
        h = cfg.step_size * g
        theta = theta + h
        probes += source.horizon * cfg.batch
        trajectories += cfg.batch
        record.rows.append({
            "t": t, "probes": probes,
            "eval_return": source.evaluate(theta, cfg.eval_batch, cfg.seed, t),
            "delta_m": None, "h_norm": float(np.linalg.norm(h)), "S_t": 0,
            "branch": "gradient", "checkpoint": True, "grad_trajectories": cfg.batch,
        })
        if monitor is not None:
            monitor(t, theta, g)
        if cfg.probe_budget is not None and probes >= cfg.probe_budget:
            reason = "probe_budget"
            break
    record.theta = theta
    record.summary = {
        "termination": reason,
        "iterations": len(record.rows),
        "total_probes": probes,
        "total_trajectories": trajectories,
        "final_mu": final_mu(source, theta, cfg),
    }
    return record


__all__ = ["BaselineConfig", "reinforce_run", "scrn_run"]
