"""Multi-seed aggregation: aligned return curves, LCI and the PR score.

``PR = (1/K) sum_k LCI(t_k)`` over a uniform probe grid ``t_k``, where
``LCI = mean - z * std / sqrt(n)`` across seeds.  Curves are aligned by
carrying each run's most recent logged return forward.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConfigError
from .records import dumps


def z_value(confidence):
    """Two-sided normal quantile; ``z_value(0.95) = 1.959964...``."""
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence}")
    return float(norm.ppf(0.5 + confidence / 2.0))


def probe_grid(T, grid_step):
    if grid_step < 1:
        raise ConfigError("grid_step must be a positive integer")
    if T < grid_step:
        raise ConfigError(f"horizon T={T} is shorter than one grid step ({grid_step})")
    return np.arange(grid_step, T + 1, grid_step, dtype=np.int64)


TERMINAL = ("finalsolver", "finalsolver_cap")


def converged(record):
    """Runs stopped by the finalsolver keep their final policy indefinitely."""
    return record.summary.get("termination") in TERMINAL


def common_horizon(records, extend_converged=True):
    """Largest probe count every (non-converged) record reaches."""
    if not records:
        raise ConfigError("no records")
    ends, done = [], []
    for r in records:
        if not r.rows:
            raise ConfigError(f"seed {r.seed}: record has no observations")
        (done if extend_converged and converged(r) else ends).append(int(r.probes[-1]))
    return min(ends) if ends else max(done)


def align_runs(records, T, grid_step, extend_converged=True):
    """Matrix ``(n, T // grid_step)`` of carried-forward returns.

    With ``extend_converged`` a run that ended in the finalsolver may stop
    short of ``T``; its last return is carried to the end of the grid.
    """
    grid = probe_grid(T, grid_step)
    out = np.empty((len(records), grid.size))
    for i, rec in enumerate(records):
        rec.validate()
        p, ret = rec.probes, rec.returns
        if p.size == 0 or p[0] > grid[0]:
            raise ConfigError(f"seed {rec.seed}: no observation at or before probe {grid[0]}")
        if p[-1] < T and not (extend_converged and converged(rec)):
            raise ConfigError(f"seed {rec.seed}: run ends at probe {p[-1]} < T={T}")
        out[i] = ret[np.searchsorted(p, grid, side="right") - 1]
    return out


def lci(values, confidence=0.95):
    """``mean - z * std(ddof=1) / sqrt(n)``."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ConfigError("LCI needs at least two values")
    # shift by the first value so constant inputs return it exactly, and
    # scale the deviations so tiny spreads do not underflow to zero std
    mean = x[0] + math.fsum(x - x[0]) / n
    dev = x - mean
    scale = float(np.max(np.abs(dev)))
    if scale == 0.0:
        return float(mean)
    std = scale * math.sqrt(math.fsum((dev / scale) ** 2) / (n - 1))
    return float(mean - z_value(confidence) * std / math.sqrt(n))


@dataclass
class PrReport:
    algorithm: str
    n: int
    T: int
    grid_step: int
    confidence: float
    pr: float
    probes: np.ndarray = field(repr=False)
    lci: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)
    seeds: list = field(default_factory=list)

    def to_json(self):
        return dumps({
            "algorithm": self.algorithm, "n": self.n, "T": self.T, "grid_step": self.grid_step,
            "confidence": self.confidence, "pr": self.pr, "seeds": list(self.seeds),
            "probes": [int(p) for p in self.probes], "lci": list(self.lci),
        }) + "\n"

    def to_csv(self):
        lines = ["probe,lci,mean,std"]
        for row in zip(self.probes, self.lci, self.mean, self.std):
            lines.append(",".join([str(int(row[0]))] + [format(float(x), ".17g") for x in row[1:]]))
        return "\n".join(lines) + "\n"

    def write(self, json_path, csv_path):
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        lc = np.array(d["lci"], dtype=np.float64)
        nan = np.full(lc.shape, np.nan)
        return cls(d["algorithm"], d["n"], d["T"], d["grid_step"], d["confidence"], d["pr"],
                   np.array(d["probes"], dtype=np.int64), lc, nan, nan, d.get("seeds", []))


def pr_metric(records, n=None, T=None, grid_step=None, confidence=0.95, extend_converged=True):
    """PR over ``n`` records sharing one algorithm tag.

    ``T`` defaults to the largest probe count every record reaches and
    ``grid_step`` to the first record's first logged probe count.
    """
    records = list(records)
    if n is not None and len(records) != n:
        raise ConfigError(f"expected exactly {n} records, got {len(records)}")
    tags = {r.algorithm for r in records}
    if len(tags) > 1:
        raise ConfigError(f"records mix algorithm tags {sorted(tags)}; pass a single algorithm")
    if T is None:
        T = common_horizon(records, extend_converged)
    if grid_step is None:
        grid_step = int(records[0].probes[0])
    # sorting by seed makes the result independent of input order
    records = sorted(records, key=lambda r: r.seed)
    X = align_runs(records, T, grid_step, extend_converged)
    z = z_value(confidence)
    nr = X.shape[0]
    if nr < 2:
        raise ConfigError("PR needs at least two runs")
    curve, means, stds = [], [], []
    for col in X.T:
        col = np.sort(col)
        m = math.fsum(col) / nr
        s = math.sqrt(math.fsum((col - m) ** 2) / (nr - 1))
        means.append(m)
        stds.append(s)
        curve.append(m - z * s / math.sqrt(nr))
    curve = np.array(curve)
    return PrReport(tags.pop(), nr, int(T), int(grid_step), float(confidence),
                    math.fsum(curve) / curve.size, probe_grid(T, grid_step), curve,
                    np.array(means), np.array(stds), [r.seed for r in records])
