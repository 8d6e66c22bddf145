"""Run records and their JSON-lines serialisation.

One JSON object per iteration, then a final ``{"summary": {...}}`` line.
Floats are written with 17 significant digits so a round trip is exact.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ROW_FIELDS = ("t", "probes", "eval_return", "delta_m", "h_norm", "S_t", "branch",
              "checkpoint", "grad_trajectories")


def _fmt(x):
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise ConfigError(f"cannot serialise non-finite value {x}")
        s = format(x, ".17g")
        if "e" not in s and "." not in s and "n" not in s:
            s += ".0"
        return s
    if isinstance(x, str):
        import json
        return json.dumps(x, ensure_ascii=False)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise ConfigError(f"cannot serialise {type(x).__name__}")


def dumps(obj):
    """JSON text with 17-significant-digit floats; key order preserved."""
    return _fmt(obj)


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    theta: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def probes(self):
        return np.array([r["probes"] for r in self.rows], dtype=np.int64)

    @property
    def returns(self):
        return np.array([r["eval_return"] for r in self.rows], dtype=np.float64)

    def validate(self):
        p = self.probes
        if p.size and np.any(np.diff(p) <= 0):
            raise ConfigError(f"seed {self.seed}: probe grid is not strictly increasing")
        if not np.all(np.isfinite(self.returns)):
            raise ConfigError(f"seed {self.seed}: non-finite evaluation return")

    def to_jsonl(self):
        lines = [dumps({k: r.get(k) for k in ROW_FIELDS}) for r in self.rows]
        summary = {"algorithm": self.algorithm, "seed": int(self.seed), **self.summary}
        lines.append(dumps({"summary": summary}))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path):
        import json
        rows, summary = [], None
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{n}: {exc}") from None
                if "summary" in obj:
                    summary = obj["summary"]
                else:
                    rows.append(obj)
        if summary is None:
            raise ConfigError(f"{path}: missing summary line")
        summary = dict(summary)
        rec = cls(summary.pop("algorithm"), int(summary.pop("seed")), rows, summary)
        rec.validate()
        return rec
