"""Experiment configuration: TOML in, validated objects out.

A config has top-level run settings plus three tables::

    seeds = [1, 2, 3]
    probe_budget = 60000

    [env]
    kind = "gridworld"

    [policy]
    family = "softmax-tabular"

    [algorithm]
    name = "vrscp"
    preset = "walker"
    eps = 0.01

Every key is checked against a schema; unknown keys and wrong types are
errors that name the offending field path.  :meth:`ExperimentConfig.canonical`
resolves presets and defaults, so the hash only moves when behaviour does.
"""

import copy
import hashlib
import json
from dataclasses import MISSING, dataclass, field, fields

import tomli
import tomli_w

from .baselines import BaselineConfig
from .driver import HyperParams
from .env import gridworld, linear_gaussian, random_mdp
from .errors import ConfigError
from .policy import make_policy
from .sources import TrajectorySource

# Per-environment VR-SCP (L, rho, Q) and REINFORCE step sizes from the
# reference hyper-parameter table, keyed by the original task names.
PRESETS = {
    "reacher": {"L": 200.0, "rho": 200.0, "Q": 10, "step_size": 0.01},
    "walker": {"L": 50.0, "rho": 50.0, "Q": 2, "step_size": 0.01},
    "humanoid": {"L": 400.0, "rho": 50.0, "Q": 5, "step_size": 0.001},
    "hopper": {"L": 100.0, "rho": 50.0, "Q": 2, "step_size": 0.001},
}

# Desk-scale stand-ins for the original tasks.
PRESET_ENVS = {
    "reacher": {"kind": "linear-gaussian", "state_dim": 2, "horizon": 20},
    "walker": {"kind": "gridworld", "size": 5, "horizon": 15},
    "humanoid": {"kind": "linear-gaussian", "state_dim": 4, "horizon": 20},
    "hopper": {"kind": "random-mdp", "n_states": 5, "n_actions": 2, "horizon": 5},
}

_NUM = (int, float)

ENV_SCHEMA = {
    "gridworld": {"size": (int, 5), "horizon": (int, 15), "gamma": (_NUM, 0.99),
                  "goal_reward": (_NUM, 1.0), "step_penalty": (_NUM, -0.01), "slip": (_NUM, 0.0)},
    "random-mdp": {"n_states": (int, 5), "n_actions": (int, 2), "horizon": (int, 5),
                   "gamma": (_NUM, 0.9), "seed": (int, 0), "concentration": (_NUM, 1.0)},
    "linear-gaussian": {"state_dim": (int, 2), "horizon": (int, 10), "gamma": (_NUM, 0.9),
                        "noise_std": (_NUM, 0.1), "init_std": (_NUM, 0.5),
                        "state_cost": (_NUM, 1.0), "action_cost": (_NUM, 0.1),
                        "state_bound": (_NUM, 2.0), "action_bound": (_NUM, 2.0)},
}

POLICY_SCHEMA = {"family": (str, None), "sigma": (_NUM, 1.0), "hidden": (list, [8, 8]),
                 "features": (str, "identity")}

_HP_SKIP = {"seed", "probe_budget"}


def _schema_of(cls):
    out = {}
    for f in fields(cls):
        if f.name in _HP_SKIP:
            continue
        types = (int,) if f.type in (int, int | None) else _NUM
        out[f.name] = (types, None if f.default is MISSING else f.default)
    return out


_CUBIC_SCHEMA = _schema_of(HyperParams)
_REINFORCE_SCHEMA = _schema_of(BaselineConfig)
ALGO_SCHEMA = {"vrscp": _CUBIC_SCHEMA, "scrn": _CUBIC_SCHEMA, "reinforce": _REINFORCE_SCHEMA}

TOP_SCHEMA = {"seeds": (list, [0]), "probe_budget": ((int, type(None)), None),
              "out_dir": (str, "runs"), "grid_step": ((int, type(None)), None),
              "confidence": (_NUM, 0.95), "workers": (int, 1)}

# Fields that change where or how fast a run executes, not what it computes.
NON_SEMANTIC = ("out_dir", "workers")


def _type_ok(value, types):
    if not isinstance(types, tuple):
        types = (types,)
    if isinstance(value, bool):
        return bool in types
    return isinstance(value, types)


def _check_table(table, schema, path):
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: expected a table")
    out = {}
    for key, value in table.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{where}: unknown key")
        types, _ = schema[key]
        if value is not None and not _type_ok(value, types):
            raise ConfigError(f"{where}: wrong type {type(value).__name__}")
        if types is _NUM and isinstance(value, int):
            value = float(value)  # 1 and 1.0 mean the same thing
        out[key] = value
    return out


def _defaults(schema, given):
    merged = {k: copy.deepcopy(d) for k, (_, d) in schema.items() if d is not None}
    merged.update(given)
    return merged


@dataclass
class ExperimentConfig:
    env: dict
    policy: dict
    algorithm: dict
    seeds: list = field(default_factory=lambda: [0])
    probe_budget: int | None = None
    out_dir: str = "runs"
    grid_step: int | None = None
    confidence: float = 0.95
    workers: int = 1

    # construction ------------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        blocks = {}
        for name in ("env", "policy", "algorithm"):
            if name not in data:
                raise ConfigError(f"{name}: missing table")
            blocks[name] = data.pop(name)
        top = _defaults(TOP_SCHEMA, _check_table(data, TOP_SCHEMA, ""))

        env = dict(blocks["env"]) if isinstance(blocks["env"], dict) else blocks["env"]
        if not isinstance(env, dict) or "kind" not in env:
            raise ConfigError("env.kind: missing")
        kind = env.pop("kind")
        if kind not in ENV_SCHEMA:
            raise ConfigError(f"env.kind: unknown environment {kind!r}")
        env = {"kind": kind, **_defaults(ENV_SCHEMA[kind], _check_table(env, ENV_SCHEMA[kind], "env"))}

        pol = _check_table(blocks["policy"], POLICY_SCHEMA, "policy")
        if "family" not in pol:
            raise ConfigError("policy.family: missing")
        pol = _defaults(POLICY_SCHEMA, pol)

        algo = blocks["algorithm"]
        if not isinstance(algo, dict) or "name" not in algo:
            raise ConfigError("algorithm.name: missing")
        algo = dict(algo)
        name = algo.pop("name")
        if name not in ALGO_SCHEMA:
            raise ConfigError(f"algorithm.name: unknown algorithm {name!r}")
        preset = algo.pop("preset", None)
        baseline = algo.pop("baseline", "off")
        schema = ALGO_SCHEMA[name]
        algo = _check_table(algo, schema, "algorithm")
        resolved = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"algorithm.preset: unknown preset {preset!r}")
            resolved = {k: v for k, v in PRESETS[preset].items() if k in schema}
        resolved.update(algo)
        algo = {"name": name, "baseline": baseline, **_defaults(schema, resolved)}
        for k in schema:
            algo.setdefault(k, None)
        cfg = cls(env, pol, algo, **top)
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, text):
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"parse error: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            return cls.from_toml(text)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    # validation and objects --------------------------------------------------

    def validate(self):
        if not self.seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                                     for s in self.seeds):
            raise ConfigError("seeds: expected a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: duplicate seed")
        if self.probe_budget is not None and self.probe_budget < 1:
            raise ConfigError("probe_budget: must be positive")
        if self.grid_step is not None and self.grid_step < 1:
            raise ConfigError("grid_step: must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence: must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")
        if self.algorithm["baseline"] not in ("off", "per-step-batch-mean"):
            raise ConfigError("algorithm.baseline: expected 'off' or 'per-step-batch-mean'")
        hidden = self.policy["hidden"]
        if not all(isinstance(h, int) and h > 0 for h in hidden):
            raise ConfigError("policy.hidden: expected positive integers")
        # building the objects surfaces cross-field errors before any sampling
        try:
            self.source()
        except ConfigError as exc:
            raise ConfigError(f"env/policy: {exc}") from None
        try:
            self.algorithm_params(self.seeds[0])
        except ConfigError as exc:
            raise ConfigError(f"algorithm: {exc}") from None

    def build_env(self):
        kw = {k: v for k, v in self.env.items() if k != "kind"}
        kind = self.env["kind"]
        if kind == "gridworld":
            return gridworld(**kw)
        if kind == "random-mdp":
            return random_mdp(**kw)
        return linear_gaussian(**kw)

    def source(self):
        mdp = self.build_env()
        pol = make_policy(self.policy["family"], mdp, sigma=self.policy["sigma"],
                          hidden=tuple(self.policy["hidden"]), features=self.policy["features"])
        return TrajectorySource(mdp, pol, baseline=self.algorithm["baseline"])

    def algorithm_params(self, seed):
        name = self.algorithm["name"]
        kw = {k: v for k, v in self.algorithm.items() if k not in ("name", "baseline")}
        cls = BaselineConfig if name == "reinforce" else HyperParams
        missing = [k for k, (_, d) in ALGO_SCHEMA[name].items() if d is None and kw.get(k) is None
                   and k not in ("M", "Q", "T_sub")]
        if missing:
            raise ConfigError(f"missing required field(s) {', '.join(missing)}")
        return cls(seed=seed, probe_budget=self.probe_budget, **kw)

    # serialisation -----------------------------------------------------------

    def to_dict(self):
        out = {k: getattr(self, k) for k in TOP_SCHEMA}
        out["env"] = dict(self.env)
        out["policy"] = dict(self.policy)
        out["algorithm"] = dict(self.algorithm)
        return out

    def to_toml(self):
        def strip(d):
            return {k: (strip(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}
        return tomli_w.dumps(strip(self.to_dict()))

    def canonical(self):
        d = self.to_dict()
        for k in NON_SEMANTIC:
            d.pop(k)
        return d

    def config_hash(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def preset_config(name, algorithm="vrscp", **overrides):
    """A ready-to-run config for one of the shipped presets."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    env = dict(PRESET_ENVS[name])
    family = "softmax-tabular" if env["kind"] != "linear-gaussian" else "gaussian-linear"
    algo = {"name": algorithm, "preset": name, "T": 100}
    if algorithm != "reinforce":
        algo["eps"] = 0.01  # the table leaves the target accuracy open
    data = {"env": env, "policy": {"family": family}, "algorithm": algo}
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
