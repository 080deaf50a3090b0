"""Run configuration: one dataclass tree, JSON round-trip, strict validation.

Validation reports the first offending field by name; the CLI maps that to
exit code 2.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .policy import PPOConfig
from .sensor import SensorParams


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


# theta layouts; priors are stored in this order
PARAM_NAMES_2D = ("x", "y", "q", "ux", "uy", "alpha", "lam")
PARAM_NAMES_3D = ("x", "y", "z", "q", "ux", "uy", "uz", "alpha", "lam")

DEFAULT_PRIORS_2D = {
    "x": [5.0, 20.0],
    "y": [10.0, 20.0],
    "q": [10.0, 3000.0],
    "ux": [0.0, 6.0],
    "uy": [0.0, 6.0],
    "alpha": [1.0, 5.0],
    "lam": [0.0, 8.0],
}

DEFAULT_PRIORS_3D = {
    "x": [5.0, 20.0],
    "y": [10.0, 20.0],
    "z": [1.0, 10.0],
    "q": [10.0, 3000.0],
    "ux": [0.0, 6.0],
    "uy": [0.0, 6.0],
    "uz": [-1.0, 1.0],
    "alpha": [1.0, 5.0],
    "lam": [0.0, 8.0],
}

# lower bound floor applied to the decay length so every draw is physical
LAM_FLOOR = 1e-6


@dataclass
class RunConfig:
    dim: int = 2
    seed: int = 0
    episodes: int = 100           # episode count for eval-style runs
    total_steps: int = 100000     # environment-step budget for train
    horizon: int = 100
    l_step: float = 1.0
    n_particles: int = 200
    tau_ess: float = 0.5
    zeta: float = 0.05
    start_box: list = field(default_factory=lambda: [[0.0, 5.0], [0.0, 5.0]])
    domain: list = field(default_factory=lambda: [[0.0, 30.0], [0.0, 30.0]])
    priors: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_PRIORS_2D.items()})
    sensor: SensorParams = field(default_factory=SensorParams)
    # teacher rejuvenation
    mh_step: float = 0.5
    mh_moves: int = 1
    mh_full_cov: bool = False
    # reward shaping
    reward_mode: str = "kl"       # kl | hard | mixed | curriculum
    clip_window: int = 1000
    clip_q: float = 0.99
    # student
    student_window: int = 8
    student_hidden: int = 128
    student_lr: float = 1e-3
    # policy
    ppo: PPOConfig = field(default_factory=PPOConfig)
    stop_source: str = "teacher"  # belief judging the certificate during training/eval
    # ablation switches (one per studied variant)
    reward_from_student: bool = False
    pf_at_test: bool = False
    student_only: bool = False
    no_spread_feature: bool = False
    no_spread_stop: bool = False
    no_mh: bool = False

    # ----- derived helpers -----

    @property
    def param_names(self):
        return PARAM_NAMES_2D if self.dim == 2 else PARAM_NAMES_3D

    @property
    def theta_dim(self) -> int:
        return len(self.param_names)

    @property
    def loc_idx(self):
        return tuple(range(self.dim))

    def prior_bounds(self):
        """(lows, highs) in theta order with the lam floor applied."""
        lows, highs = [], []
        for name in self.param_names:
            lo, hi = self.priors[name]
            if name == "lam":
                lo = max(lo, LAM_FLOOR)
            lows.append(lo)
            highs.append(hi)
        return lows, highs

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_config(dim: int = 2, **overrides) -> RunConfig:
    """RunConfig with dimension-consistent defaults, then field overrides."""
    base = {"dim": dim}
    if dim == 3:
        base = {
            "dim": 3,
            "priors": {k: list(v) for k, v in DEFAULT_PRIORS_3D.items()},
            "start_box": [[0.0, 5.0], [0.0, 5.0], [1.0, 3.0]],
            "domain": [[0.0, 30.0], [0.0, 30.0], [0.0, 15.0]],
        }
    base.update(overrides)
    cfg = RunConfig(**base)
    validate(cfg)
    return cfg


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for k in d:
        if k not in known:
            raise ConfigError(k, "unknown config field")
    if "sensor" in d and isinstance(d["sensor"], dict):
        extra = set(d["sensor"]) - {f.name for f in dataclasses.fields(SensorParams)}
        if extra:
            raise ConfigError(f"sensor.{sorted(extra)[0]}", "unknown sensor field")
        try:
            d["sensor"] = SensorParams(**d["sensor"])
        except ValueError as e:
            raise ConfigError("sensor", str(e))
    if "ppo" in d and isinstance(d["ppo"], dict):
        extra = set(d["ppo"]) - {f.name for f in dataclasses.fields(PPOConfig)}
        if extra:
            raise ConfigError(f"ppo.{sorted(extra)[0]}", "unknown ppo field")
        d["ppo"] = PPOConfig(**d["ppo"])
    cfg = RunConfig(**d)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"invalid JSON: {e}")
    if not isinstance(d, dict):
        raise ConfigError("<file>", "config root must be an object")
    return config_from_dict(d)


def validate(cfg: RunConfig):
    """Raise ConfigError naming the first offending field."""
    if cfg.dim not in (2, 3):
        raise ConfigError("dim", "must be 2 or 3")
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed", "must be an integer")
    if cfg.episodes < 1:
        raise ConfigError("episodes", "must be >= 1")
    if cfg.total_steps < 1:
        raise ConfigError("total_steps", "must be >= 1")
    if cfg.horizon < 1:
        raise ConfigError("horizon", "must be >= 1")
    if cfg.l_step <= 0:
        raise ConfigError("l_step", "must be > 0")
    if cfg.n_particles < 2:
        raise ConfigError("n_particles", "must be >= 2")
    if not 0.0 < cfg.tau_ess <= 1.0:
        raise ConfigError("tau_ess", "must lie in (0, 1]")
    if not cfg.zeta > 0.0 or not math.isfinite(cfg.zeta):
        raise ConfigError("zeta", "must be a finite positive number")
    for box_name, box in (("start_box", cfg.start_box), ("domain", cfg.domain)):
        if len(box) != cfg.dim:
            raise ConfigError(box_name, f"needs {cfg.dim} [low, high] pairs")
        for pair in box:
            if len(pair) != 2 or not pair[0] < pair[1]:
                raise ConfigError(box_name, "each pair must satisfy low < high")
    names = cfg.param_names
    for name in names:
        if name not in cfg.priors:
            raise ConfigError(f"priors.{name}", "missing prior interval")
        lo, hi = cfg.priors[name]
        if not lo < hi:
            raise ConfigError(f"priors.{name}", "must satisfy low < high")
    for name in cfg.priors:
        if name not in names:
            raise ConfigError(f"priors.{name}", f"not a dim={cfg.dim} parameter")
    if cfg.mh_step <= 0:
        raise ConfigError("mh_step", "must be > 0")
    if cfg.mh_moves < 0:
        raise ConfigError("mh_moves", "must be >= 0")
    if cfg.reward_mode not in ("kl", "hard", "mixed", "curriculum"):
        raise ConfigError("reward_mode", "must be one of kl|hard|mixed|curriculum")
    if cfg.clip_window < 1:
        raise ConfigError("clip_window", "must be >= 1")
    if not 0.0 < cfg.clip_q <= 1.0:
        raise ConfigError("clip_q", "must lie in (0, 1]")
    if cfg.student_window < 1:
        raise ConfigError("student_window", "must be >= 1")
    if cfg.student_hidden < 1:
        raise ConfigError("student_hidden", "must be >= 1")
    if cfg.student_lr <= 0:
        raise ConfigError("student_lr", "must be > 0")
    p = cfg.ppo
    if not 0.0 <= p.gamma <= 1.0:
        raise ConfigError("ppo.gamma", "must lie in [0, 1]")
    if not 0.0 <= p.lam <= 1.0:
        raise ConfigError("ppo.lam", "must lie in [0, 1]")
    if p.eps_clip <= 0:
        raise ConfigError("ppo.eps_clip", "must be > 0")
    if p.epochs < 1:
        raise ConfigError("ppo.epochs", "must be >= 1")
    if p.minibatch < 1:
        raise ConfigError("ppo.minibatch", "must be >= 1")
    if p.rollout_steps < 1:
        raise ConfigError("ppo.rollout_steps", "must be >= 1")
    if p.lr <= 0:
        raise ConfigError("ppo.lr", "must be > 0")
    if cfg.stop_source not in ("teacher", "student"):
        raise ConfigError("stop_source", "must be teacher or student")
    if cfg.student_only and cfg.pf_at_test:
        raise ConfigError("pf_at_test", "incompatible with student_only")
    return cfg
