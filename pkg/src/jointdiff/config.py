"""Line-oriented experiment configuration.

Grammar: blank lines and ``#`` comments are ignored; ``[section]`` opens a
section; every other line is ``key = value``. Keys before any section
header are experiment-level. List values are whitespace-separated. Unknown
keys, duplicate keys and invariant violations are parse errors that name
the offending key. Absent keys fall back to the package defaults
(25 denoising steps, 128 candidates per channel, cosine schedule for the
generative channel, linear for the optimization channel, DDPM
stochasticity).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .gmm import CleanEstimateConfig
from .sampler import JM2DConfig
from .schedules import SCHEDULE_KINDS, StochasticityPolicy, make_schedule

EXPERIMENTS = (
    "donut_joint",
    "donut_cg",
    "maze_sweep",
    "ablation_u",
    "ablation_nk",
    "ablation_backup",
    "oracle_suite",
)

SAMPLERS_BY_EXPERIMENT = {
    "donut_joint": ("jm2d", "gibbs", "sequential"),
    "donut_cg": ("cg", "projection", "gradient"),
    "maze_sweep": ("jm2d", "sequential", "gibbs", "unfiltered"),
    "ablation_u": (),
    "ablation_nk": (),
    "ablation_backup": (),
    "oracle_suite": (),
}

CLEAN_MODES = ("noisy", "tweedie_only", "u_step", "full")
VARIANTS = ("high_quality", "x_plus_y_plus", "x_minus_y_minus")


class ConfigError(ValueError):
    pass


@dataclass
class SamplerSettings:
    steps: int = 25
    n_x: int = 128
    n_k: int = 128
    schedule_x: str = "cosine"
    schedule_k: str = "linear"
    eta: float = 1.0
    clean_mode: str = "full"
    clean_u: int = 5
    temperature: float = 1.0
    postprocess_budget: int = 256
    gibbs_rounds: int = 3
    paired: bool = False


@dataclass
class DonutSettings:
    r_inner: float = 1.5
    r_outer: float = 2.5
    ring_components: int = 16
    ring_disc_radius: float = 0.35
    hole_disc_radius: float = 0.35
    obstacle_radius: float = 0.7
    samples_per_seed: int = 16
    cg_samples_per_seed: int = 64
    guidance_weight: float = 0.1
    u_grid: list = field(default_factory=lambda: [0, 1, 2, 5, 10])


@dataclass
class MazeSettings:
    wall_padding: list = field(default_factory=lambda: [0.0, 0.1, 0.2])
    episodes_per_cell: int = 50
    variant: str = "high_quality"
    demo_count: int = 40
    demo_skew: float = 0.0
    kde_radius: float = 0.5
    nk_grid: list = field(default_factory=lambda: [4, 16, 64, 128])


@dataclass
class ExperimentConfig:
    experiment: str = "oracle_suite"
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    samplers: list = field(default_factory=list)
    out: str = "results.csv"
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    donut: DonutSettings = field(default_factory=DonutSettings)
    maze: MazeSettings = field(default_factory=MazeSettings)

    def clean_config(self) -> CleanEstimateConfig:
        mode = self.sampler.clean_mode
        u = self.sampler.clean_u if mode == "u_step" else 0
        return CleanEstimateConfig(mode=mode, u=u)

    def jm2d_config(self, budget_scale: float = 1.0) -> JM2DConfig:
        s = self.sampler
        return JM2DConfig(
            schedule_x=make_schedule(s.schedule_x, s.steps),
            schedule_k=make_schedule(s.schedule_k, s.steps),
            n_x=_scaled(s.n_x, budget_scale),
            n_k=_scaled(s.n_k, budget_scale),
            clean=self.clean_config(),
            sigma=StochasticityPolicy(s.eta),
            postprocess_budget=s.postprocess_budget,
            paired=s.paired,
        )


def _scaled(n: int, scale: float) -> int:
    return max(1, int(round(n * scale)))


def _as_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {text!r}")


def _as_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {text!r}")


def _as_bool(key, text):
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {text!r}")


def _positive_int(key, text):
    value = _as_int(key, text)
    if value < 1:
        raise ConfigError(f"key {key!r}: must be >= 1, got {value}")
    return value


def _choice(options):
    def cast(key, text):
        if text not in options:
            raise ConfigError(f"key {key!r}: must be one of {options}, got {text!r}")
        return text
    return cast


_TOP_KEYS = {
    "experiment": _choice(EXPERIMENTS),
    "seeds": lambda key, text: [_as_int(key, t) for t in text.split()],
    "samplers": lambda key, text: text.split(),
    "out": lambda key, text: text,
}

_SAMPLER_KEYS = {
    "steps": _positive_int,
    "n_x": _positive_int,
    "n_k": _positive_int,
    "schedule_x": _choice(SCHEDULE_KINDS),
    "schedule_k": _choice(SCHEDULE_KINDS),
    "eta": _as_float,
    "clean_mode": _choice(CLEAN_MODES),
    "clean_u": _positive_int,
    "temperature": _as_float,
    "postprocess_budget": _positive_int,
    "gibbs_rounds": _positive_int,
    "paired": _as_bool,
}

_DONUT_KEYS = {
    "r_inner": _as_float,
    "r_outer": _as_float,
    "ring_components": _positive_int,
    "ring_disc_radius": _as_float,
    "hole_disc_radius": _as_float,
    "obstacle_radius": _as_float,
    "samples_per_seed": _positive_int,
    "cg_samples_per_seed": _positive_int,
    "guidance_weight": _as_float,
    "u_grid": lambda key, text: [_as_int(key, t) for t in text.split()],
}

_MAZE_KEYS = {
    "wall_padding": lambda key, text: [_as_float(key, t) for t in text.split()],
    "episodes_per_cell": _positive_int,
    "variant": _choice(VARIANTS),
    "demo_count": _positive_int,
    "demo_skew": _as_float,
    "kde_radius": _as_float,
    "nk_grid": lambda key, text: [_positive_int(key, t) for t in text.split()],
}

_SECTIONS = {
    "": _TOP_KEYS,
    "sampler": _SAMPLER_KEYS,
    "donut": _DONUT_KEYS,
    "maze": _MAZE_KEYS,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse a config document, applying defaults for absent keys."""
    cfg = ExperimentConfig()
    section = ""
    seen = set()
    targets = {"": cfg, "sampler": cfg.sampler, "donut": cfg.donut, "maze": cfg.maze}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        keys = _SECTIONS[section]
        if key not in keys:
            where = f"section [{section}]" if section else "the top level"
            raise ConfigError(f"line {lineno}: unknown key {key!r} in {where}")
        if (section, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add((section, key))
        setattr(targets[section], key, keys[key](key, value))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if not cfg.seeds:
        raise ConfigError("key 'seeds': at least one seed is required")
    allowed = SAMPLERS_BY_EXPERIMENT[cfg.experiment]
    if not cfg.samplers:
        cfg.samplers = list(allowed)
    for name in cfg.samplers:
        if name not in allowed:
            raise ConfigError(
                f"key 'samplers': {name!r} is not valid for {cfg.experiment} "
                f"(allowed: {allowed})"
            )
    s = cfg.sampler
    if not 0.0 <= s.eta <= 1.0:
        raise ConfigError("key 'eta': must lie in [0, 1]")
    if s.temperature <= 0.0:
        raise ConfigError("key 'temperature': must be positive")
    d = cfg.donut
    if not 0.0 < d.r_inner < d.r_outer:
        raise ConfigError("key 'r_inner': need 0 < r_inner < r_outer")
    if any(u < 0 for u in d.u_grid):
        raise ConfigError("key 'u_grid': entries must be >= 0")
    m = cfg.maze
    if any(w < 0 for w in m.wall_padding):
        raise ConfigError("key 'wall_padding': entries must be >= 0")
    if not -1.0 <= m.demo_skew <= 1.0:
        raise ConfigError("key 'demo_skew': must lie in [-1, 1]")


def scale_config(cfg: ExperimentConfig, budget_scale: float) -> ExperimentConfig:
    """Uniformly scale candidate counts and per-cell episode/sample counts."""
    if budget_scale <= 0.0:
        raise ConfigError("budget scale must be positive")
    if budget_scale == 1.0:
        return cfg
    out = replace(cfg)
    out.sampler = replace(cfg.sampler,
                          n_x=_scaled(cfg.sampler.n_x, budget_scale),
                          n_k=_scaled(cfg.sampler.n_k, budget_scale))
    out.donut = replace(
        cfg.donut,
        samples_per_seed=_scaled(cfg.donut.samples_per_seed, budget_scale),
        cg_samples_per_seed=_scaled(cfg.donut.cg_samples_per_seed, budget_scale),
    )
    out.maze = replace(
        cfg.maze,
        episodes_per_cell=_scaled(cfg.maze.episodes_per_cell, budget_scale),
        nk_grid=list(cfg.maze.nk_grid),
        wall_padding=list(cfg.maze.wall_padding),
    )
    out.seeds = list(cfg.seeds)
    out.samplers = list(cfg.samplers)
    return out
