"""Experiment dispatch, deterministic seeding, and CSV emission.

Every experiment is a grid of independent cells. Cell randomness derives
from ``SeedSequence([seed, tag, index, ...])`` so results never depend on
execution order or thread count; per-sample streams are shared across
samplers of the same cell so method comparisons run on matched draws.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import donut as dn
from . import maze as mz
from .baselines import (
    conditional_generate,
    gibbs_sample,
    gradient_guided_sample,
    projection_guided_sample,
    sequential_sample,
)
from .config import ExperimentConfig, scale_config
from .gmm import CleanEstimateConfig
from .sampler import jm2d_sample

_DEMO_TAG = 101
_EPISODE_TAG = 202
_SAMPLE_TAG = 303
_REFERENCE_TAG = 404


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sampler: str
    params: tuple       # sorted (key, value) pairs
    seed: int
    metric: str
    value: float

    @property
    def param_json(self) -> str:
        return json.dumps(dict(self.params), sort_keys=True, separators=(",", ":"))


def _row(experiment, sampler, params: dict, seed, metric, value) -> ResultRow:
    items = tuple(sorted((str(k), v) for k, v in params.items()))
    return ResultRow(experiment, sampler, items, int(seed), metric, float(value))


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def emit_results(rows, path) -> None:
    """Write rows as CSV with a fixed header, sorted for diffability."""
    ordered = sorted(rows, key=lambda r: (r.experiment, r.sampler, r.seed,
                                          r.metric, r.param_json))
    try:
        with open(path, "w", newline="") as fh:
            fh.write("experiment,sampler,param_json,seed,metric,value\n")
            for r in ordered:
                fh.write(f"{r.experiment},{r.sampler},\"{r.param_json}\","
                         f"{r.seed},{r.metric},{_fmt(r.value)}\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


# ---------------------------------------------------------------------------
# Donut cells
# ---------------------------------------------------------------------------

def _donut_joint_cell(cfg: ExperimentConfig, sampler: str, seed: int):
    d = cfg.donut
    ring = dn.DonutSpec(r_inner=d.r_inner, r_outer=d.r_outer,
                        ring_components=d.ring_components)
    r_obs = d.obstacle_radius
    spec = dn.JointToySpec(
        ring,
        obstacles=(((ring.r_mid, 0.0), r_obs), ((-ring.r_mid, 0.0), r_obs),
                   ((0.0, ring.r_mid), r_obs), ((0.0, -ring.r_mid), r_obs)),
    )
    model = dn.joint_donut_prior(spec.donut)
    pot = dn.joint_toy_potential(spec, temperature=cfg.sampler.temperature)
    prior = spec.k_prior()
    jcfg = cfg.jm2d_config()
    compatible = 0
    for idx in range(d.samples_per_seed):
        rng = _rng(seed, _SAMPLE_TAG, idx)
        if sampler == "jm2d":
            x0, k0, _ = jm2d_sample(model, pot, prior, jcfg, rng)
        elif sampler == "sequential":
            res = sequential_sample(model, pot, prior, jcfg, rng)
            x0, k0 = res.x, res.k
        elif sampler == "gibbs":
            res = gibbs_sample(model, pot, prior, jcfg,
                               cfg.sampler.gibbs_rounds, rng)
            x0, k0 = res.x, res.k
        else:
            raise ValueError(f"unknown joint sampler: {sampler!r}")
        if float(pot.constraint(k0, x0)) <= 0.0:
            compatible += 1
    frac = compatible / d.samples_per_seed
    return [_row("donut_joint", sampler, {}, seed, "compatible_fraction", frac)]


def _cg_draw(sampler, spec, model, cfg: ExperimentConfig, jcfg, rng):
    if sampler == "cg":
        def vx(X):
            return (dn.cg_constraint(spec, X) <= 0.0).astype(float)
        return conditional_generate(model, vx, jcfg, rng)
    if sampler == "projection":
        return projection_guided_sample(
            model, lambda x: dn.cg_projection(spec, x), jcfg, rng)
    if sampler == "gradient":
        return gradient_guided_sample(
            model, dn.cg_cost(spec), cfg.donut.guidance_weight, jcfg, rng)
    raise ValueError(f"unknown cg sampler: {sampler!r}")


def _donut_cg_cell(cfg: ExperimentConfig, sampler: str, seed: int,
                   jcfg=None, params=None, experiment="donut_cg"):
    d = cfg.donut
    ring = dn.DonutSpec(r_inner=d.r_inner, r_outer=d.r_outer,
                        ring_components=d.ring_components)
    spec = dn.CGToySpec(
        ring,
        ring_disc_center=np.array([ring.r_mid, 0.0]),
        ring_disc_radius=d.ring_disc_radius,
        hole_disc_radius=d.hole_disc_radius,
    )
    model = dn.donut_prior(spec.donut)
    jcfg = jcfg or cfg.jm2d_config()
    params = params or {}
    # ground truth for the constrained target: prior draws restricted to
    # the feasible set (exact rejection sampling)
    ref_rng = _rng(seed, _REFERENCE_TAG)
    kept = []
    for _ in range(200):
        draws = model.sample(4096, ref_rng)
        kept.append(draws[dn.cg_constraint(spec, draws) <= 0.0])
        if sum(len(k) for k in kept) >= 2048:
            break
    reference = np.vstack(kept)[:2048]
    samples = np.array([
        _cg_draw(sampler, spec, model, cfg, jcfg, _rng(seed, _SAMPLE_TAG, idx))
        for idx in range(d.cg_samples_per_seed)
    ])
    metrics = dn.generation_metrics(
        samples, spec.donut, lambda X: dn.cg_constraint(spec, X), reference)
    radii = np.linalg.norm(samples - spec.donut.center, axis=-1)
    lo = spec.donut.r_inner - spec.donut.band_tolerance
    hi = spec.donut.r_outer + spec.donut.band_tolerance
    feasible = dn.cg_constraint(spec, samples) <= 0.0
    ood = float(np.mean(feasible & ~((radii >= lo) & (radii <= hi))))
    return [
        _row(experiment, sampler, params, seed, "ca", metrics.ca),
        _row(experiment, sampler, params, seed, "band_fraction", metrics.band_fraction),
        _row(experiment, sampler, params, seed, "chamfer", metrics.chamfer),
        _row(experiment, sampler, params, seed, "feasible_in_band",
             metrics.feasible_in_band),
        _row(experiment, sampler, params, seed, "ood_fraction", ood),
    ]


def _ablation_u_cells(cfg: ExperimentConfig):
    cells = []
    for seed in cfg.seeds:
        for u in cfg.donut.u_grid:
            clean = (CleanEstimateConfig("tweedie_only") if u == 0
                     else CleanEstimateConfig("u_step", u=u))
            jcfg = replace(cfg.jm2d_config(), clean=clean)
            cells.append((_donut_cg_cell, (cfg, "cg", seed, jcfg, {"u": u},
                                           "ablation_u")))
        jcfg = replace(cfg.jm2d_config(), clean=CleanEstimateConfig("full"))
        cells.append((_donut_cg_cell, (cfg, "cg", seed, jcfg, {"u": "full"},
                                       "ablation_u")))
    return cells


# ---------------------------------------------------------------------------
# Maze cells
# ---------------------------------------------------------------------------

def _maze_cell(cfg: ExperimentConfig, sampler: str, seed: int, w: float,
               variant: str, demos, jcfg=None, params=None,
               experiment="maze_sweep"):
    maze = mz.default_maze()
    jcfg = jcfg or cfg.jm2d_config()
    settings = mz.EpisodeSettings(kde_radius=cfg.maze.kde_radius,
                                  gibbs_rounds=cfg.sampler.gibbs_rounds)
    episodes = [
        mz.run_episode(maze, w, sampler, jcfg, variant,
                       np.random.SeedSequence([seed, _EPISODE_TAG, ep]),
                       demos, settings)
        for ep in range(cfg.maze.episodes_per_cell)
    ]
    base = dict(params or {})
    base["w"] = w
    base["variant"] = variant
    out = []
    for metric, values in (
        ("safe_success", [float(e.safe_success) for e in episodes]),
        ("collided", [float(e.collided) for e in episodes]),
        ("task_horizon", [float(e.task_horizon) for e in episodes]),
        ("intervention_rate", [e.intervention_rate for e in episodes]),
    ):
        out.append(_row(experiment, sampler, base, seed, metric,
                        float(np.mean(values))))
    out.append(_row(experiment, sampler, base, seed, "episodes",
                    len(episodes)))
    return out


def _maze_demos(cfg: ExperimentConfig, seed: int):
    maze = mz.default_maze()
    return mz.generate_demos(maze, cfg.maze.demo_count,
                             _rng(seed, _DEMO_TAG), skew=cfg.maze.demo_skew)


def _maze_sweep_cells(cfg: ExperimentConfig):
    cells = []
    for seed in cfg.seeds:
        demos = _maze_demos(cfg, seed)
        for w in cfg.maze.wall_padding:
            for sampler in cfg.samplers:
                cells.append((_maze_cell, (cfg, sampler, seed, w,
                                           cfg.maze.variant, demos)))
    return cells


def _ablation_nk_cells(cfg: ExperimentConfig):
    w = max(cfg.maze.wall_padding)
    cells = []
    for seed in cfg.seeds:
        demos = _maze_demos(cfg, seed)
        for n in cfg.maze.nk_grid:
            jcfg = replace(cfg.jm2d_config(), n_x=n, n_k=n)
            cells.append((_maze_cell, (cfg, "jm2d", seed, w, cfg.maze.variant,
                                       demos, jcfg, {"n": n}, "ablation_nk")))
    return cells


def _ablation_backup_cells(cfg: ExperimentConfig):
    w = max(cfg.maze.wall_padding)
    cells = []
    for seed in cfg.seeds:
        demos = _maze_demos(cfg, seed)
        for variant in mz.VARIANTS:
            for sampler in ("jm2d", "sequential"):
                cells.append((_maze_cell, (cfg, sampler, seed, w, variant,
                                           demos, None, {}, "ablation_backup")))
    return cells


# ---------------------------------------------------------------------------
# Oracle suite
# ---------------------------------------------------------------------------

def _oracle_cells(cfg: ExperimentConfig):
    from .oracles import run_oracle_checks

    def cell():
        rows = []
        for name, passed, value in run_oracle_checks(cfg.seeds[0]):
            rows.append(_row("oracle_suite", "oracle", {}, cfg.seeds[0],
                             f"{name}_value", value))
            rows.append(_row("oracle_suite", "oracle", {}, cfg.seeds[0],
                             f"{name}_pass", float(passed)))
        return rows

    return [(lambda c=cell: c(), ())]


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _build_cells(cfg: ExperimentConfig):
    if cfg.experiment == "donut_joint":
        return [(_donut_joint_cell, (cfg, sampler, seed))
                for seed in cfg.seeds for sampler in cfg.samplers]
    if cfg.experiment == "donut_cg":
        return [(_donut_cg_cell, (cfg, sampler, seed))
                for seed in cfg.seeds for sampler in cfg.samplers]
    if cfg.experiment == "maze_sweep":
        return _maze_sweep_cells(cfg)
    if cfg.experiment == "ablation_u":
        return _ablation_u_cells(cfg)
    if cfg.experiment == "ablation_nk":
        return _ablation_nk_cells(cfg)
    if cfg.experiment == "ablation_backup":
        return _ablation_backup_cells(cfg)
    if cfg.experiment == "oracle_suite":
        return _oracle_cells(cfg)
    raise ValueError(f"unknown experiment: {cfg.experiment!r}")


def run_experiment(cfg: ExperimentConfig, budget_scale: float = 1.0,
                   threads: int = 1):
    """Run every cell of the experiment grid; returns sorted result rows."""
    cfg = scale_config(cfg, budget_scale)
    cells = _build_cells(cfg)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda fa: fa[0](*fa[1]), cells))
    else:
        chunks = [fn(*args) for fn, args in cells]
    rows = [row for chunk in chunks for row in chunk]
    return sorted(rows, key=lambda r: (r.experiment, r.sampler, r.seed,
                                       r.metric, r.param_json))
