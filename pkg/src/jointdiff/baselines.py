"""Comparison samplers sharing the diffusion core.

All baselines draw on the same schedules, score model, and reverse step as
the joint sampler, so cross-method differences come only from how guidance
is injected: not at all (sequential), by alternating conditionals (Gibbs),
by potential-weighted candidate averaging on x alone (conditional
generation), by projection of the iterate, or by cost-gradient shifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gmm import GaussianMixtureScoreModel, estimate_clean, gmm_noisy_score, reverse_chain
from .potentials import (
    InteractionPotential,
    ModelBasedPrior,
    PotentialEvaluationError,
    postprocess_optimize,
    potential_matrix,
)
from .sampler import JM2DConfig, SamplerTrace, self_normalized_average
from .schedules import reverse_step, tweedie_score


@dataclass
class BaselineResult:
    x: np.ndarray
    k: np.ndarray | None
    feasible: bool
    iterations: int = 1


def _prior_chain(model, cfg, rng_x):
    """Unconditioned sample from the generative prior via the reverse chain."""
    start = rng_x.standard_normal(model.dim)
    return reverse_chain(model, cfg.schedule_x, cfg.steps, start, cfg.sigma, rng_x)


def sequential_sample(
    model: GaussianMixtureScoreModel,
    pot: InteractionPotential,
    prior: ModelBasedPrior,
    cfg: JM2DConfig,
    rng: np.random.Generator,
) -> BaselineResult:
    """Draw x from the prior, then solve for k afterwards (decoupled)."""
    rng_x, rng_k = rng.spawn(2)
    x0 = _prior_chain(model, cfg, rng_x)
    k0, feasible = postprocess_optimize(pot, prior, x0, rng_k,
                                        budget=cfg.postprocess_budget)
    return BaselineResult(x0, k0, feasible)


def _sample_k_given_x(pot, prior, x, rng, budget):
    """One draw from p(k | x) ~ p(k) V(x, k) by weighted resampling."""
    cands = prior.sample(budget, rng)
    vmat, _, gmat = potential_matrix(pot, np.asarray(x, float)[None, :], cands)
    weights = vmat[0]
    total = weights.sum()
    if total <= 0.0:
        return cands[int(np.argmin(gmat[0]))]
    return cands[rng.choice(budget, p=weights / total)]


def gibbs_sample(
    model: GaussianMixtureScoreModel,
    pot: InteractionPotential,
    prior: ModelBasedPrior,
    cfg: JM2DConfig,
    rounds: int,
    rng: np.random.Generator,
) -> BaselineResult:
    """Alternate k | x (weighted prior resampling) and x | k (guided chain)."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng_x, rng_k = rng.spawn(2)
    x = _prior_chain(model, cfg, rng_x)
    k = None
    for _ in range(rounds):
        k = _sample_k_given_x(pot, prior, x, rng_k, cfg.postprocess_budget)

        def vx(X, k=k):
            vmat, _, _ = potential_matrix(pot, X, k[None, :])
            return vmat[:, 0]

        x = conditional_generate(model, vx, cfg, rng_x)
    gval = float(np.asarray(pot.constraint(k, x)))
    return BaselineResult(x, k, gval <= 0.0, iterations=rounds)


def conditional_generate(
    model: GaussianMixtureScoreModel,
    vx: Callable[[np.ndarray], np.ndarray],
    cfg: JM2DConfig,
    rng: np.random.Generator,
    trace: SamplerTrace | None = None,
) -> np.ndarray:
    """Generation of x guided by an x-only potential.

    This is the joint sampler with the k channel removed: at each level the
    score is the vx-weighted average of the clean candidates' Tweedie
    scores (uniform average when every weight is zero).

    ``vx`` maps an (N, dx) candidate batch to N non-negative weights.
    """
    rng_x = rng.spawn(2)[0]
    x = rng_x.standard_normal(model.dim)
    sched = cfg.schedule_x
    for i in range(cfg.steps, 0, -1):
        X = estimate_clean(model, sched, i, x, cfg.clean, rng_x, n=cfg.n_x)
        weights = np.asarray(vx(X), dtype=float)
        s_x = tweedie_score(X, x[None, :], sched.alphas[i])
        if weights.sum() <= 0.0:
            score = s_x.mean(axis=0)
        else:
            score = self_normalized_average(weights, s_x)
        if trace is not None:
            trace.record(i, x, None, X, None, score, None)
        x = reverse_step(x, score, sched.alphas[i], sched.alphas[i - 1],
                         cfg.sigma.sigma(sched, i), rng_x)
    return x


def projection_guided_sample(
    model: GaussianMixtureScoreModel,
    project: Callable[[np.ndarray], np.ndarray],
    cfg: JM2DConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Unconditioned reverse chain with the iterate projected after each step.

    ``project`` must map any point to the constraint set; it is applied
    after every reverse step including the final one, so the output always
    satisfies the constraint exactly.
    """
    rng_x = rng.spawn(2)[0]
    x = rng_x.standard_normal(model.dim)
    sched = cfg.schedule_x
    for i in range(cfg.steps, 0, -1):
        score = gmm_noisy_score(model, x, sched.alphas[i])
        x = reverse_step(x, score, sched.alphas[i], sched.alphas[i - 1],
                         cfg.sigma.sigma(sched, i), rng_x)
        x = np.asarray(project(x), dtype=float)
    return x


def gradient_guided_sample(
    model: GaussianMixtureScoreModel,
    cost: Callable[[np.ndarray], tuple],
    weight: float,
    cfg: JM2DConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Reverse chain with the iterate shifted down the cost gradient.

    ``cost(x) -> (value, grad)`` must be defined at noisy inputs. The shift
    before the step at level i is weight * (1 - alpha_bar_i) * grad, i.e.
    the guidance scale anneals with the noise level.
    """
    rng_x = rng.spawn(2)[0]
    x = rng_x.standard_normal(model.dim)
    sched = cfg.schedule_x
    for i in range(cfg.steps, 0, -1):
        a_i = sched.alphas[i]
        _, grad = cost(x)
        grad = np.asarray(grad, dtype=float)
        if not np.all(np.isfinite(grad)):
            raise PotentialEvaluationError(f"non-finite cost gradient at x = {x!r}")
        x = x - weight * (1.0 - a_i) * grad
        score = gmm_noisy_score(model, x, a_i)
        x = reverse_step(x, score, a_i, sched.alphas[i - 1],
                         cfg.sigma.sigma(sched, i), rng_x)
    return x
