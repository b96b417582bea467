"""Joint sampling over the (x, k) pair by diffusion on both channels.

The sampler denoises a concatenated variable y = [x, k] where x follows the
generative prior's schedule and k follows its own. The joint score at each
level is estimated without gradients: clean candidates are constructed for
both channels (reverse-chain rollouts for x, a widened Gaussian proposal
for k), every candidate pair is weighted by V(x0, k0) * p_k(k0), and the
score is the self-normalized weighted average of the pairs' forward-kernel
(Tweedie) scores. Weights only matter up to a constant, so the potential
can encode hard constraints through exact zeros.

When every pair in a level's candidate set is infeasible the weights carry
no information; the estimator then falls back to the unweighted average
for the x channel and, for k, to the score of the chain's standard-normal
initialization marginal (-k). A zero k-score would not be neutral here:
the correction-free k update multiplies the iterate by
sqrt(alpha_prev / alpha_i) > 1, so zeros compound into an exponential
blow-up that permanently pushes the proposal outside any bounded prior's
support. Levels where the fallback fires are recorded in the diagnostics.
A final sample whose potential is zero is repaired by one budgeted
model-based optimization step over k.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .gmm import CleanEstimateConfig, GaussianMixtureScoreModel, estimate_clean
from .potentials import (
    InteractionPotential,
    ModelBasedPrior,
    evaluate_potential,
    postprocess_optimize,
    potential_matrix,
)
from .schedules import NoiseSchedule, StochasticityPolicy, reverse_step, tweedie_score


@dataclass
class JointSample:
    """State of the joint reverse chain at one level."""

    x: np.ndarray
    k: np.ndarray
    level: int


@dataclass(frozen=True)
class JM2DConfig:
    """Joint sampler configuration.

    n_x and n_k are the per-level candidate counts for the two channels;
    the two schedules must share the same step count. ``paired`` replaces
    the full product-set weighting with min(n_x, n_k) diagonal pairs — a
    cheap smoke-test mode that changes the estimator.
    """

    schedule_x: NoiseSchedule
    schedule_k: NoiseSchedule
    n_x: int = 128
    n_k: int = 128
    clean: CleanEstimateConfig = field(default_factory=CleanEstimateConfig)
    sigma: StochasticityPolicy = field(default_factory=StochasticityPolicy)
    postprocess_budget: int = 256
    paired: bool = False

    def __post_init__(self):
        if self.n_x < 1 or self.n_k < 1:
            raise ValueError("candidate counts must be >= 1")
        if self.schedule_x.steps != self.schedule_k.steps:
            raise ValueError("x and k schedules must share the same step count")

    @property
    def steps(self) -> int:
        return self.schedule_x.steps


@dataclass
class SamplerDiagnostics:
    """Per-run health record of the importance weights and the final pair."""

    ess: list = field(default_factory=list)
    weight_sums: list = field(default_factory=list)
    zero_weight_levels: int = 0
    final_potential: float = 0.0
    postprocess_invoked: bool = False
    feasible: bool = True

    def record_level(self, level: int, weights: np.ndarray, zero: bool):
        if zero:
            self.zero_weight_levels += 1
            self.ess.append(float("nan"))
            self.weight_sums.append(0.0)
        else:
            self.ess.append(effective_sample_size(weights))
            self.weight_sums.append(float(np.sum(weights)))

    def to_csv(self) -> str:
        """One row per level: level, ESS, weight_sum, zero_weight_flag."""
        buf = io.StringIO()
        buf.write("level,ess,weight_sum,zero_weight_flag\n")
        n = len(self.ess)
        for j, (e, s) in enumerate(zip(self.ess, self.weight_sums)):
            level = n - j
            flag = 1 if np.isnan(e) else 0
            buf.write(f"{level},{e:.6g},{s:.6g},{flag}\n")
        return buf.getvalue()


def effective_sample_size(weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 for non-negative weights."""
    w = np.asarray(weights, dtype=float).ravel()
    total = w.sum()
    if total <= 0.0:
        raise ValueError("effective sample size undefined for all-zero weights")
    return float(total * total / np.sum(w * w))


@dataclass
class JointScoreResult:
    score_x: np.ndarray
    score_k: np.ndarray
    weights: np.ndarray
    zero_weights: bool


def self_normalized_average(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Weighted average along axis 0; invariant to scaling of the weights."""
    total = np.sum(weights)
    return (weights / total) @ values


def sample_mc(
    i: int,
    xi: np.ndarray,
    ki: np.ndarray,
    model: GaussianMixtureScoreModel,
    cfg: JM2DConfig,
    rng_x: np.random.Generator,
    rng_k: np.random.Generator,
):
    """Clean candidate sets for both channels at level i.

    X: (n_x, dx) clean-sample estimates of x obtained from xi under the
    configured clean-estimate mode. K: (n_k, dk) draws from the widened
    proposal N(ki / sqrt(a_k), (1 / a_k - 1) I) at a_k = alpha_bar_k[i].
    """
    if i < 1:
        raise ValueError("sample_mc needs level i >= 1")
    X = estimate_clean(model, cfg.schedule_x, i, xi, cfg.clean, rng_x, n=cfg.n_x)
    a_k = cfg.schedule_k.alphas[i]
    ki = np.asarray(ki, dtype=float)
    spread = np.sqrt(1.0 / a_k - 1.0)
    K = ki / np.sqrt(a_k) + spread * rng_k.standard_normal((cfg.n_k, ki.shape[0]))
    return X, K


def joint_score(
    y: JointSample,
    X: np.ndarray,
    K: np.ndarray,
    pot: InteractionPotential,
    prior: ModelBasedPrior,
    cfg: JM2DConfig,
) -> JointScoreResult:
    """Importance-weighted joint score estimate at y.level.

    Candidate-pair weights are V(x0, k0) * p_k(k0) over the product set
    X x K (or the diagonal pairs in paired mode); the returned scores are
    the self-normalized weighted averages of the per-channel Tweedie
    scores. All-zero weights trigger the prior-following fallback.
    """
    if y.level < 1:
        raise ValueError("joint_score needs level >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    a_x = cfg.schedule_x.alphas[y.level]
    a_k = cfg.schedule_k.alphas[y.level]
    s_x = tweedie_score(X, y.x[None, :], a_x)  # (N, dx)
    s_k = tweedie_score(K, y.k[None, :], a_k)  # (M, dk)
    pk = prior.density(K)

    if cfg.paired:
        n = min(X.shape[0], K.shape[0])
        vmat, _, _ = potential_matrix(pot, X[:n], K[:n])
        weights = np.diag(vmat).copy() * pk[:n]
        if np.sum(weights) <= 0.0:
            return JointScoreResult(s_x.mean(axis=0), -y.k, weights, True)
        return JointScoreResult(
            self_normalized_average(weights, s_x[:n]),
            self_normalized_average(weights, s_k[:n]),
            weights,
            False,
        )

    vmat, _, _ = potential_matrix(pot, X, K)
    weights = vmat * pk[None, :]  # (N, M)
    total = np.sum(weights)
    if total <= 0.0:
        return JointScoreResult(s_x.mean(axis=0), -y.k, weights, True)
    row = weights.sum(axis=1) / total
    col = weights.sum(axis=0) / total
    return JointScoreResult(row @ s_x, col @ s_k, weights, False)


class SamplerTrace:
    """Optional per-level capture used by tests and diagnostics tooling."""

    def __init__(self):
        self.levels = []
        self.x = []
        self.k = []
        self.X_sets = []
        self.K_sets = []
        self.scores_x = []
        self.scores_k = []

    def record(self, level, x, k, X, K, score_x, score_k):
        self.levels.append(level)
        self.x.append(np.array(x))
        self.k.append(None if k is None else np.array(k))
        self.X_sets.append(np.array(X))
        self.K_sets.append(None if K is None else np.array(K))
        self.scores_x.append(np.array(score_x))
        self.scores_k.append(None if score_k is None else np.array(score_k))


def jm2d_sample(
    model: GaussianMixtureScoreModel,
    pot: InteractionPotential,
    prior: ModelBasedPrior,
    cfg: JM2DConfig,
    rng: np.random.Generator,
    trace: SamplerTrace | None = None,
):
    """Draw one compatible (x0, k0) pair by joint reverse diffusion.

    Both channels start from standard normal noise. Each level runs
    sample_mc, estimates the joint score, and denoises: the x channel with
    the full stochastic reverse step, the k channel with the correction-free
    deterministic variant. If the final pair has zero potential, one
    budgeted model-based optimization step repairs k.

    Returns (x0, k0, diagnostics). Channel randomness is split into
    independent child streams so the x stream is reproducible regardless
    of the k channel's draws.
    """
    rng_x, rng_k = rng.spawn(2)
    dx = model.dim
    dk = prior.dim
    x = rng_x.standard_normal(dx)
    k = rng_k.standard_normal(dk)
    diag = SamplerDiagnostics()
    sched_x, sched_k = cfg.schedule_x, cfg.schedule_k
    for i in range(cfg.steps, 0, -1):
        X, K = sample_mc(i, x, k, model, cfg, rng_x, rng_k)
        res = joint_score(JointSample(x, k, i), X, K, pot, prior, cfg)
        diag.record_level(i, res.weights, res.zero_weights)
        if trace is not None:
            trace.record(i, x, k, X, K, res.score_x, res.score_k)
        sigma = cfg.sigma.sigma(sched_x, i)
        x = reverse_step(x, res.score_x, sched_x.alphas[i], sched_x.alphas[i - 1],
                         sigma, rng_x)
        k = reverse_step(k, res.score_k, sched_k.alphas[i], sched_k.alphas[i - 1],
                         mbd_style=True)
    diag.final_potential = evaluate_potential(pot, x, k)
    if diag.final_potential == 0.0:
        diag.postprocess_invoked = True
        k, feasible = postprocess_optimize(pot, prior, x, rng_k,
                                           budget=cfg.postprocess_budget)
        diag.feasible = feasible
        diag.final_potential = evaluate_potential(pot, x, k)
    return x, k, diag
