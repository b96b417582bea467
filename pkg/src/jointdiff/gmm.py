"""Analytic Gaussian-mixture score model and clean-sample estimation.

The mixture plays the role of a pre-trained generative prior but with
exact noisy-marginal scores: perturbing a component N(mu, diag(v)) with the
forward kernel at level ``a`` gives N(sqrt(a) mu, a v + (1 - a)), so the
score of the noisy mixture density is available in closed form. That makes
every downstream Monte Carlo estimator testable against ground truth.

``estimate_clean`` implements the clean-sample approximations used when
evaluating potentials at intermediate noise levels: keep the noisy sample,
take the single-step Tweedie posterior mean, denoise ``u`` steps before the
Tweedie correction, or run the full reverse chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedules import NoiseSchedule, StochasticityPolicy, reverse_step, tweedie_score

CLEAN_MODES = ("noisy", "tweedie_only", "u_step", "full")


@dataclass(frozen=True)
class GaussianMixtureScoreModel:
    """Mixture of diagonal Gaussians with closed-form noisy scores.

    weights: (M,) positive, summing to 1.
    means: (M, d).
    variances: (M, d) per-component diagonal variances.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.asarray(self.variances, dtype=float)
        if v.ndim < 2:
            v = np.broadcast_to(np.atleast_1d(v)[:, None], m.shape).copy()
        if w.ndim != 1 or m.shape[0] != w.shape[0] or v.shape != m.shape:
            raise ValueError("inconsistent mixture shapes")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if np.any(v <= 0.0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "_log_weights", np.log(w))
        # shared isotropic variance enables a fast matmul evaluation path
        shared = float(v.flat[0])
        object.__setattr__(
            self, "_shared_var", shared if np.all(v == shared) else None
        )

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n points from the (clean) mixture."""
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[idx] + np.sqrt(self.variances[idx]) * z


def fit_kde(samples: np.ndarray, bandwidth: float) -> GaussianMixtureScoreModel:
    """Equal-weight kernel density estimate: one isotropic component per sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 1:
        raise ValueError("fit_kde needs at least one sample")
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    n, d = samples.shape
    return GaussianMixtureScoreModel(
        weights=np.full(n, 1.0 / n),
        means=samples,
        variances=np.full((n, d), bandwidth**2),
    )


def _noisy_params(model: GaussianMixtureScoreModel, alpha: float):
    means = math.sqrt(alpha) * model.means
    variances = alpha * model.variances + (1.0 - alpha)
    return means, variances


def _component_logpdfs(model, x2, alpha):
    """(N, M) log densities of the noisy components at the rows of x2."""
    m, v = _noisy_params(model, alpha)
    if model._shared_var is not None:
        var = alpha * model._shared_var + (1.0 - alpha)
        cross = x2 @ m.T  # (N, M)
        sq = (
            np.sum(x2 * x2, axis=1)[:, None]
            - 2.0 * cross
            + np.sum(m * m, axis=1)[None, :]
        )
        return -0.5 * sq / var - 0.5 * model.dim * math.log(2.0 * math.pi * var)
    diff = x2[:, None, :] - m[None, :, :]  # (N, M, d)
    return -0.5 * np.sum(diff * diff / v[None], axis=2) - 0.5 * np.sum(
        np.log(2.0 * math.pi * v), axis=1
    )[None, :]


def gmm_noisy_logpdf(model: GaussianMixtureScoreModel, xi: np.ndarray, alpha: float) -> np.ndarray:
    """Log density of the noisy mixture marginal at level alpha."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    xi = np.asarray(xi, dtype=float)
    x2 = np.atleast_2d(xi)
    logs = _component_logpdfs(model, x2, alpha) + model._log_weights[None, :]
    top = logs.max(axis=1)
    out = top + np.log(np.sum(np.exp(logs - top[:, None]), axis=1))
    return out[0] if xi.ndim == 1 else out


def gmm_noisy_score(model: GaussianMixtureScoreModel, xi: np.ndarray, alpha: float) -> np.ndarray:
    """Exact score of the noisy mixture marginal at level alpha.

    score(x) = sum_j r_j(x) * (m_j - x) / v_j with responsibilities
    r_j computed by log-sum-exp over the noisy components.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    xi = np.asarray(xi, dtype=float)
    x2 = np.atleast_2d(xi)
    logs = _component_logpdfs(model, x2, alpha) + model._log_weights[None, :]
    top = logs.max(axis=1, keepdims=True)
    resp = np.exp(logs - top)
    resp /= resp.sum(axis=1, keepdims=True)
    m, v = _noisy_params(model, alpha)
    if model._shared_var is not None:
        var = alpha * model._shared_var + (1.0 - alpha)
        score = (resp @ m - x2) / var
    else:
        score = np.einsum("nm,nmd->nd", resp, (m[None] - x2[:, None]) / v[None])
    return score[0] if xi.ndim == 1 else score


def reverse_chain(
    model: GaussianMixtureScoreModel,
    schedule: NoiseSchedule,
    start_level: int,
    xi: np.ndarray,
    sigma_policy: StochasticityPolicy,
    rng: np.random.Generator,
) -> np.ndarray:
    """Denoise from level start_level down to clean data with the model score.

    ``xi`` may be a single vector or an (n, d) batch of starting points;
    batch rows evolve as independent chains.
    """
    if not 1 <= start_level <= schedule.steps:
        raise ValueError("start_level must lie in [1, steps]")
    x = np.asarray(xi, dtype=float)
    for i in range(start_level, 0, -1):
        a_i = schedule.alphas[i]
        a_prev = schedule.alphas[i - 1]
        score = gmm_noisy_score(model, x, a_i)
        x = reverse_step(x, score, a_i, a_prev, sigma_policy.sigma(schedule, i), rng)
    return x


@dataclass(frozen=True)
class CleanEstimateConfig:
    """How to turn a noisy sample at level i into a clean-sample estimate."""

    mode: str = "full"
    u: int = 0

    def __post_init__(self):
        if self.mode not in CLEAN_MODES:
            raise ValueError(f"unknown clean-estimate mode: {self.mode!r}")
        if self.mode == "u_step" and self.u < 1:
            raise ValueError("u_step mode requires u >= 1")


def _tweedie_estimate(model, x, alpha):
    score = gmm_noisy_score(model, x, alpha)
    return (x + (1.0 - alpha) * score) / math.sqrt(alpha)


def estimate_clean(
    model: GaussianMixtureScoreModel,
    schedule: NoiseSchedule,
    i: int,
    xi: np.ndarray,
    cfg: CleanEstimateConfig,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """n clean-sample estimates from the noisy point xi at level i.

    Returns an (n, d) array. Deterministic modes (noisy, tweedie_only)
    produce n identical rows; u_step and full run n independent chains.
    """
    if i < 1:
        raise ValueError("estimate_clean needs level i >= 1")
    xi = np.asarray(xi, dtype=float)
    batch = np.broadcast_to(xi, (n,) + xi.shape).copy()
    if cfg.mode == "noisy":
        return batch
    if cfg.mode == "tweedie_only":
        return _tweedie_estimate(model, batch, schedule.alphas[i])
    sigma_policy = StochasticityPolicy(1.0)
    if cfg.mode == "u_step":
        steps = min(cfg.u, i)
        x = batch
        for level in range(i, i - steps, -1):
            a_i = schedule.alphas[level]
            a_prev = schedule.alphas[level - 1]
            score = gmm_noisy_score(model, x, a_i)
            x = reverse_step(x, score, a_i, a_prev,
                             sigma_policy.sigma(schedule, level), rng)
        reached = i - steps
        if reached == 0:
            return x
        return _tweedie_estimate(model, x, schedule.alphas[reached])
    return reverse_chain(model, schedule, i, batch, sigma_policy, rng)


def save_model(model: GaussianMixtureScoreModel, path) -> None:
    """Flat numeric serialization: header (M, d), weights, means, variances."""
    with open(path, "w") as fh:
        fh.write(f"{model.n_components} {model.dim}\n")
        fh.write(" ".join(repr(float(w)) for w in model.weights) + "\n")
        for row in model.means:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for row in model.variances:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_model(path) -> GaussianMixtureScoreModel:
    with open(path) as fh:
        tokens = fh.read().split()
    m, d = int(tokens[0]), int(tokens[1])
    vals = np.array([float(t) for t in tokens[2:]])
    if vals.size != m + 2 * m * d:
        raise ValueError("model file has the wrong number of values")
    weights = vals[:m]
    means = vals[m:m + m * d].reshape(m, d)
    variances = vals[m + m * d:].reshape(m, d)
    return GaussianMixtureScoreModel(weights, means, variances)
